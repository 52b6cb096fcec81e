"""SPD matrices under the affine-invariant metric ``<U, V>_W = tr(W^-1 U W^-1 V)``.

Every matrix function goes through a symmetric eigendecomposition; the
helpers accept stacks of shape ``(..., r, r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import DEFAULT_TOLERANCES, DomainError, Manifold, ManifoldDescriptor

SYMMETRY_TOL = 1e-8
METRIC_TENSOR_MAX_SIZE = 8


def sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _check_symmetric(S):
    S = np.asarray(S, dtype=float)
    if S.ndim < 2 or S.shape[-1] != S.shape[-2]:
        raise DomainError(f"expected square matrices, got shape {S.shape}")
    asym = np.abs(S - np.swapaxes(S, -1, -2)).max(initial=0.0)
    if asym > SYMMETRY_TOL * max(1.0, np.abs(S).max(initial=0.0)):
        raise DomainError(f"matrix is not symmetric (asymmetry {asym:.3g})")
    return sym(S)


def _apply(vals, vecs, fvals):
    out = (vecs * fvals[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return sym(out)


def _eigh_pd(S):
    vals, vecs = np.linalg.eigh(_check_symmetric(S))
    if np.any(vals <= 0):
        raise DomainError("matrix is not positive definite")
    return vals, vecs


def spd_expm(S):
    """Principal matrix exponential of a symmetric matrix (or stack)."""
    vals, vecs = np.linalg.eigh(_check_symmetric(S))
    return _apply(vals, vecs, np.exp(vals))


def spd_logm(S):
    """Principal matrix logarithm of an SPD matrix (or stack)."""
    vals, vecs = _eigh_pd(S)
    return _apply(vals, vecs, np.log(vals))


def spd_sqrtm(S):
    vals, vecs = _eigh_pd(S)
    return _apply(vals, vecs, np.sqrt(vals))


def spd_invsqrtm(S):
    vals, vecs = _eigh_pd(S)
    return _apply(vals, vecs, 1.0 / np.sqrt(vals))


@dataclass(frozen=True)
class SpdKernelCache:
    """Eigendecomposition of one SPD point and the matrix functions derived from it."""

    eigvals: np.ndarray
    eigvecs: np.ndarray
    sqrt: np.ndarray
    invsqrt: np.ndarray
    inv: np.ndarray
    log: np.ndarray

    @classmethod
    def from_matrix(cls, W) -> "SpdKernelCache":
        vals, vecs = _eigh_pd(W)
        return cls(
            eigvals=vals,
            eigvecs=vecs,
            sqrt=_apply(vals, vecs, np.sqrt(vals)),
            invsqrt=_apply(vals, vecs, 1.0 / np.sqrt(vals)),
            inv=_apply(vals, vecs, 1.0 / vals),
            log=_apply(vals, vecs, np.log(vals)),
        )

    def reconstruct(self):
        return _apply(self.eigvals, self.eigvecs, self.eigvals)


class SPD(Manifold):
    """Manifold of ``r x r`` symmetric positive definite matrices.

    Tangent coordinates use the Frobenius-orthonormal symmetric basis
    ``E_ii`` and ``(E_ij + E_ji)/sqrt(2)`` for ``i < j``, enumerated row-major
    over the upper triangle.
    """

    injectivity_radius = math.inf

    def __init__(self, size: int, tol=DEFAULT_TOLERANCES):
        if size < 1:
            raise DomainError("matrix size must be >= 1")
        self.size = int(size)
        self.tol = tol
        self.descriptor = ManifoldDescriptor(
            intrinsic_dim=self.size * (self.size + 1) // 2,
            ambient_shape=(self.size, self.size),
            injectivity_note="Hadamard manifold: Exp is a global diffeomorphism",
        )
        self._iu = np.triu_indices(self.size)
        offdiag = self._iu[0] != self._iu[1]
        self._coord_scale = np.where(offdiag, math.sqrt(2.0), 1.0)

    def __repr__(self):
        return f"SPD(size={self.size})"

    def _shape_check(self, A, what):
        if np.shape(A) != (self.size, self.size):
            raise DomainError(f"{what} must have shape ({self.size}, {self.size}), got {np.shape(A)}")

    def check_point(self, W):
        self._shape_check(W, "SPD point")
        W = np.asarray(W, dtype=float)
        scale = max(1.0, np.abs(W).max())
        if np.abs(W - W.T).max() > self.tol.point * scale:
            raise DomainError("SPD point is not symmetric")
        if np.linalg.eigvalsh(W)[0] <= self.tol.point:
            raise DomainError("SPD point is not positive definite")

    def check_tangent(self, W, U):
        self._shape_check(U, "tangent vector")
        U = np.asarray(U, dtype=float)
        if np.abs(U - U.T).max() > self.tol.tangent * max(1.0, np.abs(U).max()):
            raise DomainError("tangent vector is not symmetric")

    def cache(self, W) -> SpdKernelCache:
        return SpdKernelCache.from_matrix(W)

    def inner(self, W, U, V):
        Winv = np.linalg.inv(W)
        A = Winv @ U
        B = Winv @ V
        return float(np.sum(A * B.T))

    def norm(self, W, U):
        c = self.cache(W)
        return float(np.linalg.norm(c.invsqrt @ U @ c.invsqrt))

    def metric_tensor(self, W):
        if self.size > METRIC_TENSOR_MAX_SIZE:
            raise DomainError(
                f"explicit metric tensor only provided for size <= {METRIC_TENSOR_MAX_SIZE}"
            )
        return super().metric_tensor(W)

    def metric_lower_bound(self, W):
        lmax = np.linalg.eigvalsh(W)[-1]
        return float(1.0 / lmax**2)

    def egrad_to_rgrad(self, W, eg):
        eg = np.asarray(eg, dtype=float)
        if eg.shape != np.shape(W):
            raise DomainError(f"ambient gradient has shape {eg.shape}, expected {np.shape(W)}")
        return sym(W @ sym(eg) @ W)

    def exp(self, W, U, cache=None):
        if not np.any(U):
            return np.array(W, dtype=float, copy=True)
        c = cache or self.cache(W)
        # the congruence is symmetric only up to cond(W) * eps
        S = sym(c.invsqrt @ _check_symmetric(U) @ c.invsqrt)
        return sym(c.sqrt @ spd_expm(S) @ c.sqrt)

    def log(self, W, X, cache=None):
        if np.array_equal(W, X):
            return np.zeros_like(np.asarray(W, dtype=float))
        c = cache or self.cache(W)
        return sym(c.sqrt @ spd_logm(sym(c.invsqrt @ _check_symmetric(X) @ c.invsqrt)) @ c.sqrt)

    def dist(self, W, X):
        if np.array_equal(W, X):
            return 0.0
        c = self.cache(W)
        vals = np.linalg.eigvalsh(sym(c.invsqrt @ X @ c.invsqrt))
        return float(np.sqrt(np.sum(np.log(vals) ** 2)))

    def dists(self, W, Xs):
        """Distances from ``W`` to every matrix in the stack ``Xs``."""
        c = self.cache(W)
        vals = np.linalg.eigvalsh(sym(c.invsqrt @ Xs @ c.invsqrt))
        return np.sqrt(np.sum(np.log(vals) ** 2, axis=-1))

    def logs_whitened(self, W, Xs, cache=None):
        """``logm(W^-1/2 X_i W^-1/2)`` for a stack of points."""
        c = cache or self.cache(W)
        return spd_logm(sym(c.invsqrt @ Xs @ c.invsqrt))

    def vec(self, W, U):
        U = np.asarray(U, dtype=float)
        return U[self._iu] * self._coord_scale

    def unvec(self, W, c):
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise DomainError(f"expected {self.dim} coordinates, got shape {c.shape}")
        U = np.zeros((self.size, self.size))
        U[self._iu] = c / self._coord_scale
        return U + np.triu(U, 1).T

    def orthonormal_unvec(self, W, c):
        s = spd_sqrtm(W)
        return sym(s @ self.unvec(W, c) @ s)

    def random_point(self, rng, scale: float = 0.5):
        A = rng.standard_normal((self.size, self.size))
        return spd_expm(scale * sym(A))


def frechet_loss(W, X) -> float:
    """Squared affine-invariant distance ``dist(W, X)^2``."""
    r = np.shape(W)[0]
    return SPD(r).dist(W, X) ** 2


def frechet_rgrad(W, X, alt_conventions: bool = False):
    """Riemannian gradient of :func:`frechet_loss` at ``W``.

    By default returns the exact gradient ``-2 Log_W(X)``, whose metric norm
    is ``2 dist(W, X)``. With ``alt_conventions=True`` returns
    ``W logm(W^-1 X)``, evaluated through the similar symmetric form
    ``W^1/2 logm(W^-1/2 X W^-1/2) W^1/2``; that expression equals ``Log_W(X)``
    and points towards ``X``.
    """
    r = np.shape(W)[0]
    log = SPD(r).log(W, X)
    return log if alt_conventions else -2.0 * log


def frechet_lipschitz(diameter, alt_conventions: bool = False) -> float:
    if diameter is None:
        raise DomainError("a diameter bound is required")
    if not diameter > 0:
        raise DomainError("diameter must be positive")
    return float(diameter) if alt_conventions else 2.0 * float(diameter)


class FrechetObjective:
    """Mean squared affine-invariant distance to a set of SPD samples.

    Parameters
    ----------
    samples : array of shape (n, r, r)
    diameter : float, optional
        Declared diameter of the sample set. Checked against all pairwise
        distances when ``check_diameter`` is true.
    alt_conventions : bool
        Use the half-scale gradient ``-Log_W(X)`` with ``L0 = diameter``
        instead of the exact ``-2 Log_W(X)`` with ``L0 = 2 diameter``.
    """

    def __init__(self, samples, diameter=None, alt_conventions=False, check_diameter=True):
        Xs = np.asarray(samples, dtype=float)
        if Xs.ndim == 2:
            Xs = Xs[None]
        if Xs.ndim != 3 or Xs.shape[1] != Xs.shape[2] or Xs.shape[0] < 1:
            raise DomainError("samples must be a nonempty (n, r, r) stack")
        self.manifold = SPD(Xs.shape[1])
        for X in Xs:
            self.manifold.check_point(X)
        self.samples = sym(Xs)
        self.diameter = diameter
        self.alt_conventions = alt_conventions
        if diameter is not None and check_diameter:
            for i in range(len(Xs) - 1):
                far = self.manifold.dists(Xs[i], Xs[i + 1 :]).max()
                if far > diameter + 1e-8:
                    raise DomainError(
                        f"pairwise distance {far:.6g} exceeds the declared diameter {diameter}"
                    )

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def loss(self, W) -> float:
        return float(np.mean(self.manifold.dists(W, self.samples) ** 2))

    def loss_sample(self, W, i: int) -> float:
        return frechet_loss(W, self.samples[i])

    def rgrad(self, W, idx=None):
        Xs = self.samples if idx is None else self.samples[idx]
        c = self.manifold.cache(W)
        mean_log = self.manifold.logs_whitened(W, Xs, cache=c).mean(axis=0)
        scale = -1.0 if self.alt_conventions else -2.0
        return sym(scale * (c.sqrt @ mean_log @ c.sqrt))

    def sample_rgrads(self, W) -> np.ndarray:
        c = self.manifold.cache(W)
        L = self.manifold.logs_whitened(W, self.samples, cache=c)
        scale = -1.0 if self.alt_conventions else -2.0
        return sym(scale * (c.sqrt @ L @ c.sqrt))

    def lipschitz(self) -> float:
        return frechet_lipschitz(self.diameter, alt_conventions=self.alt_conventions)
