"""Unit sphere S^d embedded in R^{d+1} with the Euclidean metric."""

from __future__ import annotations

import math

import numpy as np

from .base import DEFAULT_TOLERANCES, DomainError, Manifold, ManifoldDescriptor


class Sphere(Manifold):
    """The sphere ``{w in R^{d+1} : ||w|| = 1}`` of intrinsic dimension ``d``.

    Tangent coordinates use the last ``d`` columns of the Householder
    reflection sending ``w`` to a multiple of ``e_0``. That basis is
    orthonormal, so the metric tensor in these coordinates is the identity.
    """

    def __init__(self, ambient_dim: int, tol=DEFAULT_TOLERANCES):
        if ambient_dim < 2:
            raise DomainError("the sphere needs an ambient dimension of at least 2")
        self.ambient_dim = int(ambient_dim)
        self.tol = tol
        self.descriptor = ManifoldDescriptor(
            intrinsic_dim=self.ambient_dim - 1,
            ambient_shape=(self.ambient_dim,),
            injectivity_note="Log defined for w' != -w; injectivity radius pi",
        )

    injectivity_radius = math.pi

    def __repr__(self):
        return f"Sphere(ambient_dim={self.ambient_dim})"

    def check_point(self, w):
        w = np.asarray(w)
        if w.shape != (self.ambient_dim,):
            raise DomainError(f"sphere point must have shape ({self.ambient_dim},), got {w.shape}")
        if not abs(np.linalg.norm(w) - 1.0) <= self.tol.point:
            raise DomainError("point is not on the unit sphere")

    def check_tangent(self, w, u):
        u = np.asarray(u)
        if u.shape != (self.ambient_dim,):
            raise DomainError(f"tangent vector must have shape ({self.ambient_dim},), got {u.shape}")
        if not abs(w @ u) <= self.tol.tangent * (1.0 + np.linalg.norm(u)):
            raise DomainError("vector is not tangent to the sphere at w")

    def inner(self, w, u, v):
        return float(u @ v)

    def norm(self, w, u):
        return float(np.linalg.norm(u))

    def metric_tensor(self, w):
        return np.eye(self.dim)

    def metric_lower_bound(self, w):
        return 1.0

    def proj(self, w, x):
        return x - (w @ x) * w

    def egrad_to_rgrad(self, w, eg):
        eg = np.asarray(eg, dtype=float)
        if eg.shape != w.shape:
            raise DomainError(f"ambient gradient has shape {eg.shape}, expected {w.shape}")
        return self.proj(w, eg)

    def exp(self, w, u):
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return np.array(w, dtype=float, copy=True)
        # sinc(x / pi) = sin(x) / x, finite at x = 0
        out = math.cos(nu) * w + np.sinc(nu / math.pi) * u
        return out / np.linalg.norm(out)

    def _angle(self, w, x):
        # symmetric in (w, x) and accurate for both tiny and near-pi angles
        return 2.0 * math.atan2(np.linalg.norm(w - x), np.linalg.norm(w + x))

    def log(self, w, x):
        if w @ x <= -1.0 + 1e-10:
            raise DomainError("log undefined: points are antipodal")
        if np.array_equal(w, x):
            return np.zeros(self.ambient_dim)
        v = self.proj(w, x)
        v = self.proj(w, v)
        theta = self._angle(w, x)
        nv = np.linalg.norm(v)
        if theta < 1e-8:
            return v
        return (theta / nv) * v

    def dist(self, w, x):
        return self._angle(w, x)

    def _householder(self, w):
        s = 1.0 if w[0] >= 0 else -1.0
        v = np.array(w, dtype=float, copy=True)
        v[0] += s
        return v, v @ v

    def vec(self, w, u):
        v, vv = self._householder(w)
        return u[1:] - (2.0 * (v @ u) / vv) * v[1:]

    def unvec(self, w, c):
        c = np.asarray(c, dtype=float)
        v, vv = self._householder(w)
        out = np.empty(self.ambient_dim)
        out[0] = 0.0
        out[1:] = c
        return out - (2.0 * (v[1:] @ c) / vv) * v

    orthonormal_unvec = unvec

    def random_point(self, rng):
        x = rng.standard_normal(self.ambient_dim)
        return x / np.linalg.norm(x)

    def retract(self, w, u):
        """Metric-projection retraction ``(w + u) / ||w + u||``."""
        x = w + u
        return x / np.linalg.norm(x)


class PcaObjective:
    """Leading-eigenvector loss ``F(w) = -(1/n) sum_i (w^T z_i)^2`` on the sphere.

    Parameters
    ----------
    samples : ndarray of shape (n, d+1)
        Zero-centred data rows.
    """

    def __init__(self, samples, check_centered: bool = False):
        Z = np.asarray(samples, dtype=float)
        if Z.ndim != 2 or Z.shape[0] < 1:
            raise DomainError("samples must be a nonempty (n, d+1) array")
        if check_centered:
            scale = max(np.abs(Z).max(), 1e-300)
            if np.abs(Z.mean(axis=0)).max() > 1e-8 * scale:
                raise DomainError("samples are not zero-centred")
        self.samples = Z
        self.manifold = Sphere(Z.shape[1])
        self._cov = None

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        if self._cov is None:
            self._cov = self.samples.T @ self.samples / self.n
        return self._cov

    def loss(self, w) -> float:
        return -float(w @ self.covariance @ w)

    def loss_sample(self, w, i: int) -> float:
        return pca_loss(w, self.samples[i])

    def egrad(self, w, idx=None):
        Z = self.samples if idx is None else self.samples[idx]
        return -2.0 * (Z.T @ (Z @ w)) / Z.shape[0]

    def rgrad(self, w, idx=None):
        return self.manifold.proj(w, self.egrad(w, idx))

    def sample_rgrads(self, w) -> np.ndarray:
        """Per-sample Riemannian gradients, shape (n, d+1)."""
        Z = self.samples
        a = Z @ w
        G = -2.0 * a[:, None] * Z
        return G - np.outer(G @ w, w)

    def lipschitz(self, alt_conventions: bool = False) -> float:
        return pca_lipschitz_estimate(self.samples, alt_conventions=alt_conventions)


def pca_loss(w, z) -> float:
    return -float(w @ z) ** 2


def pca_rgrad(w, z):
    """Riemannian gradient ``-2 (I - w w^T) z z^T w`` of :func:`pca_loss`."""
    z = np.asarray(z, dtype=float)
    g = -2.0 * float(z @ w) * z
    return g - (g @ w) * w


def pca_lipschitz_estimate(samples, alt_conventions: bool = False) -> float:
    """Geodesic Lipschitz constant of the per-sample PCA loss.

    Returns ``2 max_i ||z_i||^2`` by default. ``alt_conventions=True`` returns
    ``max_i ||z_i||^2``.
    """
    Z = np.asarray(samples, dtype=float)
    if Z.size == 0:
        raise DomainError("cannot estimate a Lipschitz constant from an empty dataset")
    if Z.ndim == 1:
        Z = Z[None, :]
    theta = float(np.max(np.einsum("ij,ij->i", Z, Z)))
    return theta if alt_conventions else 2.0 * theta
