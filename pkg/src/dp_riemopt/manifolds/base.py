"""Geometry-agnostic manifold interface and shared helpers.

Concrete geometries subclass :class:`Manifold` and work on raw numpy arrays
(unit vectors for the sphere, symmetric matrices for SPD). The optimizer and
samplers call those array-level methods directly. :class:`ManifoldPoint` and
:class:`TangentVector` are validated wrappers for callers who want the base
point carried along with every tangent vector; the free functions at the
bottom of this module accept those wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DomainError(ValueError):
    """An input lies outside the domain of a geometric or privacy operation."""


class ConfigurationError(ValueError):
    """Inconsistent optimizer or experiment configuration."""


@dataclass(frozen=True)
class Tolerances:
    """Validity thresholds shared by every geometry.

    ``point`` bounds the point invariants, ``tangent`` the tangency checks and
    ``roundtrip`` the Exp/Log consistency used by the tests.
    """

    point: float = 1e-12
    tangent: float = 1e-10
    roundtrip: float = 1e-8


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class ManifoldDescriptor:
    intrinsic_dim: int
    ambient_shape: tuple
    injectivity_note: str = ""

    def __post_init__(self):
        if self.intrinsic_dim < 1:
            raise DomainError("intrinsic dimension must be >= 1")


@dataclass(frozen=True)
class DomainProfile:
    """Constants describing the region the iterates are assumed to live in.

    Parameters
    ----------
    diameter : float
        Diameter bound of the domain.
    kappa_min : float
        Lower bound on the sectional curvature.
    c_l : float
        Lower bound on the metric tensor, ``G_w >= c_l I``.
    L0 : float
        Geodesic Lipschitz constant of the per-sample loss.
    L1, beta, tau : float, optional
        Geodesic smoothness, strong convexity and PL constants.
    """

    diameter: float = 0.0
    kappa_min: float = 0.0
    c_l: float = 1.0
    L0: float = 1.0
    L1: Optional[float] = None
    beta: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        if self.diameter < 0:
            raise DomainError("diameter must be nonnegative")
        if not self.c_l > 0:
            raise DomainError("c_l must be positive")
        if not self.L0 > 0:
            raise DomainError("L0 must be positive")
        for name in ("L1", "beta", "tau"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise DomainError(f"{name} must be positive when given")

    @property
    def curvature_constant(self) -> float:
        return curvature_constant(self.kappa_min, self.diameter)


class Manifold:
    """Array-level interface implemented by every geometry."""

    descriptor: ManifoldDescriptor
    tol: Tolerances = DEFAULT_TOLERANCES

    @property
    def dim(self) -> int:
        return self.descriptor.intrinsic_dim

    # validation
    def check_point(self, w) -> None:
        raise NotImplementedError

    def check_tangent(self, w, u) -> None:
        raise NotImplementedError

    # metric
    def inner(self, w, u, v) -> float:
        raise NotImplementedError

    def norm(self, w, u) -> float:
        return math.sqrt(max(self.inner(w, u, u), 0.0))

    def metric_tensor(self, w) -> np.ndarray:
        """Metric in the coordinates produced by :meth:`vec`."""
        d = self.dim
        basis = [self.unvec(w, e) for e in np.eye(d)]
        G = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                G[i, j] = G[j, i] = self.inner(w, basis[i], basis[j])
        return G

    def metric_lower_bound(self, w) -> float:
        return float(np.linalg.eigvalsh(self.metric_tensor(w))[0])

    # geodesics
    def exp(self, w, u):
        raise NotImplementedError

    def log(self, w, x):
        raise NotImplementedError

    def dist(self, w, x) -> float:
        return self.norm(w, self.log(w, x))

    def egrad_to_rgrad(self, w, eg):
        raise NotImplementedError

    # coordinates
    def vec(self, w, u) -> np.ndarray:
        raise NotImplementedError

    def unvec(self, w, c):
        raise NotImplementedError

    def orthonormal_unvec(self, w, c):
        """Tangent vector whose metric norm equals ``||c||_2``.

        The linear map from ``R^d`` is an isometry onto ``T_w M``, so pushing
        i.i.d. ``N(0, s^2)`` coordinates through it yields the tangent-space
        Gaussian at ``w``.
        """
        raise NotImplementedError

    def zero_tangent(self, w):
        return np.zeros_like(w)

    def random_point(self, rng):
        raise NotImplementedError

    def random_tangent(self, w, rng, scale: float = 1.0):
        return self.orthonormal_unvec(w, scale * rng.standard_normal(self.dim))

    def geodesic(self, a, b, t: float):
        if t == 1:
            return np.array(b, dtype=float, copy=True)
        if t == 0 or np.array_equal(a, b):
            return np.array(a, dtype=float, copy=True)
        return self.exp(a, t * self.log(a, b))


def curvature_constant(kappa_min: float, diameter: float) -> float:
    """Distortion factor of the trigonometric distance bound.

    Equals 1 on nonnegatively curved domains and ``x / tanh(x)`` with
    ``x = sqrt(|kappa_min|) * diameter`` otherwise.
    """
    if not diameter > 0:
        raise DomainError("diameter must be positive")
    if kappa_min >= 0:
        return 1.0
    x = math.sqrt(-kappa_min) * diameter
    if x < 1e-4:
        return 1.0 + x * x / 3.0
    return x / math.tanh(x)


# --- validated wrappers -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    manifold: Manifold
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)
        self.manifold.check_point(arr)

    @property
    def geometry(self) -> ManifoldDescriptor:
        return self.manifold.descriptor

    def same_as(self, other: "ManifoldPoint") -> bool:
        return self is other or (
            self.manifold is other.manifold and np.array_equal(self.coords, other.coords)
        )


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ManifoldPoint
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)
        self.base.manifold.check_tangent(self.base.coords, arr)

    @property
    def manifold(self) -> Manifold:
        return self.base.manifold


def _same_base(xi: TangentVector, zeta: TangentVector) -> None:
    if not xi.base.same_as(zeta.base):
        raise DomainError("tangent vectors live at different base points")


def inner(xi: TangentVector, zeta: TangentVector) -> float:
    _same_base(xi, zeta)
    return xi.manifold.inner(xi.base.coords, xi.coords, zeta.coords)


def norm(xi: TangentVector) -> float:
    return xi.manifold.norm(xi.base.coords, xi.coords)


def exp_map(w: ManifoldPoint, xi: TangentVector) -> ManifoldPoint:
    if not w.same_as(xi.base):
        raise DomainError("tangent vector is not attached to w")
    return ManifoldPoint(w.manifold, w.manifold.exp(w.coords, xi.coords))


def log_map(w: ManifoldPoint, w2: ManifoldPoint) -> TangentVector:
    if w.manifold is not w2.manifold:
        raise DomainError("points belong to different geometries")
    return TangentVector(w, w.manifold.log(w.coords, w2.coords))


def dist(w: ManifoldPoint, w2: ManifoldPoint) -> float:
    if w.manifold is not w2.manifold:
        raise DomainError("points belong to different geometries")
    return w.manifold.dist(w.coords, w2.coords)


def egrad_to_rgrad(w: ManifoldPoint, eg) -> TangentVector:
    eg = np.asarray(eg, dtype=float)
    if eg.shape != w.coords.shape:
        raise DomainError(f"ambient gradient has shape {eg.shape}, expected {w.coords.shape}")
    return TangentVector(w, w.manifold.egrad_to_rgrad(w.coords, eg))


def vectorize(xi: TangentVector) -> np.ndarray:
    return xi.manifold.vec(xi.base.coords, xi.coords)


def unvectorize(w: ManifoldPoint, coords) -> TangentVector:
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (w.manifold.dim,):
        raise DomainError(f"expected {w.manifold.dim} coordinates, got shape {coords.shape}")
    return TangentVector(w, w.manifold.unvec(w.coords, coords))


def metric_tensor(w: ManifoldPoint) -> np.ndarray:
    return w.manifold.metric_tensor(w.coords)


def geodesic_average_step(bar: ManifoldPoint, nxt: ManifoldPoint, weight: float) -> ManifoldPoint:
    """Move ``bar`` a fraction ``weight`` of the way along the geodesic to ``nxt``."""
    if not 0 < weight <= 1:
        raise DomainError("weight must lie in (0, 1]")
    return ManifoldPoint(bar.manifold, bar.manifold.geodesic(bar.coords, nxt.coords, weight))
