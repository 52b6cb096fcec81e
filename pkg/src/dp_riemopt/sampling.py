"""Samplers for tangent-space noise.

``tangent_gaussian`` draws exactly from ``N_w(0, sigma^2)`` by pushing i.i.d.
normal coordinates through a metric-orthonormal basis of ``T_w M``. The
random-walk Metropolis-Hastings samplers target the same density (and the
intrinsic Laplace density used by output perturbation) and serve as a
cross-check.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .manifolds.base import DomainError, ManifoldPoint, TangentVector
from .manifolds.spd import SPD

logger = logging.getLogger(__name__)

STREAM_IDS = ("noise", "subsample", "init", "output-select")


class RngStream:
    """Named, independently seeded substream of a run's randomness.

    Identical ``(seed, stream_id)`` pairs replay identical sequences; the
    four stream ids map to distinct ``SeedSequence`` spawn keys.
    """

    def __init__(self, seed: int, stream_id: str):
        if stream_id not in STREAM_IDS:
            raise ValueError(f"unknown stream id {stream_id!r}; expected one of {STREAM_IDS}")
        self.seed = int(seed)
        self.stream_id = stream_id
        ss = np.random.SeedSequence(self.seed, spawn_key=(STREAM_IDS.index(stream_id),))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"

    @property
    def state(self) -> dict:
        return self.generator.bit_generator.state


def make_streams(seed: int) -> dict:
    return {sid: RngStream(seed, sid) for sid in STREAM_IDS}


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class MhParams:
    proposal_std: float | None = None  # None: use the target scale sigma
    burn_in: int = 500
    thinning: int = 10

    def __post_init__(self):
        if self.proposal_std is not None and not self.proposal_std > 0:
            raise DomainError("proposal_std must be positive")
        if self.burn_in < 0:
            raise DomainError("burn_in must be nonnegative")
        if self.thinning < 1:
            raise DomainError("thinning must be >= 1")


def _check_sigma(sigma):
    if not sigma > 0:
        raise DomainError("sigma must be positive")


def tangent_gaussian(manifold, w, sigma: float, rng):
    """Exact draw from the tangent-space Gaussian ``N_w(0, sigma^2)`` (array level)."""
    _check_sigma(sigma)
    gen = as_generator(rng)
    return manifold.orthonormal_unvec(w, sigma * gen.standard_normal(manifold.dim))


def coordinate_map(manifold, w) -> np.ndarray:
    """Matrix ``B`` with ``vec(orthonormal_unvec(w, c)) = B c``."""
    eye = np.eye(manifold.dim)
    return np.stack([manifold.vec(w, manifold.orthonormal_unvec(w, e)) for e in eye], axis=1)


def tangent_gaussian_coords(manifold, w, sigma: float, rng, n: int) -> np.ndarray:
    """``n`` exact draws in vectorized coordinates, shape ``(n, d)``.

    Consumes the stream exactly as ``n`` successive calls of
    :func:`tangent_gaussian` would.
    """
    _check_sigma(sigma)
    gen = as_generator(rng)
    B = coordinate_map(manifold, w)
    return (sigma * gen.standard_normal((n, manifold.dim))) @ B.T


def sample_tangent_gaussian(w: ManifoldPoint, sigma: float, rng) -> TangentVector:
    return TangentVector(w, tangent_gaussian(w.manifold, w.coords, sigma, rng))


def _random_walk(logp, x0, step, n_keep, params: MhParams, gen):
    x = np.array(x0, dtype=float)
    lp = logp(x)
    d = x.size
    total = params.burn_in + n_keep * params.thinning
    out = np.empty((n_keep, d))
    accepted = 0
    k = 0
    for i in range(total):
        prop = x + step * gen.standard_normal(d)
        lq = logp(prop)
        if math.log(gen.random()) < lq - lp:
            x, lp = prop, lq
            accepted += 1
        j = i + 1 - params.burn_in
        if j > 0 and j % params.thinning == 0:
            out[k] = x
            k += 1
    rate = accepted / total
    if not 0.2 <= rate <= 0.6:
        logger.warning("Metropolis-Hastings acceptance rate %.3f outside [0.2, 0.6]", rate)
    return out, rate


def tangent_gaussian_mh_chain(manifold, w, sigma, rng, params: MhParams = MhParams(), n_samples=1):
    """Random-walk MH on vectorized coordinates targeting ``exp(-c^T G_w c / (2 sigma^2))``.

    Returns
    -------
    draws : ndarray of shape (n_samples, d)
        Vectorized tangent coordinates (see ``manifold.vec``).
    acceptance : float
    """
    _check_sigma(sigma)
    gen = as_generator(rng)
    G = manifold.metric_tensor(w)
    inv2s2 = 0.5 / sigma**2

    def logp(c):
        return -inv2s2 * (c @ G @ c)

    step = params.proposal_std if params.proposal_std is not None else sigma
    return _random_walk(logp, np.zeros(manifold.dim), step, n_samples, params, gen)


def sample_tangent_gaussian_mh(w: ManifoldPoint, sigma: float, rng, params: MhParams = MhParams()) -> TangentVector:
    draws, _ = tangent_gaussian_mh_chain(w.manifold, w.coords, sigma, rng, params, n_samples=1)
    return TangentVector(w, w.manifold.unvec(w.coords, draws[0]))


def intrinsic_laplace_chain(manifold: SPD, footprint, sigma, rng, params: MhParams = MhParams(), n_samples=1):
    """MH draws from the density ``exp(-dist(X, footprint) / sigma)`` on SPD.

    The walk runs on metric-orthonormal tangent coordinates ``u`` at the
    footprint and maps through ``Exp``, so ``dist(X, footprint) = ||u||``.
    The density is taken with respect to Lebesgue measure on those
    coordinates (no volume correction), which keeps it normalisable for
    every ``sigma``.

    Returns the sampled points, shape (n_samples, r, r), and the acceptance rate.
    """
    _check_sigma(sigma)
    gen = as_generator(rng)

    def logp(u):
        return -math.sqrt(u @ u) / sigma

    step = params.proposal_std if params.proposal_std is not None else sigma
    coords, rate = _random_walk(logp, np.zeros(manifold.dim), step, n_samples, params, gen)
    cache = manifold.cache(footprint)
    pts = np.empty((n_samples, manifold.size, manifold.size))
    for i, u in enumerate(coords):
        V = manifold.unvec(footprint, u)
        pts[i] = manifold.exp(footprint, cache.sqrt @ V @ cache.sqrt, cache=cache)
    return pts, rate


def sample_intrinsic_laplace_spd(footprint: ManifoldPoint, sigma: float, rng, params: MhParams = MhParams()) -> ManifoldPoint:
    if not isinstance(footprint.manifold, SPD):
        raise DomainError("the intrinsic Laplace sampler is defined on SPD manifolds")
    pts, _ = intrinsic_laplace_chain(footprint.manifold, footprint.coords, sigma, rng, params)
    return ManifoldPoint(footprint.manifold, pts[0])
