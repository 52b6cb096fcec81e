"""Differentially private Riemannian (stochastic) gradient descent.

Each iteration draws a minibatch without replacement, averages the
per-sample Riemannian gradients, adds tangent-space Gaussian noise at the
current iterate and steps along the exponential map. The private output is
the last iterate, a uniformly chosen iterate, or a geodesic running average.

Objectives are duck-typed: they expose ``manifold``, ``n``, ``loss(w)`` and
``rgrad(w, idx=None)`` (mean Riemannian gradient over the rows ``idx``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .accounting import MomentEntry, MomentsLedger, NoiseCalibration, PrivacyBudget
from .manifolds.base import ConfigurationError, DomainError, DomainProfile
from .manifolds.sphere import Sphere
from .manifolds.spd import SPD
from .sampling import (
    MhParams,
    as_generator,
    intrinsic_laplace_chain,
    make_streams,
    tangent_gaussian,
    tangent_gaussian_mh_chain,
)

logger = logging.getLogger(__name__)

SCHEDULES = ("gconvex", "strongly_convex", "pl", "nonconvex", "constant")
OUTPUTS = ("last", "uniform", "average")
PL_SAFETY = 0.99


@dataclass(frozen=True)
class Schedule:
    kind: str = "constant"
    eta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ConfigurationError(f"unknown schedule {self.kind!r}; expected one of {SCHEDULES}")
        if self.kind == "constant" and not (self.eta is not None and self.eta > 0):
            raise ConfigurationError("constant schedule needs a positive eta")


def _require(profile, *names):
    if profile is None:
        raise ConfigurationError(f"schedule needs a domain profile with {', '.join(names)}")
    missing = [n for n in names if getattr(profile, n) in (None, 0.0)]
    if missing:
        raise ConfigurationError(f"domain profile is missing {', '.join(missing)}")


def schedule_stepsize(schedule: Schedule, t: int, profile: Optional[DomainProfile],
                      calibration: NoiseCalibration, dim: int) -> float:
    """Stepsize of iteration ``t`` for the given schedule.

    ``gconvex`` uses ``D / sqrt((L0^2 + d sigma^2 / c_l) * varsigma * T)``,
    ``strongly_convex`` uses ``1 / (beta (t+1))``, ``pl`` uses
    ``0.99 min(1/L1, 1/tau)`` and ``nonconvex`` uses ``1 / L1``.
    """
    kind = schedule.kind
    if kind == "constant":
        return float(schedule.eta)
    if kind == "gconvex":
        _require(profile, "diameter", "L0")
        varsigma = profile.curvature_constant
        second_moment = profile.L0**2 + dim * calibration.sigma2 / profile.c_l
        return profile.diameter / math.sqrt(second_moment * varsigma * calibration.T)
    if kind == "strongly_convex":
        _require(profile, "beta")
        return 1.0 / (profile.beta * (t + 1))
    if kind == "pl":
        _require(profile, "L1", "tau")
        return PL_SAFETY * min(1.0 / profile.L1, 1.0 / profile.tau)
    _require(profile, "L1")
    return 1.0 / profile.L1


def schedule_T(schedule: Schedule, profile: DomainProfile, budget: PrivacyBudget, n: int, dim: int) -> int:
    """Iteration count suggested by each schedule's utility analysis, rounded and clamped to >= 1."""
    kind = schedule.kind
    log_inv_delta = math.log(1.0 / budget.delta)
    if kind in ("gconvex", "strongly_convex"):
        T = float(n) ** 2
    elif kind == "pl":
        arg = n**2 * budget.epsilon**2 * profile.c_l / (dim * profile.L0**2 * log_inv_delta)
        T = math.log(arg)
    elif kind == "nonconvex":
        _require(profile, "L1")
        T = math.sqrt(profile.L1) * n * budget.epsilon / (
            math.sqrt(dim * log_inv_delta / profile.c_l) * profile.L0
        )
    else:
        raise ConfigurationError("a constant schedule has no iteration-count rule; set T explicitly")
    return max(1, int(round(T)))


@dataclass
class OptimizerConfig:
    """Settings of one DP-RGD run.

    Parameters
    ----------
    T : int
        Number of iterations.
    batch_size : int
        Minibatch size ``b``; ``b == n`` runs full-batch gradient descent.
    calibration : NoiseCalibration
        Per-iteration noise variance and the ``L0`` it was calibrated for.
    schedule : Schedule
    output : {"last", "uniform", "average"}
    average_weight : float
        Numerator ``a`` of the averaging weight ``a / (t+1)``; 1 for the
        geodesically convex analysis, 2 for the strongly convex one.
    profile : DomainProfile, optional
        Constants consumed by the theory-driven schedules.
    seed : int
        Seed of the four RNG substreams.
    init : None, "random", "identity", "first-sample" or an array
        ``None`` picks uniform on the sphere and the identity on SPD.
    bound_radius : float, optional
        Warn when an iterate leaves the ball of this radius around ``w_0``.
    """

    T: int
    batch_size: int
    calibration: NoiseCalibration
    schedule: Schedule = field(default_factory=lambda: Schedule("constant", 0.01))
    output: str = "last"
    average_weight: float = 1.0
    profile: Optional[DomainProfile] = None
    seed: int = 0
    init: object = None
    bound_radius: Optional[float] = None
    keep_iterates: bool = True
    noise_sampler: str = "exact"
    mh_params: MhParams = field(default_factory=MhParams)

    def validate(self, objective) -> None:
        if int(self.T) != self.T or self.T < 1:
            raise ConfigurationError("T must be a positive integer")
        if not 1 <= self.batch_size <= objective.n:
            raise ConfigurationError(f"batch size must lie in [1, {objective.n}]")
        if self.output not in OUTPUTS:
            raise ConfigurationError(f"unknown output strategy {self.output!r}")
        if self.output == "average" and not self.average_weight > 0:
            raise ConfigurationError("average_weight must be positive")
        if self.noise_sampler not in ("exact", "mh"):
            raise ConfigurationError("noise_sampler must be 'exact' or 'mh'")
        if self.calibration.sigma2 < 0:
            raise ConfigurationError("sigma^2 must be nonnegative")
        schedule_stepsize(self.schedule, 0, self.profile, self.calibration, objective.manifold.dim)


@dataclass
class Trajectory:
    iterates: list
    noise_norms: list
    batches: list
    w_priv: np.ndarray
    priv_index: Optional[int]
    ledger: MomentsLedger
    stepsizes: list = field(default_factory=list)
    average: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)

    @property
    def last(self):
        return self.iterates[-1]


def subsample(n: int, b: int, rng) -> np.ndarray:
    """``b`` distinct indices drawn uniformly without replacement, sorted."""
    if b > n or b < 1:
        raise DomainError(f"cannot draw {b} of {n} samples without replacement")
    if b == n:
        return np.arange(n)
    return np.sort(as_generator(rng).choice(n, size=b, replace=False))


def initial_point(manifold, init, rng, objective=None):
    if isinstance(init, np.ndarray):
        manifold.check_point(init)
        return np.array(init, dtype=float, copy=True)
    if init is None:
        init = "identity" if isinstance(manifold, SPD) else "random"
    if init == "random":
        return manifold.random_point(as_generator(rng))
    if init == "identity":
        if not isinstance(manifold, SPD):
            raise ConfigurationError("identity initialisation is only defined on SPD")
        return np.eye(manifold.size)
    if init == "first-sample":
        return np.array(objective.samples[0], dtype=float, copy=True)
    raise ConfigurationError(f"unknown initialisation {init!r}")


def noisy_gradient(objective, w, batch_size: int, sigma2: float, streams, sampler="exact", mh_params=None):
    """Minibatch Riemannian gradient plus tangent-space Gaussian noise.

    Returns ``(zeta, noise, idx)``; ``idx`` is ``None`` for a full batch and
    ``noise`` is ``None`` when ``sigma2 == 0``. ``sampler="mh"`` draws the
    noise by random-walk Metropolis-Hastings instead of exactly.
    """
    n = objective.n
    if batch_size >= n:
        idx = None
        grad = objective.rgrad(w)
    else:
        idx = subsample(n, batch_size, streams["subsample"])
        grad = objective.rgrad(w, idx)
    if sigma2 == 0:
        return grad, None, idx
    M = objective.manifold
    if sampler == "mh":
        draws, _ = tangent_gaussian_mh_chain(M, w, math.sqrt(sigma2), streams["noise"], mh_params or MhParams())
        noise = M.unvec(w, draws[0])
    else:
        noise = tangent_gaussian(M, w, math.sqrt(sigma2), streams["noise"])
    return grad + noise, noise, idx


def dp_step(objective, w, eta: float, batch_size: int, sigma2: float, streams):
    """One update ``Exp_w(-eta * zeta)``."""
    zeta, _, _ = noisy_gradient(objective, w, batch_size, sigma2, streams)
    return objective.manifold.exp(w, -eta * zeta)


def run(objective, config: OptimizerConfig, streams=None) -> Trajectory:
    """Run DP-RGD and select the private output."""
    config.validate(objective)
    M = objective.manifold
    cal = config.calibration
    streams = streams or make_streams(config.seed)
    w = initial_point(M, config.init, streams["init"], objective)
    w0 = w
    T = int(config.T)
    entry = MomentEntry(L0=cal.L0, n=objective.n, b=min(config.batch_size, objective.n), sigma2=cal.sigma2)
    ledger = MomentsLedger()

    iterates = [w] if config.keep_iterates else []
    noise_norms, batches, etas, warns = [], [], [], []
    # output 2 draws its index up front from its own stream
    priv_index = None
    if config.output == "uniform":
        priv_index = int(as_generator(streams["output-select"]).integers(0, T))
    chosen = w if priv_index == 0 else None
    avg = None

    for t in range(T):
        eta = schedule_stepsize(config.schedule, t, config.profile, cal, M.dim)
        zeta, noise, idx = noisy_gradient(
            objective, w, config.batch_size, cal.sigma2, streams, config.noise_sampler, config.mh_params
        )
        noise_norms.append(0.0 if noise is None else M.norm(w, noise))
        w = M.exp(w, -eta * zeta)
        ledger.add(entry)
        etas.append(eta)
        batches.append(idx)
        if config.keep_iterates:
            iterates.append(w)
        s = t + 1
        if priv_index == s:
            chosen = w
        if config.output == "average" and s <= max(T - 1, 1):
            avg = w if avg is None else M.geodesic(avg, w, min(1.0, config.average_weight / s))
        if config.bound_radius is not None:
            r = M.dist(w0, w)
            if r > config.bound_radius:
                warns.append((s, r))
                logger.warning("iterate %d left the monitored ball: dist(w_t, w_0) = %.4g", s, r)

    if not config.keep_iterates:
        iterates = [w]
    if config.output == "last":
        w_priv = w
    elif config.output == "uniform":
        w_priv = chosen
    else:
        w_priv = avg
    return Trajectory(
        iterates=iterates,
        noise_norms=noise_norms,
        batches=batches,
        w_priv=w_priv,
        priv_index=priv_index,
        ledger=ledger,
        stepsizes=etas,
        average=avg,
        warnings=warns,
    )


def rgd(objective, w0, eta: float, T: int):
    """Deterministic full-batch Riemannian gradient descent; returns all iterates."""
    M = objective.manifold
    ws = [w0]
    w = w0
    for _ in range(T):
        w = M.exp(w, -eta * objective.rgrad(w))
        ws.append(w)
    return ws


def frechet_mean(samples, tol: float = 1e-14, max_iter: int = 100_000, w0=None):
    """Non-private Frechet mean by RGD with stepsize 1/2 on the exact gradient.

    Stops once the Riemannian gradient norm ``2 ||mean_i Log_W(X_i)||_W``
    falls to ``tol``.

    Raises
    ------
    DomainError
        If ``max_iter`` iterations pass without reaching ``tol``.
    """
    Xs = np.asarray(samples, dtype=float)
    M = SPD(Xs.shape[-1])
    W = np.eye(M.size) if w0 is None else np.asarray(w0, dtype=float)
    for _ in range(int(max_iter) + 1):
        c = M.cache(W)
        L = M.logs_whitened(W, Xs, cache=c).mean(axis=0)
        if 2.0 * np.linalg.norm(L) <= tol:
            return W
        W = M.exp(W, c.sqrt @ L @ c.sqrt, cache=c)
    raise DomainError(f"Frechet mean solver did not reach gradient norm {tol} in {max_iter} iterations")


def baseline_dp_pgd_sphere(objective, config: OptimizerConfig, streams=None) -> Trajectory:
    """Projected gradient descent with ambient Gaussian noise on the sphere.

    ``zeta = grad_E F(w) + N(0, sigma^2 I_{d+1})`` and
    ``w <- (w - eta zeta) / ||w - eta zeta||``. Uses the same seeds, noise
    variance, iteration count and stepsizes as the DP-RGD run it is compared to.
    """
    M = objective.manifold
    if not isinstance(M, Sphere):
        raise ConfigurationError("the projected baseline is defined on the sphere")
    config.validate(objective)
    cal = config.calibration
    streams = streams or make_streams(config.seed)
    noise_rng = as_generator(streams["noise"])
    w = initial_point(M, config.init, streams["init"], objective)
    sigma = math.sqrt(cal.sigma2)
    ledger = MomentsLedger()
    entry = MomentEntry(L0=cal.L0, n=objective.n, b=config.batch_size, sigma2=cal.sigma2)
    iterates, noise_norms, batches, etas = [w], [], [], []
    for t in range(int(config.T)):
        eta = schedule_stepsize(config.schedule, t, config.profile, cal, M.dim)
        idx = None if config.batch_size >= objective.n else subsample(objective.n, config.batch_size, streams["subsample"])
        g = objective.egrad(w, idx)
        for attempt in range(2):
            noise = sigma * noise_rng.standard_normal(M.ambient_dim)
            x = w - eta * (g + noise)
            nx = np.linalg.norm(x)
            if nx >= 1e-14:
                break
        else:
            raise DomainError("projected step collapsed to the origin twice")
        w = x / nx
        ledger.add(entry)
        iterates.append(w)
        noise_norms.append(float(np.linalg.norm(noise)))
        batches.append(idx)
        etas.append(eta)
    return Trajectory(
        iterates=iterates, noise_norms=noise_norms, batches=batches, w_priv=w,
        priv_index=None, ledger=ledger, stepsizes=etas,
    )


def frechet_output_sensitivity(n: int, diameter: float) -> float:
    return 2.0 * diameter / n


def baseline_dp_frechet_output(samples, budget: PrivacyBudget, diameter: float, rng,
                               params: MhParams = MhParams(), tol: float = 1e-14,
                               max_iter: int = 100_000, mean=None):
    """Output perturbation of the Frechet mean with intrinsic Laplace noise.

    The non-private mean is perturbed with scale ``sigma = (2 D / n) / eps``.
    Returns the private point and the non-private mean.
    """
    Xs = np.asarray(samples, dtype=float)
    n = Xs.shape[0]
    if mean is None:
        mean = frechet_mean(Xs, tol=tol, max_iter=max_iter)
    sigma = frechet_output_sensitivity(n, diameter) / budget.epsilon
    M = SPD(Xs.shape[-1])
    pts, _ = intrinsic_laplace_chain(M, mean, sigma, rng, params)
    return pts[0], mean
