"""Noise calibration and moments accounting for tangent-space Gaussian mechanisms.

The accountant tracks upper bounds ``K_t(lambda)`` on the log moment
generating function of the privacy loss of every iteration, composes them
additively and converts the sum into an ``(epsilon, delta)`` statement via
the RDP-to-DP conversion ``eps = (K(lambda) + log(1/delta)) / lambda``
(Renyi order ``lambda + 1``), minimised over an integer grid of ``lambda``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .manifolds.base import DomainError

DEFAULT_LAMBDAS = tuple(range(1, 65))


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float
    c: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        if not self.c > 0:
            raise DomainError("calibration constant c must be positive")


@dataclass(frozen=True)
class NoiseCalibration:
    """Noise scale chosen for an iterative run.

    ``floor_active`` is true when the minibatch floor ``4 L0^2 / b^2``
    dominated the budget-driven variance.
    """

    sigma2: float
    T: int
    L0: float
    n: int
    b: int
    floor_active: bool = False

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def floor(self) -> float:
        return 4.0 * self.L0**2 / self.b**2


def calibrate_mechanism(sensitivity: float, budget: PrivacyBudget) -> float:
    """Smallest variance making the one-shot tangent Gaussian mechanism (eps, delta)-DP."""
    if not sensitivity > 0:
        raise DomainError("sensitivity must be positive")
    return 2.0 * math.log(1.25 / budget.delta) * sensitivity**2 / budget.epsilon**2


def calibrate_iterative(T: int, L0: float, n: int, b: int, budget: PrivacyBudget) -> NoiseCalibration:
    """Per-iteration variance ``max(c T log(1/delta) L0^2 / (n eps)^2, 4 L0^2 / b^2)``."""
    if int(T) != T or T < 1:
        raise DomainError("T must be a positive integer")
    if not L0 > 0:
        raise DomainError("L0 must be positive")
    if n < 1 or b < 1 or b > n:
        raise DomainError("need 1 <= b <= n")
    main = budget.c * T * math.log(1.0 / budget.delta) * L0**2 / (n**2 * budget.epsilon**2)
    floor = 4.0 * L0**2 / b**2
    return NoiseCalibration(
        sigma2=max(main, floor), T=int(T), L0=float(L0), n=int(n), b=int(b), floor_active=floor > main
    )


def moment_full(lam: int, L0: float, n: int, sigma2: float) -> float:
    """Bound ``2 lam (lam+1) L0^2 / (n^2 sigma^2)`` on the full-batch moment."""
    if lam < 1:
        raise DomainError("moment order must be >= 1")
    if math.isinf(sigma2):
        return 0.0
    if not sigma2 > 0:
        return math.inf
    return 2.0 * lam * (lam + 1) * L0**2 / (n**2 * sigma2)


class MomentRefused(Exception):
    """The subsampled moment bound does not apply at this order."""


def subsampled_conditions(lam: int, L0: float, n: int, b: int, sigma2: float) -> Optional[str]:
    """Return a reason string if the subsampled bound is inapplicable, else ``None``."""
    if sigma2 < 4.0 * L0**2 / b**2:
        return "sigma^2 below the 4 L0^2 / b^2 floor"
    arg = n / (b * (lam + 1) * (1.0 + b**2 * sigma2 / (4.0 * L0**2)))
    if arg <= 0:
        return "moment order condition fails"
    limit = 2.0 * sigma2 * math.log(arg) / 3.0
    if not lam <= limit:
        return f"moment order {lam} exceeds the admissible limit {limit:.4g}"
    return None


def moment_subsampled(lam: int, L0: float, n: int, b: int, sigma2: float) -> float:
    """Bound ``15 (lam+1) L0^2 / (n^2 sigma^2)`` for minibatches drawn without replacement.

    Raises
    ------
    DomainError
        If ``b >= n`` (use :func:`moment_full`).
    MomentRefused
        If the bound's hypotheses on ``sigma^2`` and ``lam`` fail.
    """
    if b >= n:
        raise DomainError("subsampled bound needs b < n; use moment_full")
    if lam < 1:
        raise DomainError("moment order must be >= 1")
    reason = subsampled_conditions(lam, L0, n, b, sigma2)
    if reason is not None:
        raise MomentRefused(reason)
    return 15.0 * (lam + 1) * L0**2 / (n**2 * sigma2)


def rdp_to_dp(alpha: float, rho: float, delta: float) -> float:
    """Convert ``(alpha, rho)``-RDP into the epsilon of an ``(epsilon, delta)`` guarantee."""
    if not alpha > 1:
        raise DomainError("Renyi order must exceed 1")
    if not 0 < delta <= 1:
        raise DomainError("delta must lie in (0, 1]")
    return rho + math.log(1.0 / delta) / (alpha - 1.0)


@dataclass(frozen=True)
class MomentEntry:
    """Mechanism parameters of one iteration; ``b == n`` means full batch."""

    L0: float
    n: int
    b: int
    sigma2: float

    @property
    def subsampled(self) -> bool:
        return self.b < self.n

    def moment(self, lam: int) -> Optional[float]:
        """Moment bound at ``lam`` or ``None`` when the bound is refused."""
        if not self.subsampled:
            return moment_full(lam, self.L0, self.n, self.sigma2)
        try:
            return moment_subsampled(lam, self.L0, self.n, self.b, self.sigma2)
        except MomentRefused:
            return None


@dataclass
class MomentsLedger:
    """Running record of per-iteration moment bounds.

    Identical entries are stored with a multiplicity so the composed bound of
    ``T`` identical steps is exactly ``T * K_step(lambda)``.
    """

    lambda_grid: tuple = DEFAULT_LAMBDAS
    counts: Counter = field(default_factory=Counter)

    def add(self, entry: MomentEntry, count: int = 1) -> None:
        if count < 1:
            raise DomainError("count must be >= 1")
        self.counts[entry] += count

    def extend(self, entries: Iterable[MomentEntry]) -> None:
        for e in entries:
            self.add(e)

    def __len__(self) -> int:
        return sum(self.counts.values())

    @property
    def entries(self) -> list:
        return [e for e, k in self.counts.items() for _ in range(k)]

    def composed(self, lam: int) -> Optional[float]:
        total = 0.0
        for entry, k in self.counts.items():
            m = entry.moment(lam)
            if m is None:
                return None
            total += k * m
        return total


def audit(ledger: MomentsLedger, delta: float, return_order: bool = False):
    """Smallest epsilon certified by the ledger at the given delta.

    Orders whose subsampled bound is refused are skipped. Raises
    :class:`DomainError` if the ledger is empty or every order is refused.
    """
    if len(ledger) == 0:
        raise DomainError("cannot audit an empty ledger")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    best, best_lam = math.inf, None
    for lam in ledger.lambda_grid:
        K = ledger.composed(lam)
        if K is None:
            continue
        eps = rdp_to_dp(lam + 1, K / lam, delta)
        if eps < best:
            best, best_lam = eps, lam
    if best_lam is None:
        raise DomainError("no valid moment order in the lambda grid")
    return (best, best_lam) if return_order else best


def audit_calibration(cal: NoiseCalibration, delta: float, lambda_grid=DEFAULT_LAMBDAS) -> float:
    """Audit ``cal.T`` identical iterations of a calibrated run."""
    ledger = MomentsLedger(lambda_grid=tuple(lambda_grid))
    ledger.add(MomentEntry(L0=cal.L0, n=cal.n, b=cal.b, sigma2=cal.sigma2), count=cal.T)
    return audit(ledger, delta)
