"""
The negative-binomial Monte Carlo (NBMC) stopping rule.

Trials are run until N occurrences of the event are seen; with n the number
of trials, p is estimated as (N-1)/n. For a relative interval [p/mu2, p*mu1]
this module gives the asymptotic confidence c_bar, the sufficient conditions
under which c_bar is a guaranteed lower bound (current and legacy versions),
and the planners that pick N or the margin m.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

from . import config_base as config
from .exceptions import ParameterError, UnachievableError
from .specfun import _as_int, reg_lower_incomplete_gamma

logger = logging.getLogger(__name__)


class RuleVersion(str, enum.Enum):
    NEW = "new"
    LEGACY = "legacy"


def _check_N(N) -> int:
    N = _as_int(N, "N")
    if N < 3:
        raise ParameterError(f"N must be at least 3, got {N}")
    return N


def _check_factor(value: float, name: str) -> float:
    value = float(value)
    if not value > 1.0:
        raise ParameterError(f"{name} must be greater than 1, got {value!r}")
    return value


def asymptotic_confidence(N: int, mu1: float, mu2: float) -> float:
    """c_bar = gamma(N, (N-1) mu2) - gamma(N, (N-1)/mu1), the p -> 0 limit of c."""
    N = _check_N(N)
    mu1 = _check_factor(mu1, "mu1")
    mu2 = _check_factor(mu2, "mu2")
    upper = reg_lower_incomplete_gamma(N, (N - 1) * mu2)
    lower = reg_lower_incomplete_gamma(N, (N - 1) / mu1)
    return upper - lower


@dataclass(frozen=True)
class StoppingPlan:
    """Rule parameters (N, mu1, mu2); c_bar is derived on construction."""

    N: int
    mu1: float
    mu2: float
    c_bar: float = field(init=False)

    def __post_init__(self):
        N = _check_N(self.N)
        mu1 = _check_factor(self.mu1, "mu1")
        mu2 = _check_factor(self.mu2, "mu2")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu2", mu2)
        object.__setattr__(self, "c_bar", asymptotic_confidence(N, mu1, mu2))

    @property
    def is_symmetric(self) -> bool:
        return self.mu1 == self.mu2

    def to_dict(self) -> dict:
        return {"N": self.N, "mu1": self.mu1, "mu2": self.mu2, "c_bar": self.c_bar}


def make_plan(N: int, mu1: float, mu2: float) -> StoppingPlan:
    return StoppingPlan(N, mu1, mu2)


def make_symmetric_plan(N: int, m: float) -> StoppingPlan:
    """Plan with mu1 = mu2 = 1 + m."""
    m = float(m)
    if not m > 0:
        raise ParameterError(f"margin m must be positive, got {m!r}")
    return StoppingPlan(N, 1.0 + m, 1.0 + m)


@dataclass(frozen=True)
class ConditionReport:
    """
    Outcome of a sufficient-condition check.

    ``p_ok`` is None when the rule has no restriction on p (the current rule).
    ``mu1_ok_for_p`` is the sharper p-aware mu1 check, only filled when a p is
    supplied to the current rule.
    """

    mu2_ok: bool
    mu1_ok: bool
    p_ok: Optional[bool]
    rule_version: RuleVersion
    mu2_bound: float
    mu1_bound: float
    p_limit: Optional[float] = None
    mu1_ok_for_p: Optional[bool] = None

    @property
    def all_ok(self) -> bool:
        return self.mu2_ok and self.mu1_ok and self.p_ok is not False

    def to_dict(self) -> dict:
        return {
            "rule_version": self.rule_version.value,
            "mu2_ok": self.mu2_ok,
            "mu1_ok": self.mu1_ok,
            "p_ok": "not-applicable" if self.p_ok is None else self.p_ok,
            "mu2_bound": self.mu2_bound,
            "mu1_bound": self.mu1_bound,
            "p_limit": self.p_limit,
            "mu1_ok_for_p": self.mu1_ok_for_p,
            "all_ok": self.all_ok,
        }


def mu2_bound(N: int) -> float:
    """(N + sqrt(N)) / (N - 1); shared by both rules."""
    N = _check_N(N)
    return (N + math.sqrt(N)) / (N - 1)


def mu1_bound_new(N: int, p: Optional[float] = None) -> float:
    """
    (N - 1) / (N - 1/2 - sqrt(N - 1/2)).

    With p given, the sharper bound (N - 1) / (N - 1/2 - sqrt(N - 1/2) + p/2)
    that the p-free bound is derived from.
    """
    N = _check_N(N)
    half = N - 0.5
    denominator = half - math.sqrt(half)
    if p is not None:
        p = float(p)
        if not 0.0 < p < 1.0:
            raise ParameterError(f"p must lie in (0, 1), got {p!r}")
        denominator += p / 2
    return (N - 1) / denominator


def mu1_bound_legacy(N: int) -> float:
    """(N - 1) / (N - sqrt(3N/2))."""
    N = _check_N(N)
    return (N - 1) / (N - math.sqrt(1.5 * N))


def legacy_p_limit(N: int, mu1: float) -> float:
    """Legacy restriction p < (N - 1) / (ceil(7N/2 - 1) mu1)."""
    N = _check_N(N)
    mu1 = _check_factor(mu1, "mu1")
    return (N - 1) / (math.ceil(3.5 * N - 1) * mu1)


def check_conditions_new(N: int, mu1: float, mu2: float, p: Optional[float] = None) -> ConditionReport:
    """Sufficient conditions for c > c_bar at every p in (0, 1); boundaries are inclusive."""
    m2 = mu2_bound(N)
    m1 = mu1_bound_new(N)
    mu1_ok_for_p = None
    if p is not None:
        mu1_ok_for_p = float(mu1) >= mu1_bound_new(N, p)
    return ConditionReport(
        mu2_ok=float(mu2) >= m2,
        mu1_ok=float(mu1) >= m1,
        p_ok=None,
        rule_version=RuleVersion.NEW,
        mu2_bound=m2,
        mu1_bound=m1,
        mu1_ok_for_p=mu1_ok_for_p,
    )


def check_conditions_legacy(N: int, mu1: float, mu2: float, p: float) -> ConditionReport:
    """The earlier sufficient conditions, which also restrict p."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in (0, 1), got {p!r}")
    m2 = mu2_bound(N)
    m1 = mu1_bound_legacy(N)
    limit = legacy_p_limit(N, mu1)
    return ConditionReport(
        mu2_ok=float(mu2) >= m2,
        mu1_ok=float(mu1) >= m1,
        p_ok=p < limit,
        rule_version=RuleVersion.LEGACY,
        mu2_bound=m2,
        mu1_bound=m1,
        p_limit=limit,
    )


def min_margin(N: int) -> float:
    """Smallest symmetric margin allowed by the current rule: (sqrt(N) + 1) / (N - 1)."""
    N = _check_N(N)
    return (math.sqrt(N) + 1) / (N - 1)


def legacy_min_margin(N: int) -> float:
    """Smallest symmetric margin allowed by the legacy rule."""
    return max(mu2_bound(N), mu1_bound_legacy(N)) - 1.0


def _margin_floor(N: int, rule: RuleVersion) -> float:
    return min_margin(N) if RuleVersion(rule) is RuleVersion.NEW else legacy_min_margin(N)


def _symmetric_confidence(N: int, m: float) -> float:
    return asymptotic_confidence(N, 1.0 + m, 1.0 + m)


def min_margin_for_confidence(N: int, c_target: float, rule: RuleVersion = RuleVersion.NEW) -> float:
    """
    Smallest symmetric margin m, allowed by the rule's conditions, whose
    asymptotic confidence exceeds ``c_target``. Bisection over
    [floor, MARGIN_SEARCH_UPPER] to MARGIN_TOLERANCE.
    """
    N = _check_N(N)
    c_target = float(c_target)
    if not 0.0 < c_target < 1.0:
        raise ParameterError(f"c_target must lie in (0, 1), got {c_target!r}")

    lo = _margin_floor(N, rule)
    if _symmetric_confidence(N, lo) > c_target:
        return lo
    hi = config.MARGIN_SEARCH_UPPER
    if not _symmetric_confidence(N, hi) > c_target:
        raise UnachievableError(f"confidence {c_target} is not reached by N={N} for any margin up to {hi:g}")

    while hi - lo > config.MARGIN_TOLERANCE:
        mid = 0.5 * (lo + hi)
        if _symmetric_confidence(N, mid) > c_target:
            hi = mid
        else:
            lo = mid
    logger.debug("min margin for N=%d, c=%.6g: %.9g", N, c_target, hi)
    return hi


def min_N_for_margin(m: float, rule: RuleVersion = RuleVersion.NEW, max_N: int = config.DEFAULT_MAX_N) -> int:
    """
    Smallest N >= 3 whose conditions admit the symmetric margin m.

    For the current rule (sqrt(N) + 1)/(N - 1) <= m is N >= (1 + 1/m)^2; the
    closed form is only a starting point and the bound itself is re-checked.
    """
    m = float(m)
    if not m > 0:
        raise ParameterError(f"margin m must be positive, got {m!r}")
    max_N = _as_int(max_N, "max_N")
    start = 3
    if RuleVersion(rule) is RuleVersion.NEW:
        start = max(3, math.ceil((1.0 + 1.0 / m) ** 2) - 2)
    for N in range(start, max_N + 1):
        if m >= _margin_floor(N, rule):
            return N
    raise UnachievableError(f"margin {m} is below the bound of every N <= {max_N}")


def _first_exceeding(confidence: Callable[[int], float], c_target: float, start: int, max_N: int) -> Optional[int]:
    """
    Smallest N in [start, max_N] with confidence(N) > c_target, for a
    confidence that increases with N. Gallops upward from ``start`` and
    bisects the last bracket, so the cost is logarithmic in the answer.
    """
    if start > max_N:
        return None
    if confidence(start) > c_target:
        return start
    lo, step = start, 1
    while True:
        hi = min(lo + step, max_N)
        if confidence(hi) > c_target:
            break
        if hi == max_N:
            return None
        lo, step = hi, 2 * step
    # confidence(lo) <= c_target < confidence(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if confidence(mid) > c_target:
            hi = mid
        else:
            lo = mid
    return hi


def min_N_for(
    m: float,
    c_target: float,
    max_N: int = config.DEFAULT_MAX_N,
    rule: RuleVersion = RuleVersion.NEW,
) -> int:
    """
    Smallest N >= 3 whose conditions admit margin m and whose asymptotic
    confidence at mu1 = mu2 = 1 + m exceeds ``c_target``, searched up to
    ``max_N``. The margin floor falls and c_bar rises with N, so the first
    admissible N starts the search.
    """
    m = float(m)
    c_target = float(c_target)
    if not m > 0:
        raise ParameterError(f"margin m must be positive, got {m!r}")
    if not 0.0 < c_target < 1.0:
        raise ParameterError(f"c_target must lie in (0, 1), got {c_target!r}")
    max_N = _as_int(max_N, "max_N")

    start = min_N_for_margin(m, rule, max_N) if m >= _margin_floor(max_N, rule) else max_N + 1
    N = _first_exceeding(lambda n: _symmetric_confidence(n, m), c_target, start, max_N)
    if N is None:
        raise UnachievableError(
            f"no N <= {max_N} certifies confidence {c_target} at margin {m} "
            "(point outside the achievable region or cap too small)"
        )
    logger.debug("min N for m=%.6g, c=%.6g: %d", m, c_target, N)
    return N


def min_N_for_factors(mu1: float, mu2: float, c_target: float, max_N: int = config.DEFAULT_MAX_N) -> int:
    """Asymmetric counterpart of min_N_for under the current rule."""
    mu1 = _check_factor(mu1, "mu1")
    mu2 = _check_factor(mu2, "mu2")
    c_target = float(c_target)
    if not 0.0 < c_target < 1.0:
        raise ParameterError(f"c_target must lie in (0, 1), got {c_target!r}")
    max_N = _as_int(max_N, "max_N")
    start = next((N for N in range(3, max_N + 1) if mu2 >= mu2_bound(N) and mu1 >= mu1_bound_new(N)), max_N + 1)
    N = _first_exceeding(lambda n: asymptotic_confidence(n, mu1, mu2), c_target, start, max_N)
    if N is None:
        raise UnachievableError(f"no N <= {max_N} certifies confidence {c_target} at mu1={mu1}, mu2={mu2}")
    return N


def estimate(n: int, N: int) -> float:
    """p_hat = (N - 1) / n."""
    n = _as_int(n, "n")
    N = _check_N(N)
    if n < N:
        raise ParameterError(f"n must be at least N={N}, got {n}")
    return (N - 1) / n


class ConfidenceInterval(NamedTuple):
    low: float
    high: float
    clamped: bool = False


def confidence_interval(p_hat: float, plan: StoppingPlan) -> ConfidenceInterval:
    """
    Interval for p: p/mu2 <= p_hat <= p mu1 is the same event as
    p_hat/mu1 <= p <= p_hat mu2. The upper end is clamped to 1.
    """
    p_hat = float(p_hat)
    if not 0.0 < p_hat < 1.0:
        raise ParameterError(f"p_hat must lie in (0, 1), got {p_hat!r}")
    high = p_hat * plan.mu2
    clamped = high > 1.0
    return ConfidenceInterval(p_hat / plan.mu1, min(high, 1.0), clamped)


@dataclass(frozen=True)
class EstimationResult:
    """Outcome of a completed sequential run."""

    n: int
    N: int
    p_hat: float
    ci_low: float
    ci_high: float
    plan: StoppingPlan
    ci_clamped: bool = False

    @classmethod
    def from_trials(cls, n: int, plan: StoppingPlan) -> "EstimationResult":
        p_hat = estimate(n, plan.N)
        interval = confidence_interval(p_hat, plan)
        return cls(
            n=n,
            N=plan.N,
            p_hat=p_hat,
            ci_low=interval.low,
            ci_high=interval.high,
            plan=plan,
            ci_clamped=interval.clamped,
        )

    def to_dict(self) -> dict:
        return {
            "status": "stopped",
            "n": self.n,
            "N": self.N,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "ci_clamped": self.ci_clamped,
            "c_bar": self.plan.c_bar,
        }
