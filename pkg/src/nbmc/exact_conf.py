"""
Exact (finite-p) confidence of the NBMC interval.

For a concrete p the estimate lands in [p/mu2, p*mu1] exactly when the trial
count n lies in [n1, n2] with n1 = ceil((N-1)/(p mu1)) and
n2 = floor((N-1) mu2 / p). The lower and upper miss probabilities c1, c2 are
negative-binomial tail sums, and c = 1 - c1 - c2.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial
from typing import Iterable, List, NamedTuple, Optional, Tuple

from . import config_base as config
from .core import _check_factor, _check_N, asymptotic_confidence, check_conditions_new
from .exceptions import ParameterError, PreconditionError
from .specfun import check_term_cap, negbin_range_sum, reg_lower_incomplete_gamma

logger = logging.getLogger(__name__)


def _snap(value: float) -> float:
    nearest = round(value)
    if abs(value - nearest) <= config.SNAP_ULPS * math.ulp(value):
        return float(nearest)
    return value


def _to_index(value: float, name: str) -> float:
    if not math.isfinite(value) or value > config.MAX_INDEX:
        raise ParameterError(f"{name} = {value!r} does not fit the integer range")
    return _snap(value)


def interval_bounds(N: int, p: float, mu1: float, mu2: float) -> Tuple[int, int]:
    """
    (n1, n2): the trial counts bracketing the event p/mu2 <= p_hat <= p mu1.

    Arguments within SNAP_ULPS ulps of an integer are snapped to it first, so
    that e.g. p = 1/2, mu1 = 2 gives the exact integer boundary.
    """
    N = _check_N(N)
    mu1 = _check_factor(mu1, "mu1")
    mu2 = _check_factor(mu2, "mu2")
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in (0, 1), got {p!r}")
    a1 = _to_index((N - 1) / (p * mu1), "(N-1)/(p mu1)")
    a2 = _to_index((N - 1) * mu2 / p, "(N-1) mu2 / p")
    return math.ceil(a1), math.floor(a2)


@dataclass(frozen=True)
class ExactConfidence:
    N: int
    mu1: float
    mu2: float
    p: float
    n1: int
    n2: int
    c1: float
    c2: float
    c: float
    c_bar: float
    c1_bar: float
    c2_bar: float
    # n2 < N: the interval event has no support, c = 0.
    interval_below_support: bool = False

    @property
    def margin(self) -> float:
        return self.c - self.c_bar

    def to_dict(self) -> dict:
        data = asdict(self)
        data["margin"] = self.margin
        return data


def exact_confidence(N: int, p: float, mu1: float, mu2: float) -> ExactConfidence:
    """c1 = Pr[n <= n1 - 1], c2 = Pr[n >= n2 + 1], c = Pr[n1 <= n <= n2]."""
    n1, n2 = interval_bounds(N, p, mu1, mu2)
    N = int(N)
    p = float(p)
    check_term_cap(max(n1 - 1, n2) - N + 1)

    c1 = negbin_range_sum(N, n1 - 1, N, p)
    # Summing the middle range directly gives cdf(n2) - cdf(n1 - 1) without cancellation.
    c = negbin_range_sum(n1, n2, N, p)
    c2 = max(0.0, 1.0 - math.fsum([c1, c]))
    c = min(max(c, 0.0), 1.0)

    c1_bar = reg_lower_incomplete_gamma(N, (N - 1) / mu1)
    c2_bar = 1.0 - reg_lower_incomplete_gamma(N, (N - 1) * mu2)
    result = ExactConfidence(
        N=N,
        mu1=float(mu1),
        mu2=float(mu2),
        p=p,
        n1=n1,
        n2=n2,
        c1=c1,
        c2=c2,
        c=c,
        c_bar=asymptotic_confidence(N, mu1, mu2),
        c1_bar=c1_bar,
        c2_bar=c2_bar,
        interval_below_support=n2 < N,
    )
    logger.debug("exact confidence N=%d p=%g: n1=%d n2=%d c=%.15g", N, p, n1, n2, c)
    return result


class PropositionCheck(NamedTuple):
    holds: bool
    margin: float
    exact: ExactConfidence

    @property
    def within_tolerance(self) -> bool:
        return self.margin > -config.PROPOSITION_TOLERANCE


def proposition_holds(N: int, p: float, mu1: float, mu2: float) -> PropositionCheck:
    """
    Evaluate c > c_bar for a point where the sufficient conditions hold.

    Raises PreconditionError otherwise: the comparison would say nothing about
    the guarantee.
    """
    report = check_conditions_new(N, mu1, mu2)
    if not (report.mu1_ok and report.mu2_ok):
        raise PreconditionError(
            f"conditions do not hold for N={N}, mu1={mu1}, mu2={mu2} "
            f"(need mu1 >= {report.mu1_bound:.12g}, mu2 >= {report.mu2_bound:.12g})"
        )
    exact = exact_confidence(N, p, mu1, mu2)
    return PropositionCheck(exact.c > exact.c_bar, exact.margin, exact)


def confidence_sweep(
    N: int,
    mu1: float,
    mu2: float,
    ps: Iterable[float],
    workers: Optional[int] = None,
) -> List[ExactConfidence]:
    """
    exact_confidence over many p, returned in the order of ``ps``.

    With ``workers`` > 1 the points are evaluated in a process pool; results
    are identical to the serial run.
    """
    ps = [float(p) for p in ps]
    evaluate = partial(_evaluate_at, N, mu1, mu2)
    if workers and workers > 1 and len(ps) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, ps))
    return [evaluate(p) for p in ps]


def _evaluate_at(N: int, mu1: float, mu2: float, p: float) -> ExactConfidence:
    return exact_confidence(N, p, mu1, mu2)
