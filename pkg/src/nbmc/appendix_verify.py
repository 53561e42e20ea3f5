"""
Numerical certification of the auxiliary results behind the mu1-side bound.

Two families of checks:

* the integral-versus-sum inequality
  int_{N-1}^{n*} t^(N-1) e^(-p t) dt >= sum_{n=N}^{n*} (n-1)^(N-1 falling) (1-p)^(n-N)
  for every n* up to (N - 1/2 - sqrt(N - 1/2))/p + 1/2;
* nonnegativity of the power-series coefficients x_j (in nu = (n-1)p) and
  x'_j (in nu' = (n-1/2)p) of the log-ratios that bound the sum term by term.

Integrals use the incomplete-gamma closed form; sums are compensated. All
comparisons are made on the log scale so nothing overflows.
"""

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import config_base as config
from .core import _check_N
from .exceptions import ParameterError
from .specfun import (
    _as_int,
    check_term_cap,
    log_factorial,
    negbin_log_pmf_array,
    reg_lower_incomplete_gamma,
)

logger = logging.getLogger(__name__)


class Family(str, enum.Enum):
    X = "x"
    X_PRIME = "x_prime"


class Sampling(str, enum.Enum):
    VACUOUS = "vacuous"
    EXHAUSTIVE = "exhaustive"
    SUBSAMPLED = "dense-prefix+geometric"


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in (0, 1), got {p!r}")
    return p


# --- Integral-versus-sum inequality ---


def lemma1_log_lhs(N: int, p: float, n_star: int) -> float:
    """ln of int_{N-1}^{n*} t^(N-1) e^(-p t) dt; -inf for the empty integral."""
    N = _check_N(N)
    p = _check_p(p)
    n_star = _as_int(n_star, "n_star")
    if n_star < N - 1:
        raise ParameterError(f"n_star must be at least N-1={N - 1}, got {n_star}")
    if n_star == N - 1:
        return -math.inf
    diff = reg_lower_incomplete_gamma(N, p * n_star) - reg_lower_incomplete_gamma(N, p * (N - 1))
    return log_factorial(N - 1) - N * math.log(p) + math.log(diff)


def lemma1_lhs(N: int, p: float, n_star: int) -> float:
    """((N-1)!/p^N) [gamma(N, p n*) - gamma(N, p (N-1))]."""
    return math.exp(lemma1_log_lhs(N, p, n_star))


def _log_rhs_terms(ns: np.ndarray, N: int, p: float) -> np.ndarray:
    # (n-1)^(N-1 falling) (1-p)^(n-N) is the negative-binomial pmf without p^N/(N-1)!
    return negbin_log_pmf_array(ns, N, p) + (log_factorial(N - 1) - N * math.log(p))


def lemma1_log_rhs(N: int, p: float, n_star: int) -> float:
    """ln of sum_{n=N}^{n*} (n-1)^(N-1 falling) (1-p)^(n-N); -inf for the empty sum."""
    N = _check_N(N)
    p = _check_p(p)
    n_star = _as_int(n_star, "n_star")
    if n_star < N:
        return -math.inf
    return float(_log_partial_sums(N, p, n_star, np.array([n_star]))[0])


def lemma1_rhs(N: int, p: float, n_star: int) -> float:
    return math.exp(lemma1_log_rhs(N, p, n_star))


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _neumaier(total: float, comp: float, x: float) -> Tuple[float, float]:
    t = total + x
    if abs(total) >= abs(x):
        comp += (total - t) + x
    else:
        comp += (x - t) + total
    return t, comp


def _log_partial_sums(N: int, p: float, n_max: int, wanted: np.ndarray) -> np.ndarray:
    """
    ln of the right-hand sum at every n* in ``wanted`` (sorted, in [N, n_max]).

    The running sum is kept in compensated form relative to a moving log scale,
    so every reported prefix is accurate to a few ulps.
    """
    check_term_cap(n_max - N + 1)
    out = np.empty(len(wanted))
    log_scale = -math.inf
    total = comp = 0.0
    w = 0
    block = config.SUM_BLOCK_SIZE
    for start in range(N, n_max + 1, block):
        stop = min(start + block, n_max + 1)
        logs = _log_rhs_terms(np.arange(start, stop, dtype=float), N, p)
        new_scale = max(log_scale, float(logs.max()))
        if math.isfinite(log_scale):
            factor = math.exp(log_scale - new_scale)
            total *= factor
            comp *= factor
        log_scale = new_scale
        terms = np.exp(logs - log_scale).tolist()

        w_stop = int(np.searchsorted(wanted, stop, side="left"))
        positions = (wanted[w:w_stop] - start).tolist()
        if len(positions) * 64 > len(terms):
            t, c = total, comp
            k = 0
            for i, term in enumerate(terms):
                t, c = _neumaier(t, c, term)
                while k < len(positions) and positions[k] == i:
                    out[w + k] = log_scale + _log(t + c)
                    k += 1
        else:
            base = total + comp
            for k, pos in enumerate(positions):
                out[w + k] = log_scale + _log(math.fsum([base, *terms[: pos + 1]]))
        w = w_stop
        total, comp = _neumaier(total, comp, math.fsum(terms))
    return out


@dataclass(frozen=True)
class LemmaReport:
    N: int
    p: float
    n_star_max: int
    points_checked: int
    # None when the range of n* is empty.
    worst_relative_margin: Optional[float]
    all_hold: bool
    sampling: Sampling
    worst_n_star: Optional[int] = None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["sampling"] = self.sampling.value
        return data


def lemma1_n_star_max(N: int, p: float) -> int:
    """floor((N - 1/2 - sqrt(N - 1/2))/p + 1/2)."""
    N = _check_N(N)
    p = _check_p(p)
    half = N - 0.5
    return math.floor((half - math.sqrt(half)) / p + 0.5)


def lemma1_sample_points(N: int, n_star_max: int) -> Tuple[np.ndarray, Sampling]:
    """The n* values checked for a range [N, n_star_max], and the policy used."""
    count = n_star_max - N + 1
    if count <= 0:
        return np.empty(0, dtype=np.int64), Sampling.VACUOUS
    if count <= config.LEMMA_EXHAUSTIVE_LIMIT:
        return np.arange(N, n_star_max + 1, dtype=np.int64), Sampling.EXHAUSTIVE
    dense = np.arange(N, max(N, config.LEMMA_DENSE_PREFIX + 1), dtype=np.int64)
    start = max(N, config.LEMMA_DENSE_PREFIX + 1)
    sparse = np.rint(np.geomspace(start, n_star_max, config.LEMMA_GEOMETRIC_POINTS)).astype(np.int64)
    points = np.unique(np.concatenate([dense, sparse, [n_star_max]]))
    return points, Sampling.SUBSAMPLED


def lemma1_check(N: int, p: float) -> LemmaReport:
    """Check the inequality at every admissible n* (or the documented subsample)."""
    N = _check_N(N)
    p = _check_p(p)
    n_star_max = lemma1_n_star_max(N, p)
    points, sampling = lemma1_sample_points(N, n_star_max)
    if sampling is Sampling.VACUOUS:
        return LemmaReport(N, p, n_star_max, 0, None, True, sampling)
    if sampling is Sampling.SUBSAMPLED:
        logger.warning(
            "n* range [%d, %d] too large for exhaustive check; checking %d points", N, n_star_max, len(points)
        )

    log_rhs = _log_partial_sums(N, p, n_star_max, points)
    gamma_lo = reg_lower_incomplete_gamma(N, p * (N - 1))
    offset = log_factorial(N - 1) - N * math.log(p)

    worst = math.inf
    worst_n_star = None
    for n_star, lr in zip(points.tolist(), log_rhs.tolist()):
        diff = reg_lower_incomplete_gamma(N, p * n_star) - gamma_lo
        margin = math.expm1(offset + math.log(diff) - lr) if diff > 0 else -1.0
        if margin < worst:
            worst, worst_n_star = margin, n_star
    all_hold = worst >= -config.LEMMA_TOLERANCE
    logger.debug("integral/sum check N=%d p=%g: %d points, worst %.3g", N, p, len(points), worst)
    return LemmaReport(N, p, n_star_max, len(points), worst, all_hold, sampling, worst_n_star)


def lemma1_sweep(Ns: Iterable[int], ps: Iterable[float], workers: Optional[int] = None) -> List[LemmaReport]:
    """lemma1_check over a grid; reports come back in (N, p) grid order."""
    grid = [(int(N), float(p)) for N in Ns for p in ps]
    if workers and workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_lemma1_check_args, grid))
    return [lemma1_check(N, p) for N, p in grid]


def _lemma1_check_args(args: Tuple[int, float]) -> LemmaReport:
    return lemma1_check(*args)


# --- Series coefficients ---


@dataclass(frozen=True)
class CoefficientPoint:
    N: int
    j: int
    nu: float
    family: Family
    value: float

    def to_dict(self) -> dict:
        data = asdict(self)
        data["family"] = self.family.value
        return data


def _check_j(j) -> int:
    j = _as_int(j, "j")
    if j < 0:
        raise ParameterError(f"j must be nonnegative, got {j}")
    if j + 1 > config.MAX_POWER_EXPONENT:
        raise ParameterError(f"j + 1 must not exceed {config.MAX_POWER_EXPONENT}, got j={j}")
    return j


def _power_sum(N: int, j: int, family: Family) -> float:
    """sum_{i=1}^{N-1} (i-1)^(j+1), or (i-1/2)^(j+1), exactly rounded."""
    e = j + 1
    if family is Family.X:
        return float(sum(k**e for k in range(N - 1)))
    # (i - 1/2)^e = (2i - 1)^e / 2^e, summed over integers first
    return sum((2 * i - 1) ** e for i in range(1, N)) / 2**e


def _center(N: int, family: Family) -> float:
    return N - 1.0 if family is Family.X else N - 0.5


def nu_bound(N: int, family: Family) -> float:
    """Upper end of the proven region: M - sqrt(M), with M = N-1 or N-1/2."""
    M = _center(_check_N(N), Family(family))
    return M - math.sqrt(M)


def _coefficient_terms(N: int, nu, j: int, family: Family):
    M = _center(N, family)
    first = _power_sum(N, j, family) / ((j + 1) * np.power(nu, j + 1))
    return first, nu / (j + 2), M / (j + 1)


def _coefficient(N: int, nu: float, j: int, family: Family) -> float:
    N = _check_N(N)
    j = _check_j(j)
    nu = float(nu)
    if not nu > 0:
        raise ParameterError(f"nu must be positive, got {nu!r}")
    first, second, third = _coefficient_terms(N, nu, j, family)
    return math.fsum([float(first), second, -third])


def coefficient_x(N: int, nu: float, j: int) -> float:
    """x_j = S/((j+1) nu^(j+1)) + nu/(j+2) - M/(j+1), S = sum (i-1)^(j+1), M = N-1."""
    return _coefficient(N, nu, j, Family.X)


def coefficient_x_prime(N: int, nu_prime: float, j: int) -> float:
    """x'_j: as x_j with half-integer powers (i-1/2)^(j+1) and M' = N-1/2."""
    return _coefficient(N, nu_prime, j, Family.X_PRIME)


def x1_closed_form(M: float, nu: float) -> float:
    """(4 nu^3 - 6 M nu^2 + 2(M-1)^3 + 3(M-1)^2 + M - 1) / (12 nu^2); the j = 1 coefficient."""
    return (4 * nu**3 - 6 * M * nu**2 + 2 * (M - 1) ** 3 + 3 * (M - 1) ** 2 + M - 1) / (12 * nu**2)


def boundary_witness(N: int, family: Family = Family.X, delta: float = 1e-3) -> CoefficientPoint:
    """The j = 0 coefficient just past the proven nu bound; may be negative."""
    family = Family(family)
    nu = nu_bound(N, family) * (1.0 + delta)
    return CoefficientPoint(int(N), 0, nu, family, _coefficient(N, nu, 0, family))


@dataclass(frozen=True)
class CoefficientSweepReport:
    family: Family
    N_min: int
    N_max: int
    j_max: int
    grid_density: int
    points_checked: int
    worst_relative_margin: float
    worst_point: CoefficientPoint
    all_hold: bool

    def to_dict(self) -> dict:
        data = asdict(self)
        data["family"] = self.family.value
        data["worst_point"] = self.worst_point.to_dict()
        return data


def _sweep_one_N(N: int, j_max: int, grid_density: int, family: Family) -> Tuple[float, CoefficientPoint, int]:
    nus = nu_bound(N, family) * np.arange(1, grid_density + 1) / grid_density
    worst, worst_point, checked = math.inf, None, 0
    for j in range(j_max + 1):
        first, second, third = _coefficient_terms(N, nus, j, family)
        values = first + second - third
        scale = np.maximum(np.maximum(np.abs(first), np.abs(second)), abs(third))
        relative = values / scale
        k = int(np.argmin(relative))
        checked += len(nus)
        if relative[k] < worst:
            worst = float(relative[k])
            worst_point = CoefficientPoint(N, j, float(nus[k]), family, float(values[k]))
    return worst, worst_point, checked


def coefficients_nonnegative_sweep(
    N_range: Sequence[int],
    j_max: int,
    grid_density: int,
    family: Family = Family.X,
    workers: Optional[int] = None,
) -> CoefficientSweepReport:
    """
    Evaluate the coefficients of one family on a uniform nu grid over
    (0, M - sqrt(M)] for every N and j <= j_max; report the worst value
    relative to the largest term of its formula.
    """
    family = Family(family)
    Ns = [_check_N(N) for N in N_range]
    if not Ns:
        raise ParameterError("N_range is empty")
    if max(Ns) > 1000:
        raise ParameterError(f"N_range must lie within [3, 1000], got max {max(Ns)}")
    j_max = _check_j(j_max)
    grid_density = _as_int(grid_density, "grid_density")
    if grid_density < 1:
        raise ParameterError(f"grid_density must be positive, got {grid_density}")

    run = partial(_sweep_one_N, j_max=j_max, grid_density=grid_density, family=family)
    if workers and workers > 1 and len(Ns) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, Ns))
    else:
        results = [run(N) for N in Ns]

    worst, worst_point, _ = min(results, key=lambda r: r[0])
    checked = sum(r[2] for r in results)
    report = CoefficientSweepReport(
        family=family,
        N_min=min(Ns),
        N_max=max(Ns),
        j_max=j_max,
        grid_density=grid_density,
        points_checked=checked,
        worst_relative_margin=worst,
        worst_point=worst_point,
        all_hold=worst >= -config.COEFFICIENT_TOLERANCE,
    )
    logger.info("%s coefficient sweep: %d points, worst relative value %.3g", family.value, checked, worst)
    return report


# --- Direct log-ratio definitions ---


def _check_direct_args(N: int, p: float, n: int) -> Tuple[int, float, int]:
    N = _check_N(N)
    p = _check_p(p)
    n = _as_int(n, "n")
    # every factor 1 - (i-1)/(n-1) (or 1 - (i-1/2)/(n-1/2)) is positive iff n >= N
    if n < N:
        raise ParameterError(f"log arguments are not positive for N={N}, n={n}")
    return N, p, n


def direct_x(N: int, p: float, n: int) -> float:
    """
    x = (1/p) ln[(n-1)^(N-1) e^(-(n-1)p) / ((n-1)^(N-1 falling) (1-p)^(n-N))],
    evaluated from its log-sum definition.
    """
    N, p, n = _check_direct_args(N, p, n)
    logs = np.log1p(-np.arange(N - 1, dtype=float) / (n - 1))
    return -math.fsum(logs.tolist()) / p - (n - N) / p * math.log1p(-p) - (n - 1)


def direct_x_prime(N: int, p: float, n: int) -> float:
    """x' = the same log ratio with n - 1/2 in place of n - 1 in the numerator."""
    N, p, n = _check_direct_args(N, p, n)
    logs = np.log1p(-(np.arange(1, N, dtype=float) - 0.5) / (n - 0.5))
    return -math.fsum(logs.tolist()) / p - (n - N) / p * math.log1p(-p) - (n - 0.5)


def x_series(N: int, p: float, n: int, terms: int, family: Family = Family.X) -> float:
    """Truncated power series sum_{j < terms} x_j p^j at nu = (n-1)p (or (n-1/2)p)."""
    family = Family(family)
    shift = 1.0 if family is Family.X else 0.5
    nu = (n - shift) * p
    return math.fsum(_coefficient(N, nu, j, family) * p**j for j in range(terms))
