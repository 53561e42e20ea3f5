"""
Special functions behind every confidence computation in nbmc.

Integer-order regularized lower incomplete gamma, log-factorials, falling
factorials and the negative-binomial distribution of the stopping time
(number of trials needed for N occurrences). Everything here is pure and
reentrant.

Poisson and binomial terms are evaluated with Loader's saddle-point form
(Stirling remainder plus deviance), which keeps full relative precision in
the log domain where the naive ``k*log(x) - x - lgamma(k+1)`` loses digits to
cancellation.
"""

import logging
import math
import operator
from typing import NewType

import numpy as np
from scipy.special import gammaln, logsumexp

from . import config_base as config
from .exceptions import ParameterError, TermCapError

logger = logging.getLogger(__name__)

# Natural log of a probability (<= 0) or of a positive magnitude.
LogProb = NewType("LogProb", float)

_LN_2PI = math.log(2.0 * math.pi)
_LN_SQRT_2PI = 0.5 * _LN_2PI

_LOG_FACTORIALS = tuple(math.log(math.factorial(k)) for k in range(config.LOG_FACTORIAL_TABLE_MAX + 1))

# Stirling remainder lgamma(n+1) - (n+1/2)log(n) + n - log(sqrt(2 pi)), tabulated
# where the asymptotic series is not yet accurate. Index 0 is unused.
_STIRLERR_SMALL = np.array(
    [0.0] + [float(gammaln(n + 1.0)) - (n + 0.5) * math.log(n) + n - _LN_SQRT_2PI for n in range(1, 16)]
)
_S0 = 1.0 / 12.0
_S1 = 1.0 / 360.0
_S2 = 1.0 / 1260.0
_S3 = 1.0 / 1680.0
_S4 = 1.0 / 1188.0


def _as_int(value, name: str) -> int:
    try:
        return operator.index(value)
    except TypeError:
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ParameterError(f"{name} must be an integer, got {value!r}") from None


def _check_probability(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ParameterError(f"{name} must lie in (0, 1), got {p!r}")
    return p


def check_term_cap(terms: int) -> None:
    """Raise TermCapError when a sum would exceed the configured term cap."""
    if terms > config.MAX_SUMMED_TERMS:
        raise TermCapError(terms, config.MAX_SUMMED_TERMS)


# --- Loader's saddle-point building blocks ---


def _stirlerr(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    out = np.empty_like(n)
    small = n <= 15
    if small.any():
        out[small] = _STIRLERR_SMALL[n[small].astype(np.int64)]
    big = ~small
    if big.any():
        nb = n[big]
        nn = nb * nb
        out[big] = np.where(
            nb > 500,
            (_S0 - _S1 / nn) / nb,
            np.where(
                nb > 80,
                (_S0 - (_S1 - _S2 / nn) / nn) / nb,
                np.where(
                    nb > 35,
                    (_S0 - (_S1 - (_S2 - _S3 / nn) / nn) / nn) / nb,
                    (_S0 - (_S1 - (_S2 - (_S3 - _S4 / nn) / nn) / nn) / nn) / nb,
                ),
            ),
        )
    return out


def _bd0(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Deviance term x*log(x/m) + m - x, accurate when x is close to m."""
    x, m = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(m, dtype=float))
    out = np.empty(x.shape)
    d = x - m
    near = np.abs(d) < 0.1 * (x + m)
    far = ~near
    if far.any():
        xf = x[far]
        out[far] = xf * np.log(xf / m[far]) + m[far] - xf
    if near.any():
        v = d[near] / (x[near] + m[near])
        s = d[near] * v
        ej = 2.0 * x[near] * v
        v2 = v * v
        for j in range(1, 1000):
            ej = ej * v2
            s_next = s + ej / (2 * j + 1)
            if np.array_equal(s_next, s):
                break
            s = s_next
        out[near] = s
    return out


def _log_poisson_pmf(k: np.ndarray, lam: float) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    zero = k == 0
    out[zero] = -lam
    pos = ~zero
    if pos.any():
        kp = k[pos]
        out[pos] = -_stirlerr(kp) - _bd0(kp, lam) - 0.5 * (_LN_2PI + np.log(kp))
    return out


# --- Public operations ---


def log_factorial(k: int) -> float:
    """ln(k!), exact table up to k = 20."""
    k = _as_int(k, "k")
    if k < 0:
        raise ParameterError(f"k must be nonnegative, got {k}")
    if k <= config.LOG_FACTORIAL_TABLE_MAX:
        return _LOG_FACTORIALS[k]
    return float(gammaln(k + 1.0))


def reg_lower_incomplete_gamma(r: int, x: float) -> float:
    """
    Regularized lower incomplete gamma for integer order r >= 1.

    Uses the Poisson identity gamma(r, x) = Pr[Poisson(x) >= r]. Below the mode
    (x < r) the upper Poisson tail is summed directly; otherwise the function
    is 1 - Pr[Poisson(x) < r]. Both sums are truncated to the window where the
    terms are representable and accumulated in log space.
    """
    r = _as_int(r, "r")
    if r < 1:
        raise ParameterError(f"r must be a positive integer, got {r}")
    x = float(x)
    if not x >= 0.0:
        raise ParameterError(f"x must be nonnegative, got {x!r}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0

    width = int(math.ceil(config.GAMMA_WINDOW_SIGMAS * math.sqrt(x))) + config.GAMMA_WINDOW_GUARD
    if x < r:
        ks = np.arange(r, r + width, dtype=float)
        log_tail = logsumexp(_log_poisson_pmf(ks, x))
        return min(1.0, math.exp(log_tail))
    ks = np.arange(max(0, r - width), r, dtype=float)
    log_head = logsumexp(_log_poisson_pmf(ks, x))
    return max(0.0, -math.expm1(log_head))


def falling_factorial_log(k: float, i: int) -> float:
    """ln(k (k-1) ... (k-i+1)); the empty product (i = 0) is 1."""
    i = _as_int(i, "i")
    k = float(k)
    if i < 0:
        raise ParameterError(f"i must be nonnegative, got {i}")
    if i == 0:
        return 0.0
    if not k - i + 1 > 0:
        raise ParameterError(f"falling factorial {k}^({i}) has a nonpositive factor")
    return math.fsum(np.log(k - np.arange(i, dtype=float)).tolist())


def negbin_log_pmf(n: int, N: int, p: float) -> float:
    """ln Pr[n trials are needed for the N-th occurrence], event probability p."""
    n = _as_int(n, "n")
    N = _as_int(N, "N")
    p = _check_probability(p)
    if N < 1:
        raise ParameterError(f"N must be at least 1, got {N}")
    if n < N:
        raise ParameterError(f"n must be at least N={N}, got {n}")
    return (
        N * math.log(p)
        + (n - N) * math.log1p(-p)
        + falling_factorial_log(n - 1, N - 1)
        - log_factorial(N - 1)
    )


def negbin_log_pmf_array(ns: np.ndarray, N: int, p: float) -> np.ndarray:
    """
    Vectorised negative-binomial log pmf for n >= N.

    Written as (N/n) * Binomial(n, p) pmf at N, each factor in saddle-point form.
    """
    ns = np.asarray(ns, dtype=float)
    q = 1.0 - p
    out = np.empty_like(ns)
    first = ns == N
    out[first] = N * math.log(p)
    rest = ~first
    if rest.any():
        n = ns[rest]
        k = n - N
        lc = (
            _stirlerr(n)
            - _stirlerr(np.full_like(n, float(N)))
            - _stirlerr(k)
            - _bd0(np.full_like(n, float(N)), n * p)
            - _bd0(k, n * q)
        )
        lf = _LN_2PI + math.log(N) + np.log1p(-N / n)
        out[rest] = np.log(N / n) + lc - 0.5 * lf
    return out


def negbin_range_sum(lo: int, hi: int, N: int, p: float) -> float:
    """
    Pr[lo <= n <= hi] for the stopping time n, summed in ascending n.

    Terms are produced in blocks and each block is added with ``math.fsum``,
    so the result is a correctly rounded sum of the double-precision terms.
    """
    N = _as_int(N, "N")
    p = _check_probability(p)
    if N < 1:
        raise ParameterError(f"N must be at least 1, got {N}")
    lo = max(_as_int(lo, "lo"), N)
    hi = _as_int(hi, "hi")
    if hi < lo:
        return 0.0
    check_term_cap(hi - lo + 1)

    partials = []
    block = config.SUM_BLOCK_SIZE
    for start in range(lo, hi + 1, block):
        ns = np.arange(start, min(start + block, hi + 1), dtype=float)
        partials.append(math.fsum(np.exp(negbin_log_pmf_array(ns, N, p)).tolist()))
    return min(1.0, math.fsum(partials))


def negbin_cdf(k: int, N: int, p: float) -> float:
    """Pr[n <= k]; zero when k < N."""
    return negbin_range_sum(_as_int(N, "N"), k, N, p)
