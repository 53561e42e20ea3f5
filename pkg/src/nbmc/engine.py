"""
Sequential estimation engine.

``run_until_stop`` reads outcomes from a source until the N-th occurrence and
returns the estimate, or a partial SessionRecord when the source runs dry or
the trial cap is reached. ``coverage_experiment`` repeats synthetic runs to
measure how often the interval event actually happens.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Union

import numpy as np

from . import config_base as config
from .core import EstimationResult, StoppingPlan, check_conditions_new
from .exact_conf import exact_confidence
from .exceptions import ParameterError, StreamFormatError
from .models import SessionRecord, SessionStatus, SourceKind
from .sources import Outcome, SyntheticSource, TrialSource
from .specfun import _as_int, _check_probability

logger = logging.getLogger(__name__)


def new_session(plan: StoppingPlan, source: TrialSource) -> SessionRecord:
    record = SessionRecord(
        N=plan.N,
        mu1=plan.mu1,
        mu2=plan.mu2,
        c_bar=plan.c_bar,
        source_kind=source.kind,
    )
    if isinstance(source, SyntheticSource):
        record.seed = source.seed if isinstance(source.seed, int) else None
        record.p = source.p
        record.rng_name = source.rng_name
        record.rng_version = source.rng_version
    else:
        record.replay_path = getattr(source, "name", None)
    return record


def _resume(record: SessionRecord, plan: StoppingPlan, source: TrialSource) -> None:
    if (record.N, record.mu1, record.mu2) != (plan.N, plan.mu1, plan.mu2):
        raise ParameterError(f"session {record.id} was run with a different plan")
    if SessionStatus(record.status) is SessionStatus.STOPPED:
        raise ParameterError(f"session {record.id} has already stopped")
    if isinstance(source, SyntheticSource) and record.rng_version not in (None, source.rng_version):
        raise ParameterError(
            f"session {record.id} used rng version {record.rng_version}, this build draws version {source.rng_version}"
        )
    # Synthetic and replay sources restart from their first outcome: fast-forward
    # past what the session already read. A live stream continues where it is.
    skip = getattr(source, "skip", None)
    if skip is None or record.trials == 0 or source.kind is SourceKind.STREAM:
        return
    seen = skip(record.trials)
    if seen != record.successes:
        raise ParameterError(
            f"source does not reproduce session {record.id}: {seen} events in the first "
            f"{record.trials} outcomes, expected {record.successes}"
        )


def run_until_stop(
    plan: StoppingPlan,
    source: TrialSource,
    max_trials: Optional[int] = None,
    resume_from: Optional[SessionRecord] = None,
) -> Union[EstimationResult, SessionRecord]:
    """
    Run trials until N occurrences. Returns an EstimationResult when the rule
    stops, otherwise the SessionRecord with status EXHAUSTED (source ended)
    or CAPPED (``max_trials`` reached; counts include resumed trials).
    """
    if max_trials is not None:
        max_trials = _as_int(max_trials, "max_trials")
        if max_trials < plan.N:
            raise ParameterError(f"max_trials must be at least N={plan.N}, got {max_trials}")

    if resume_from is not None:
        _resume(resume_from, plan, source)
        record = resume_from
    else:
        record = new_session(plan, source)
    record.status = SessionStatus.RUNNING

    trials, successes = record.trials, record.successes
    if isinstance(source, SyntheticSource):
        limit = None if max_trials is None else max(0, max_trials - trials)
        consumed, found = source.consume_until(plan.N - successes, limit)
        trials += consumed
        successes += found
    else:
        while successes < plan.N and (max_trials is None or trials < max_trials):
            try:
                outcome = source.next_outcome()
            except StreamFormatError:
                # Counts up to the bad line stay on the record; status stays RUNNING.
                record.trials, record.successes = trials, successes
                raise
            if outcome is Outcome.EXHAUSTED:
                record.trials, record.successes = trials, successes
                record.status = SessionStatus.EXHAUSTED
                logger.info("Source exhausted after %d trials (%d of %d events)", trials, successes, plan.N)
                return record
            trials += 1
            successes += outcome is Outcome.OCCURRED

    record.trials, record.successes = trials, successes
    if successes == plan.N:
        record.status = SessionStatus.STOPPED
        result = EstimationResult.from_trials(trials, plan)
        logger.info("Stopped after %d trials: p_hat=%.6g", trials, result.p_hat)
        return result
    record.status = SessionStatus.CAPPED
    logger.info("Trial cap %d reached with %d of %d events", max_trials, successes, plan.N)
    return record


# --- Coverage experiments ---


def _stopping_times_chunk(N: int, p: float, seed: int, start: int, stop: int) -> np.ndarray:
    times = np.empty(stop - start, dtype=np.int64)
    for i, run_index in enumerate(range(start, stop)):
        source = SyntheticSource(p, np.random.SeedSequence([seed, run_index]))
        times[i] = source.consume_until(N)[0]
    return times


def simulate_stopping_times(N: int, p: float, runs: int, seed: int, workers: Optional[int] = None) -> np.ndarray:
    """
    Trial counts of ``runs`` independent synthetic runs. Run i draws from
    SeedSequence([seed, i]), so the result does not depend on ``workers``.
    """
    p = _check_probability(p)
    runs = _as_int(runs, "runs")
    seed = _as_int(seed, "seed")
    if runs < 1:
        raise ParameterError(f"runs must be positive, got {runs}")
    if not workers or workers <= 1 or runs < 2:
        return _stopping_times_chunk(N, p, seed, 0, runs)

    chunk = math.ceil(runs / workers)
    bounds = [(lo, min(lo + chunk, runs)) for lo in range(0, runs, chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_stopping_times_chunk, N, p, seed, lo, hi) for lo, hi in bounds]
        return np.concatenate([f.result() for f in futures])


@dataclass(frozen=True)
class CoverageReport:
    N: int
    mu1: float
    mu2: float
    p_true: float
    runs: int
    seed: int
    covered: int
    lower_misses: int
    upper_misses: int
    empirical_coverage: float
    standard_error: float
    exact_c: float
    exact_c1: float
    exact_c2: float
    c_bar: float
    conditions_ok: bool
    rng_name: str = config.RNG_NAME
    rng_version: int = config.RNG_VERSION
    warnings: List[str] = field(default_factory=list)

    @property
    def empirical_c1(self) -> float:
        return self.lower_misses / self.runs

    @property
    def empirical_c2(self) -> float:
        return self.upper_misses / self.runs

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("warnings")
        data["empirical_c1"] = self.empirical_c1
        data["empirical_c2"] = self.empirical_c2
        return data


def coverage_experiment(
    N: int,
    mu1: float,
    mu2: float,
    p_true: float,
    runs: int,
    seed: int,
    workers: Optional[int] = None,
) -> CoverageReport:
    """
    Fraction of ``runs`` synthetic runs whose estimate lands in
    [p_true/mu2, p_true*mu1], next to the exact c and c_bar.

    The event is tested on the trial count (n1 <= n <= n2) so that it agrees
    with the exact computation at interval endpoints.
    """
    plan = StoppingPlan(N, mu1, mu2)
    exact = exact_confidence(plan.N, p_true, plan.mu1, plan.mu2)
    warnings = []
    conditions = check_conditions_new(plan.N, plan.mu1, plan.mu2)
    if not conditions.all_ok:
        message = f"conditions do not hold for N={plan.N}, mu1={plan.mu1}, mu2={plan.mu2}: c_bar is not a lower bound"
        logger.warning(message)
        warnings.append(message)

    times = simulate_stopping_times(plan.N, p_true, runs, seed, workers)
    lower = int(np.count_nonzero(times < exact.n1))
    upper = int(np.count_nonzero(times > exact.n2))
    covered = len(times) - lower - upper
    c = exact.c
    logger.info("Coverage N=%d p=%g: %d/%d covered (exact c=%.6g)", plan.N, p_true, covered, runs, c)
    return CoverageReport(
        N=plan.N,
        mu1=plan.mu1,
        mu2=plan.mu2,
        p_true=float(p_true),
        runs=int(runs),
        seed=int(seed),
        covered=covered,
        lower_misses=lower,
        upper_misses=upper,
        empirical_coverage=covered / runs,
        standard_error=math.sqrt(c * (1.0 - c) / runs),
        exact_c=c,
        exact_c1=exact.c1,
        exact_c2=exact.c2,
        c_bar=plan.c_bar,
        conditions_ok=conditions.all_ok,
        warnings=warnings,
    )
