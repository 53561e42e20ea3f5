"""
nbmc: negative-binomial Monte Carlo estimation with guaranteed confidence.

Run independent trials until the N-th occurrence of an event; (N-1)/n then
estimates its probability p, and for N chosen by the planners the relative
interval [p/mu2, p*mu1] is met with at least the asymptotic confidence c_bar,
whatever p is.
"""

from .config_base import TOOL_VERSION as __version__
from .core import (
    ConditionReport,
    EstimationResult,
    RuleVersion,
    StoppingPlan,
    asymptotic_confidence,
    check_conditions_legacy,
    check_conditions_new,
    confidence_interval,
    estimate,
    min_margin,
    min_margin_for_confidence,
    min_N_for,
)
from .engine import coverage_experiment, run_until_stop
from .exact_conf import ExactConfidence, exact_confidence, proposition_holds
from .exceptions import (
    NBMCError,
    ParameterError,
    PreconditionError,
    StreamFormatError,
    TermCapError,
    UnachievableError,
    VerificationError,
)
from .sources import make_synthetic_source

__all__ = [
    "__version__",
    "ConditionReport",
    "EstimationResult",
    "ExactConfidence",
    "NBMCError",
    "ParameterError",
    "PreconditionError",
    "RuleVersion",
    "StoppingPlan",
    "StreamFormatError",
    "TermCapError",
    "UnachievableError",
    "VerificationError",
    "asymptotic_confidence",
    "check_conditions_legacy",
    "check_conditions_new",
    "confidence_interval",
    "coverage_experiment",
    "estimate",
    "exact_confidence",
    "make_synthetic_source",
    "min_N_for",
    "min_margin",
    "min_margin_for_confidence",
    "proposition_holds",
    "run_until_stop",
]
