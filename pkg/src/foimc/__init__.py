"""Fractional-order IMC tuning for FOPTD processes to gain and phase margin specs."""

from .errors import (
    DomainError,
    EmptyFeasibleSetError,
    FoImcError,
    InfeasibleSpecError,
    NoIntersectionError,
    SpecError,
    VerificationError,
)
from .feasibility import BetaFeasibleSet, feasible_beta_set
from .model import (
    FoFilterParams,
    ProcessModel,
    RobustnessSpec,
    TuningResult,
    eval_complementary,
    eval_filter,
    eval_open_loop,
    eval_sensitivity,
)
from .solver import SolverOptions, omega_g, omega_p, tune
from .verification import (
    MarginReport,
    brute_force_tune,
    check_disturbance_rejection,
    measure_margins,
    step_response,
)

__version__ = "0.1.0"
