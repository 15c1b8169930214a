"""Constrained reference governing for linear systems with input delay.

The package pre-stabilizes an input-delayed LTI plant with static state
feedback, certifies the delayed loop with one of three Lyapunov functionals
(checked and searched through eigenvalue tests), and runs an explicit
reference governor that filters the requested setpoint so the constrained
loop provably never violates its limits.
"""

from ._backend import ACTIVE_BACKEND
from .erg import DsmBreakdown, ErgConfig, attraction_field, dsm, governor_step, run_scenario
from .errors import (
    DegenerateConstraintError,
    ErgDelayError,
    HistoryUnderrunError,
    InfeasibleError,
    InitialMarginViolatedError,
    InsufficientSpanError,
    NoEquilibriumError,
    ReferenceNotStrictlyAdmissibleError,
    ScenarioError,
)
from .model import (
    ConstraintRow,
    ConstraintSet,
    DelaySystem,
    Equilibrium,
    PrimaryGain,
    primary_input,
    residuals,
    steady_state,
)
from .scenario import (
    Scenario,
    load_scenario,
    preset_names,
    preset_scenario,
    scenario_from_dict,
)
from .sim import (
    HistoryBuffer,
    HistorySegment,
    PredictionResult,
    SimState,
    predict,
    step_closed_loop,
)
from .stability import (
    KrasovskiiQCertificate,
    KrasovskiiRCertificate,
    RazumikhinCertificate,
    certificate_from_dict,
    eval_functional,
    find_slack,
    functional_trajectory,
    gamma_threshold,
    lmi_feasible,
    lmi_margin,
    lmi_matrix,
    optimize_p_volume,
    synthesize,
)
from .trace import Trace

__version__ = "0.1.0"

__all__ = [
    "ACTIVE_BACKEND",
    "ConstraintRow",
    "ConstraintSet",
    "DegenerateConstraintError",
    "DelaySystem",
    "DsmBreakdown",
    "Equilibrium",
    "ErgConfig",
    "ErgDelayError",
    "HistoryBuffer",
    "HistorySegment",
    "HistoryUnderrunError",
    "InfeasibleError",
    "InitialMarginViolatedError",
    "InsufficientSpanError",
    "KrasovskiiQCertificate",
    "KrasovskiiRCertificate",
    "NoEquilibriumError",
    "PredictionResult",
    "PrimaryGain",
    "RazumikhinCertificate",
    "ReferenceNotStrictlyAdmissibleError",
    "Scenario",
    "ScenarioError",
    "SimState",
    "Trace",
    "attraction_field",
    "certificate_from_dict",
    "dsm",
    "eval_functional",
    "find_slack",
    "functional_trajectory",
    "gamma_threshold",
    "governor_step",
    "lmi_feasible",
    "lmi_margin",
    "lmi_matrix",
    "load_scenario",
    "optimize_p_volume",
    "predict",
    "preset_names",
    "preset_scenario",
    "primary_input",
    "residuals",
    "run_scenario",
    "scenario_from_dict",
    "steady_state",
    "step_closed_loop",
    "synthesize",
]
