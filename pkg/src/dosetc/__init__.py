"""Resilient event-triggered control of networked systems under DoS attacks."""
from .config import RunConfig, build_system, load, case_study_config
from .core import SimOptions, Simulator, System, flow_step, run
from .timing import TimingParams, check_conditions, derived_constants, tau_mati

__all__ = [
    "RunConfig", "SimOptions", "Simulator", "System", "TimingParams", "build_system",
    "check_conditions", "derived_constants", "flow_step", "load", "case_study_config", "run",
    "tau_mati",
]
__version__ = "0.1.0"
