"""Funnel control: controllers, plants, guarded simulation and curated scenarios."""

from .controllers import ControllerSpec, FunnelBreach, InfeasibleConfigError
from .funnel import FunnelFunction, check_class, eval_phi
from .lti import LtiSystem, byrnes_isidori, relative_degree
from .plants import Signal, build_plant
from .scenarios import Scenario, catalog, run_config
from .sim import RunReport, Trajectory, assemble, integrate, verify_invariants

__all__ = [
    "ControllerSpec", "FunnelBreach", "InfeasibleConfigError", "FunnelFunction", "check_class", "eval_phi",
    "LtiSystem", "byrnes_isidori", "relative_degree", "Signal", "build_plant", "Scenario", "catalog",
    "run_config", "RunReport", "Trajectory", "assemble", "integrate", "verify_invariants",
]

__version__ = "0.1.0"
