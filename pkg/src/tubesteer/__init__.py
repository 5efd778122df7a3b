"""Robust tube-MPC steering for emergency obstacle avoidance.

Core pieces: a nonlinear single-track plant with a brush tire model, an
LTV prediction-model builder with successive rear-tire linearization, a
stable-handling envelope, a disturbance-tightened lateral corridor, a
dense QP controller, and a closed-loop scenario harness.
"""

from .params import ErrorState, GlobalState, TimeGrid, VehicleParams
from .scenario import ScenarioConfig, load_scenario, parse_scenario
from .simulate import RunLog, run_scenario

__all__ = [
    "ErrorState",
    "GlobalState",
    "TimeGrid",
    "VehicleParams",
    "ScenarioConfig",
    "load_scenario",
    "parse_scenario",
    "RunLog",
    "run_scenario",
]

__version__ = "0.1.0"
