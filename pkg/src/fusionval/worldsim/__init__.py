"""World simulation: ground truth, deceiver and observer-reporters."""
from .deception import DeceivedView, apply_deception, identity_view
from .observer import OriginKind, Report, blue_positions, initial_intel, intel_count, observe
from .scenario import (
    ConfigError,
    DeceptionPolicy,
    ObserverModel,
    Scenario,
    load_scenario,
    scenario_from_mapping,
    scenario_to_toml,
)
from .world import BLUE, RED, Entity, WorldState, init_world, step_world

__all__ = [
    "BLUE",
    "RED",
    "ConfigError",
    "DeceivedView",
    "DeceptionPolicy",
    "Entity",
    "ObserverModel",
    "OriginKind",
    "Report",
    "Scenario",
    "WorldState",
    "apply_deception",
    "blue_positions",
    "identity_view",
    "init_world",
    "initial_intel",
    "intel_count",
    "load_scenario",
    "observe",
    "scenario_from_mapping",
    "scenario_to_toml",
    "step_world",
]
