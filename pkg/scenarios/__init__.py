"""
Model generators for the two worked games: the three-player energy
management system and the insurance duopoly. Both return plain GameModel
objects, so their output goes through the same validation, file format and
solver as any user model.
"""

from typing import Callable, Dict, Optional, Tuple

from game_core import GameModel, GoalVector
from scenarios.energy import (ActionCaps, EnergyParams, EnergyStageParams, HarmonicNetDemand,
                              build_energy_model, check_condition_c, convolve_demand, demo_params,
                              energy_stage_beta, energy_target_bound_holds, truncated_geometric)
from scenarios.insurance import build_insurance_model

__all__ = [
    'ActionCaps', 'EnergyParams', 'EnergyStageParams', 'HarmonicNetDemand', 'SCENARIOS',
    'build_energy_model', 'build_insurance_model', 'check_condition_c', 'convolve_demand', 'demo_params',
    'energy_stage_beta', 'energy_target_bound_holds', 'get_scenario', 'truncated_geometric',
]


def _energy_demo() -> Tuple[GameModel, Optional[GoalVector]]:
    return build_energy_model(demo_params()), None


SCENARIOS: Dict[str, Callable[[], Tuple[GameModel, Optional[GoalVector]]]] = {
    'insurance': build_insurance_model,
    'energy': _energy_demo,
}


def get_scenario(name: str) -> Tuple[GameModel, Optional[GoalVector]]:
    """Build a named scenario; returns the model and its suggested initial goals, if any"""
    builder = SCENARIOS.get(name.lower())
    if builder is None:
        raise ValueError(f"Unsupported scenario: {name}. Supported: {sorted(SCENARIOS)}")
    return builder()
