"""
Two insurance companies in a boom state "1" and a slump state "2".

Both choose to invest or not in the boom; the slump is the target set and
both companies exit there. Stage-0 rewards differ from the rewards of every
later stage, so the model is one prefix stage plus a stationary tail.
"""

from fractions import Fraction
from typing import Dict, Tuple

from game_core import GameModel, GoalVector, StageModel

BOOM = "1"
SLUMP = "2"
INITIAL_GOALS = (Fraction(2), Fraction(3))

# p(1 | 1, a, b) for every stage
STAY_PROBABILITY = {
    ("a11", "b11"): Fraction(11, 20),
    ("a11", "b12"): Fraction(3, 5),
    ("a12", "b11"): Fraction(9, 20),
    ("a12", "b12"): Fraction(3, 5),
}

FIRST_STAGE_REWARDS = {
    ("a11", "b11"): (1, 1),
    ("a11", "b12"): (0, 0),
    ("a12", "b11"): (0, 1),
    ("a12", "b12"): (1, 1),
}

LATER_REWARDS = {
    ("a11", "b11"): (1, 0),
    ("a11", "b12"): (1, 1),
    ("a12", "b11"): (0, 0),
    ("a12", "b12"): (0, 0),
}


def _stage(index: int, rewards: Dict[Tuple[str, str], Tuple[int, int]]) -> StageModel:
    actions = {
        BOOM: (("a11", "a12"), ("b11", "b12")),
        SLUMP: (("a21",), ("b21",)),
    }
    kernel = {(BOOM, joint): {BOOM: stay, SLUMP: 1 - stay} for joint, stay in STAY_PROBABILITY.items()}
    kernel[(SLUMP, ("a21", "b21"))] = {SLUMP: Fraction(1)}
    return StageModel.build(index, (BOOM, SLUMP), actions,
                            {(BOOM, joint): vector for joint, vector in rewards.items()}, kernel)


def build_insurance_model() -> Tuple[GameModel, GoalVector]:
    """The duopoly model and its initial goal vector (2, 3)"""
    model = GameModel(num_players=2, target_set=frozenset({SLUMP}),
                      prefix=(_stage(0, FIRST_STAGE_REWARDS),), tail=_stage(1, LATER_REWARDS))
    return model, INITIAL_GOALS
