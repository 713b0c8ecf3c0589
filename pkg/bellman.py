"""
One-step backward operators of the probability criterion.

For player k at stage n, state i outside D and residual goal vector lam:

    T^a u(i, lam) = 1{r_k(i, a) >= lam_k} p(D | i, a)
                    + sum_{j not in D} u(j, canon(lam - r(i, a))) p(j | i, a)

apply_mixed averages this over a product of mixed actions; best_response
takes the maximum over player k's pure actions, which attains the supremum
over the simplex because the operator is affine in player k's weights.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from config import TIE_TOLERANCE
from game_core import (Action, GoalVector, JointAction, LatticeError, StageModel, State,
                       format_goal, subtract_reward, to_rational)


@dataclass(frozen=True)
class MixedAction:
    """Probability distribution over one player's actions at one cell"""
    weights: Tuple[Tuple[Action, Fraction], ...]

    @classmethod
    def point(cls, action: Action) -> 'MixedAction':
        return cls(((action, Fraction(1)),))

    @classmethod
    def uniform(cls, actions: Sequence[Action]) -> 'MixedAction':
        share = Fraction(1, len(actions))
        return cls(tuple((a, share) for a in actions))

    @classmethod
    def from_dict(cls, data: Dict[Action, object]) -> 'MixedAction':
        return cls(tuple((str(a), to_rational(w)) for a, w in data.items()))

    def to_dict(self) -> Dict[Action, str]:
        return {a: str(w) for a, w in self.weights}

    def support(self) -> List[Tuple[Action, Fraction]]:
        return [(a, w) for a, w in self.weights if w != 0]

    def weight(self, action: Action) -> Fraction:
        return sum((w for a, w in self.weights if a == action), Fraction(0))

    def is_valid_for(self, actions: Sequence[Action]) -> bool:
        allowed = set(actions)
        labels = [a for a, _ in self.weights]
        return (len(labels) == len(set(labels))
                and all(a in allowed for a in labels)
                and all(w >= 0 for _, w in self.weights)
                and sum((w for _, w in self.weights), Fraction(0)) == 1)


class CellValueFn:
    """Continuation values u(j, goal) of one player at one stage.

    Goals whose component for `player` is 0 always read 1 (clamped-lattice
    convention); other lookups come from the stored table.
    """

    def __init__(self, player: int, states: Sequence[State] = (), goals: Sequence[GoalVector] = (),
                 values: Optional[np.ndarray] = None, default: Optional[float] = None):
        self.player = player
        self.state_index = {s: pos for pos, s in enumerate(states)}
        self.goal_index = {g: pos for pos, g in enumerate(goals)}
        self.values = values
        self.default = default

    @classmethod
    def constant(cls, player: int, value: float) -> 'CellValueFn':
        return cls(player, default=value)

    @classmethod
    def indicator(cls, player: int) -> 'CellValueFn':
        """u^0(i, lam) = 1 iff lam_k <= 0, i.e. canonical lam_k == 0"""
        return cls(player, default=0.0)

    @classmethod
    def from_mapping(cls, player: int, mapping: Dict[Tuple[State, GoalVector], float]) -> 'CellValueFn':
        states = sorted({s for s, _ in mapping})
        goals = sorted({g for _, g in mapping})
        fn = cls(player, states, goals, np.zeros((len(states), len(goals))))
        for (s, g), v in mapping.items():
            fn.values[fn.state_index[s], fn.goal_index[g]] = v
        return fn

    def __call__(self, state: State, goal: GoalVector) -> float:
        if goal[self.player] == 0:
            return 1.0
        if self.default is not None:
            return self.default
        try:
            return float(self.values[self.state_index[state], self.goal_index[goal]])
        except KeyError:
            raise LatticeError(
                f"No continuation cell ({state}, {format_goal(goal)}); the goal lattice is inconsistent")


def apply_pure(stage: StageModel, target: FrozenSet[State], k: int, i: State, goal: GoalVector,
               joint: JointAction, next_values: CellValueFn) -> float:
    """T^a for player k at cell (i, goal)"""
    if goal[k] == 0:
        return 1.0
    reward = stage.reward_vector(i, joint)
    hit, rest = stage.split_row(i, joint, target)
    value = hit if reward[k] >= goal[k] else 0.0
    if rest:
        following = subtract_reward(goal, reward)
        for j, p in rest:
            value += p * next_values(j, following)
    return min(max(value, 0.0), 1.0)


def apply_mixed(stage: StageModel, target: FrozenSet[State], k: int, i: State, goal: GoalVector,
                profile: Sequence[MixedAction], next_values: CellValueFn) -> float:
    """T^phi: product-weighted average of T^a over the joint support"""
    if goal[k] == 0:
        return 1.0
    supports = [m.support() for m in profile]
    value = 0.0
    for combo in product(*supports):
        weight = 1.0
        for _, w in combo:
            weight *= float(w)
        joint = tuple(a for a, _ in combo)
        value += weight * apply_pure(stage, target, k, i, goal, joint, next_values)
    return min(max(value, 0.0), 1.0)


def best_response(stage: StageModel, target: FrozenSet[State], k: int, i: State, goal: GoalVector,
                  others: Sequence[Optional[MixedAction]], next_values: CellValueFn
                  ) -> Tuple[float, List[Action]]:
    """Maximum of T over player k's pure actions, with every maximizer in declared order.

    `others` has one entry per player; entry k is ignored.
    """
    candidates = stage.action_list(k, i)
    values = []
    for action in candidates:
        profile = list(others)
        profile[k] = MixedAction.point(action)
        values.append(apply_mixed(stage, target, k, i, goal, profile, next_values))
    best = max(values)
    tolerance = TIE_TOLERANCE * max(1.0, abs(best))
    argmax = [a for a, v in zip(candidates, values) if best - v <= tolerance]
    return best, argmax
