"""
Shared fixtures: the insurance duopoly, a few hand-built toy games and a
seeded generator of small random games.
"""

from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from bellman import MixedAction
from game_core import GameModel, StageModel, build_goal_lattice
from policy_eval import MarkovMultipolicy
from scenarios import build_insurance_model


def single_stage_game(num_players, actions, rewards, kernel, target=("d",), states=("s", "d")):
    """Stationary game: one tail stage and no prefix"""
    stage = StageModel.build(0, states, actions, rewards, kernel)
    return GameModel(num_players=num_players, target_set=frozenset(target), prefix=(), tail=stage)


def pure_policy(model, goals, horizon, choice):
    """Markov multipolicy playing `choice(n, state)` (one action per player) at every cell"""
    lattice = build_goal_lattice(model, goals, horizon)
    return MarkovMultipolicy.from_rule(
        model, lattice, horizon, lambda n, i, goal, stage: tuple(MixedAction.point(a) for a in choice(n, i)))


@pytest.fixture
def insurance():
    return build_insurance_model()


@pytest.fixture
def insurance_policy(insurance):
    """Both companies invest everywhere: (a11, b11)"""
    model, goals = insurance

    def build(goal_list=(goals,), horizon=10):
        return pure_policy(model, goal_list, horizon, lambda n, i: ("a11", "b11"))
    return build


@pytest.fixture
def one_player_game():
    """One decision, then absorption: 'good' earns 1, 'bad' earns 0"""
    return single_stage_game(
        1,
        {"s": [["good", "bad"]]},
        {("s", ("good",)): [1], ("s", ("bad",)): [0]},
        {("s", ("good",)): {"d": 1}, ("s", ("bad",)): {"d": 1}},
    )


@pytest.fixture
def action_independent_game():
    """Rewards and kernel ignore every action"""
    joints = [("x", "x"), ("x", "y"), ("y", "x"), ("y", "y")]
    return single_stage_game(
        2,
        {"s": [["x", "y"], ["x", "y"]]},
        {("s", joint): [1, 0] for joint in joints},
        {("s", joint): {"s": Fraction(1, 2), "d": Fraction(1, 2)} for joint in joints},
    )


@pytest.fixture
def cycling_game():
    """Matching pennies with an extra never-matching action for player 1.

    Player 1 is rewarded when the actions match, player 2 when they do not.
    Every profile that is pure at the initial cell leaves one player a gain
    of at least 1/2, and the uniform profile leaves player 1 a gain near 1/6.
    """
    actions = {"s": [["h", "t", "z"], ["h", "t"]]}
    rewards, kernel = {}, {}
    for a in ("h", "t", "z"):
        for b in ("h", "t"):
            rewards[("s", (a, b))] = [1, 0] if a == b else [0, 1]
            kernel[("s", (a, b))] = {"s": Fraction(1, 2), "d": Fraction(1, 2)}
    return single_stage_game(2, actions, rewards, kernel)


@pytest.fixture
def zero_beta_game():
    """Action 'stay' never reaches the target, so beta = 0"""
    return single_stage_game(
        1,
        {"s": [["stay", "go"]]},
        {("s", ("go",)): [1]},
        {("s", ("stay",)): {"s": 1}, ("s", ("go",)): {"d": 1}},
    )


@pytest.fixture
def leaky_game():
    """The only kernel row sums to 9/10"""
    return single_stage_game(
        1,
        {"s": [["go"]]},
        {("s", ("go",)): [1]},
        {("s", ("go",)): {"s": Fraction(2, 5), "d": Fraction(1, 2)}},
    )


def _random_row(rng, states, floor):
    """Row over `states` + 'd' with at least `floor` mass on 'd'"""
    weights = rng.integers(1, 5, size=len(states) + 1)
    total = int(weights.sum())
    free = 1 - floor
    row = {s: free * Fraction(int(w), total) for s, w in zip(states, weights[:-1])}
    row["d"] = floor + free * Fraction(int(weights[-1]), total)
    return row


def random_game(rng, num_players=2, num_states=2, num_actions=2, prefix_length=1, floor=Fraction(1, 4)):
    """Small eventually-stationary game; every row puts at least `floor` on the target 'd'"""
    states = tuple(f"s{t}" for t in range(num_states))
    action_lists = [tuple(f"a{k}{j}" for j in range(num_actions)) for k in range(num_players)]

    def stage(index):
        actions = {s: action_lists for s in states}
        rewards, kernel = {}, {}
        for s in states:
            for joint in product(*action_lists):
                rewards[(s, joint)] = [int(r) for r in rng.integers(0, 3, size=num_players)]
                kernel[(s, joint)] = _random_row(rng, states, floor)
        return StageModel.build(index, states + ("d",), actions, rewards, kernel)

    prefix = tuple(stage(n) for n in range(prefix_length))
    return GameModel(num_players=num_players, target_set=frozenset({"d"}), prefix=prefix,
                     tail=stage(prefix_length))


def random_mixed(rng, actions, high=4):
    """Mixed action with random rational weights in {0, 1, ..., high - 1} / total"""
    weights = [int(w) for w in rng.integers(0, high, size=len(actions))]
    if sum(weights) == 0:
        weights[0] = 1
    total = sum(weights)
    return MixedAction(tuple((a, Fraction(w, total)) for a, w in zip(actions, weights)))


def random_policy(rng, model, goals, horizon):
    """Markov multipolicy with random rational weights at every cell"""
    lattice = build_goal_lattice(model, goals, horizon)

    def rule(n, i, goal, stage):
        return tuple(random_mixed(rng, actions) for actions in stage.actions[i])
    return MarkovMultipolicy.from_rule(model, lattice, horizon, rule)


def goal_blind_policy(rng, model, goals, horizon):
    """Random Markov multipolicy whose mixed actions depend on (stage, state) only"""
    lattice = build_goal_lattice(model, goals, horizon)
    chosen = {}

    def rule(n, i, goal, stage):
        if (n, i) not in chosen:
            chosen[(n, i)] = tuple(random_mixed(rng, actions) for actions in stage.actions[i])
        return chosen[(n, i)]
    return MarkovMultipolicy.from_rule(model, lattice, horizon, rule)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
