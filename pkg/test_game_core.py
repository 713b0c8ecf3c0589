#!/usr/bin/env python3
"""
Tests for the game model: rationals, validation, beta and the goal lattice
"""

import sys
from fractions import Fraction

import pytest

from conftest import single_stage_game
from game_core import (DIVERGES, FAILS, GameModel, GameModelError, InvalidModelError, LatticeError, StageModel,
                       build_goal_lattice, canonicalize_goal, check_divergence, compute_beta, parse_goal,
                       require_valid, stage_beta, to_rational, validate_model)


def test_rational_parsing():
    assert to_rational("11/20") == Fraction(11, 20)
    assert to_rational(" 3 ") == Fraction(3)
    assert to_rational(2) == Fraction(2)
    assert to_rational("4/8") == Fraction(1, 2)


@pytest.mark.parametrize("bad", [0.5, True, "1/0", "x/2", None, "1/2/3"])
def test_rational_rejects_floats_and_garbage(bad):
    with pytest.raises(GameModelError):
        to_rational(bad)


def test_goal_clamping():
    assert canonicalize_goal((-1, 2)) == (Fraction(0), Fraction(2))
    assert canonicalize_goal(("1/2", 0)) == (Fraction(1, 2), Fraction(0))
    assert parse_goal("(2,3)") == (Fraction(2), Fraction(3))
    assert parse_goal("2, -1") == (Fraction(2), Fraction(0))


def test_insurance_model_is_clean(insurance):
    model, _ = insurance
    report = validate_model(model)
    assert report.ok
    assert report.findings == []
    assert report.beta == Fraction(2, 5)


def test_insurance_beta_and_divergence(insurance):
    model, _ = insurance
    assert compute_beta(model) == Fraction(2, 5)
    assert check_divergence(model, 5) == (DIVERGES, Fraction(2))
    report = validate_model(model, probe=5)
    assert report.beta_sequence.values == (Fraction(2, 5),) * 5


def test_insurance_data(insurance):
    model, goals = insurance
    assert goals == (2, 3)
    assert model.stage(0).reward_vector("1", ("a11", "b11")) == (1, 1)
    assert model.stage(1).reward_vector("1", ("a11", "b11"))[1] == 0
    assert model.stage(7).reward_vector("1", ("a11", "b12")) == (1, 1)
    assert dict(model.stage(3).row("1", ("a12", "b11"))) == {"1": Fraction(9, 20), "2": Fraction(11, 20)}


def test_non_stochastic_row_is_reported():
    model = single_stage_game(1, {"s": [["a"]]}, {}, {("s", ("a",)): {"s": "1/2", "d": "1/4"}})
    report = validate_model(model)
    assert not report.ok
    assert any("not stochastic" in f.message and "3/4" in f.message for f in report.errors())
    assert report.beta is None


def test_negative_reward_and_missing_row_are_reported():
    model = single_stage_game(
        1, {"s": [["a", "b"]]}, {("s", ("a",)): [-1]}, {("s", ("a",)): {"d": 1}})
    messages = [f.message for f in validate_model(model).errors()]
    assert any("negative reward" in m for m in messages)
    assert any("missing kernel row" in m for m in messages)


def test_unknown_next_state_is_reported():
    model = single_stage_game(1, {"s": [["a"]]}, {}, {("s", ("a",)): {"elsewhere": 1}})
    assert any("not in successor stage" in f.message for f in validate_model(model).errors())


def test_zero_beta_warns_and_fails_divergence(zero_beta_game):
    report = validate_model(zero_beta_game)
    assert report.ok
    assert report.beta == 0
    assert any(f.severity == "warning" and "beta = 0" in f.message for f in report.findings)
    verdict, partial = check_divergence(zero_beta_game, 10)
    assert verdict == FAILS
    assert partial == 0


def test_prefix_with_zero_beta_still_diverges():
    blocked = StageModel.build(0, ("s", "d"), {"s": [["a"]]}, {}, {("s", ("a",)): {"s": 1}})
    open_ = StageModel.build(1, ("s", "d"), {"s": [["a"]]}, {}, {("s", ("a",)): {"s": "1/2", "d": "1/2"}})
    model = GameModel(num_players=1, target_set=frozenset({"d"}), prefix=(blocked,), tail=open_)
    assert compute_beta(model) == 0
    assert stage_beta(open_, model.target_set) == Fraction(1, 2)
    assert check_divergence(model, 3) == (DIVERGES, Fraction(1))


def test_goal_lattice_of_insurance(insurance):
    model, goals = insurance
    lattice = build_goal_lattice(model, [goals], 3)
    assert lattice.goals(0) == ((2, 3),)
    assert set(lattice.goals(1)) == {(1, 2), (2, 2), (2, 3)}
    assert lattice.horizon == 3
    assert lattice.contains(1, (2, 2))
    assert not lattice.contains(1, (1, 3))
    with pytest.raises(LatticeError):
        lattice.index(1, (1, 3))
    with pytest.raises(LatticeError):
        lattice.goals(4)


def test_goal_lattice_clamps_and_merges(insurance):
    model, _ = insurance
    lattice = build_goal_lattice(model, [(1, 1)], 2)
    for n in range(3):
        for goal in lattice.goals(n):
            assert all(c >= 0 for c in goal)
    assert (0, 0) in lattice.goals(1)
    assert len(set(lattice.goals(2))) == len(lattice.goals(2))


def test_goal_lattice_grows_monotonically(insurance):
    model, goals = insurance
    longer = build_goal_lattice(model, [goals, (4, 1)], 5)
    assert longer.restricted(4) == build_goal_lattice(model, [goals, (4, 1)], 4)


def test_canonicalize_is_idempotent():
    goal = canonicalize_goal((-3, "5/2", 0))
    assert canonicalize_goal(goal) == goal


def test_goal_lattice_rejects_wrong_arity(insurance):
    model, _ = insurance
    with pytest.raises(GameModelError):
        build_goal_lattice(model, [(1, 2, 3)], 1)


def test_goal_lattice_needs_an_initial_goal(insurance):
    model, _ = insurance
    with pytest.raises(GameModelError):
        build_goal_lattice(model, [], 3)


def test_require_valid(insurance, leaky_game):
    model, _ = insurance
    assert require_valid(model).ok
    with pytest.raises(InvalidModelError) as excinfo:
        require_valid(leaky_game)
    assert len(excinfo.value.findings) == 1
    assert "not stochastic" in excinfo.value.findings[0].message
    assert "not stochastic" in str(excinfo.value)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
