#!/usr/bin/env python3
"""
Tests for solver parameters, grid candidates, certification and the
two search strategies
"""

import sys
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from bellman import MixedAction
from conftest import pure_policy, random_mixed, single_stage_game
from config import TABLE1_EPSILONS
from game_core import InvalidModelError, build_goal_lattice
from nash_solver import (AbsorptionBoundError, Certificate, certify, composition_count, enumeration_bound,
                         exact_epsilon, grid_enumeration_count, grid_params, horizon_for, random_composition, random_pure_policy,
                         round_to_grid, solve_best_response_dynamics, solve_grid, unrank_composition)
from policy_eval import (MarkovMultipolicy, PolicyShapeError, UndefinedBoundError, evaluate_best_response,
                         evaluate_policy, truncation_bound, truncation_bound_exact)
from schemas import certificate_csv, serialize_policy


def test_exact_epsilon():
    assert exact_epsilon(0.1) == Fraction(1, 10)
    assert exact_epsilon(0.5) == Fraction(1, 2)
    assert exact_epsilon(Fraction(3, 7)) == Fraction(3, 7)


def test_horizon_table_for_two_fifths():
    horizons = [horizon_for(eps, Fraction(2, 5)) for eps in TABLE1_EPSILONS]
    assert horizons == [10, 9, 8, 7, 7, 6, 6, 6, 6, 5]


def test_horizon_edge_cases():
    assert horizon_for(0.5, Fraction(1, 2)) == 5
    assert horizon_for(0.01, 1) == 1
    with pytest.raises(UndefinedBoundError):
        horizon_for(0.5, 0)
    with pytest.raises(ValueError):
        horizon_for(0, Fraction(1, 2))


def test_horizon_is_the_smallest_admissible():
    for step in range(1, 20):
        beta = Fraction(step, 20)
        for eps in (0.01, 0.1, 0.25, 0.5, 1.0, 3.0):
            T = horizon_for(eps, beta)
            assert truncation_bound(beta, T) < eps / 5
            assert truncation_bound_exact(beta, T) < exact_epsilon(eps) / 5
            if T > 1:
                assert truncation_bound_exact(beta, T - 1) >= exact_epsilon(eps) / 5


def test_horizon_away_from_two_fifths():
    assert horizon_for(0.1, Fraction(1, 10)) == 59
    assert horizon_for(0.1, Fraction(9, 10)) == 2
    assert horizon_for(1.0, Fraction(1, 3)) == 7


def test_grid_params_of_insurance(insurance):
    model, _ = insurance
    params = grid_params(0.1, model, 10)
    assert params.K == 8001
    assert params.action_product == 4
    assert params.delta == Fraction(1, 8001)
    assert params.on_grid(Fraction(3, 8001))
    assert not params.on_grid(Fraction(1, 2))
    assert grid_params(0.5, model, 7).K == 1121


def test_grid_params_of_the_smallest_game():
    model = single_stage_game(1, {"s": [["only"]]}, {}, {("s", ("only",)): {"d": 1}})
    assert grid_params(10, model, 1).K == 2


def test_enumeration_bound(insurance):
    assert grid_enumeration_count(2, [2]).value == 9
    assert grid_enumeration_count(2, [2]).digits == 1
    assert grid_enumeration_count(9, [1, 1]).digits == 3
    model, _ = insurance
    bound = enumeration_bound(0.1, model)
    assert bound.K == 8001
    assert bound.exponents == (4,) * 11
    assert bound.value == 8002 ** 44
    assert bound.digits == 172


def test_huge_enumeration_bound_is_reported_by_digits_only():
    bound = grid_enumeration_count(10 ** 6, [10 ** 5])
    assert bound.value is None
    assert bound.digits == 600_001


def test_compositions_enumerate_every_weak_composition():
    seen = {tuple(unrank_composition(r, 3, 4)) for r in range(composition_count(3, 4))}
    assert len(seen) == composition_count(3, 4) == 15
    assert all(sum(c) == 4 and min(c) >= 0 for c in seen)
    assert unrank_composition(0, 2, 5) == [0, 5]
    assert unrank_composition(5, 2, 5) == [5, 0]


def test_random_composition():
    rng = np.random.default_rng(1)
    for _ in range(50):
        parts = random_composition(rng, 3, 7)
        assert len(parts) == 3
        assert sum(parts) == 7
        assert min(parts) >= 0
    assert random_composition(rng, 1, 7) == [7]


def test_round_to_grid():
    assert round_to_grid([1, 1, 1], 4) == (Fraction(2, 4), Fraction(1, 4), Fraction(1, 4))
    rng = np.random.default_rng(5)
    for _ in range(30):
        weights = [Fraction(int(w), 97) for w in rng.integers(0, 20, size=4)]
        if sum(weights) == 0:
            continue
        total = sum(weights)
        rounded = round_to_grid(weights, 13)
        assert sum(rounded) == 1
        assert all(abs(r - w / total) < Fraction(1, 13) for r, w in zip(rounded, weights))
        assert all((r * 13).denominator == 1 for r in rounded)
    with pytest.raises(ValueError):
        round_to_grid([0, 0], 5)


def test_every_distribution_is_close_to_the_grid(insurance):
    model, _ = insurance
    K = grid_params(0.1, model, 10).K
    rng = np.random.default_rng(17)
    for _ in range(1000):
        size = int(rng.integers(2, 6))
        mixed = random_mixed(rng, [f"a{j}" for j in range(size)], high=10 ** 6)
        weights = [w for _, w in mixed.weights]
        rounded = round_to_grid(weights, K)
        assert sum(rounded) == 1
        assert all(abs(r - w) < Fraction(1, K) for r, w in zip(rounded, weights))


def test_grid_rounding_keeps_values_close(insurance):
    """Rounding a mixed multipolicy onto a fine grid moves every value only slightly"""
    model, goals = insurance
    lattice = build_goal_lattice(model, [goals], 5)
    policy = MarkovMultipolicy.uniform(model, lattice, 5)
    policy = policy.with_player(0, {cell: MixedAction((("a11", Fraction(1, 3)), ("a12", Fraction(2, 3))))
                                    for cell in policy.rules})
    K = 50
    rules = {}
    for cell, profile in policy.rules.items():
        rounded = []
        for mixed in profile:
            labels = [a for a, _ in mixed.weights]
            weights = round_to_grid([w for _, w in mixed.weights], K)
            rounded.append(MixedAction(tuple(zip(labels, weights))))
        rules[cell] = tuple(rounded)
    grid_policy = MarkovMultipolicy(lattice=lattice, horizon=5, rules=rules)
    grid_policy.check(model)
    for k in range(2):
        before = evaluate_policy(model, policy, k=k)
        after = evaluate_policy(model, grid_policy, k=k)
        for n, state, goal, value in before.rows([0]):
            assert abs(after.value(n, state, goal) - value) <= 2 * 5 * 2 / K


def test_certify_rejects_a_dominated_policy(one_player_game):
    model = one_player_game
    bad = pure_policy(model, [(1,)], 1, lambda n, i: ("bad",))
    cert = certify(model, bad, 0.5)
    assert cert.T_eps == 1
    assert cert.max_gap == pytest.approx(1.0)
    assert not cert.passed
    assert cert.verdict == "fail"
    good = pure_policy(model, [(1,)], 1, lambda n, i: ("good",))
    assert certify(model, good, 0.5).passed


def test_certify_action_independent_game(action_independent_game):
    model = action_independent_game
    T = horizon_for(0.5, Fraction(1, 2))
    lattice = build_goal_lattice(model, [(1, 1), (2, 1)], T)
    cert = certify(model, MarkovMultipolicy.uniform(model, lattice, T), 0.5)
    assert cert.max_gap == pytest.approx(0.0, abs=1e-12)
    assert cert.passed
    assert len(cert.rows) == 2 * 1 * 2
    document = cert.to_dict()
    assert document["verdict"] == "pass"
    assert {row["player"] for row in document["rows"]} == {1, 2}
    assert document["delta"] == f"1/{cert.K}"


def test_certify_threshold_is_exact(one_player_game):
    model = one_player_game
    cert = certify(model, pure_policy(model, [(1,)], 1, lambda n, i: ("good",)), 0.5)
    assert cert.threshold == pytest.approx(0.3)
    assert cert.theoretical_note.startswith("u and v at horizon 1")


def test_certify_needs_a_long_enough_policy(insurance, insurance_policy):
    model, _ = insurance
    with pytest.raises(PolicyShapeError):
        certify(model, insurance_policy(horizon=3), 0.5)


def test_certificates_are_deterministic(insurance, insurance_policy):
    model, goals = insurance
    policy = insurance_policy(horizon=7)
    assert certificate_csv(certify(model, policy, 0.5)) == certificate_csv(certify(model, policy, 0.5, jobs=3))
    first = solve_best_response_dynamics(model, [goals], 0.5, 10, seed=4)
    second = solve_best_response_dynamics(model, [goals], 0.5, 10, seed=4)
    assert certificate_csv(first) == certificate_csv(second)
    assert serialize_policy(first.policy) == serialize_policy(second.policy)


def test_a_pass_survives_every_larger_epsilon(insurance):
    model, goals = insurance
    cert = solve_best_response_dynamics(model, [goals], 0.5, 10, seed=4)
    assert cert.passed
    for eps in (0.5000001, 0.6, 1.0, 2.5, 10.0):
        assert replace(cert, epsilon=eps).passed


def test_empty_certificate_never_passes():
    cert = Certificate(epsilon=0.5, beta=Fraction(1, 2), T_eps=5, K=11, rows=[])
    assert not cert.passed
    assert cert.verdict == "fail"


def test_invalid_models_are_refused(leaky_game):
    policy = pure_policy(leaky_game, [(1,)], 3, lambda n, i: ("go",))
    with pytest.raises(InvalidModelError) as excinfo:
        certify(leaky_game, policy, 0.5)
    assert "not stochastic" in excinfo.value.findings[0].message
    with pytest.raises(InvalidModelError):
        solve_grid(leaky_game, [(1,)], 0.5, 10)
    with pytest.raises(InvalidModelError):
        solve_best_response_dynamics(leaky_game, [(1,)], 0.5, 3, seed=1)
    with pytest.raises(InvalidModelError):
        enumeration_bound(0.5, leaky_game)


def test_zero_beta_cannot_be_certified(zero_beta_game):
    model = zero_beta_game
    policy = pure_policy(model, [(1,)], 3, lambda n, i: ("go",))
    with pytest.raises(AbsorptionBoundError):
        certify(model, policy, 0.5)
    with pytest.raises(AbsorptionBoundError):
        solve_grid(model, [(1,)], 0.5, 10)
    with pytest.raises(AbsorptionBoundError):
        solve_best_response_dynamics(model, [(1,)], 0.5, 3, seed=1)


def test_grid_search_finds_the_first_passing_candidate(one_player_game):
    # K = 41; candidate i plays 'good' with weight i/41, which passes once i/41 > 7/10
    for jobs in (1, 4):
        cert = solve_grid(one_player_game, [(1,)], 0.5, 100, jobs=jobs)
        assert cert.status == "certified"
        assert cert.K == 41
        assert cert.provenance["iterations"] == 30
        assert cert.provenance["source"] == "grid-deterministic"
        assert cert.policy.rules[(0, "s", (1,))][0].weight("good") == Fraction(29, 41)


def test_grid_search_budget_exhaustion(insurance):
    model, goals = insurance
    cert = solve_grid(model, [goals], 0.5, 1)
    assert cert.status == "budget exhausted"
    assert cert.K == 1121
    assert not cert.passed
    assert cert.provenance["best_candidate"] == 1
    profile = cert.policy.rules[(0, "1", goals)]
    assert profile[0].weight("a12") == 1 and profile[1].weight("b12") == 1


def test_seeded_grid_search_is_reproducible(one_player_game):
    first = solve_grid(one_player_game, [(1,)], 0.5, 5, order="seeded-random", seed=3)
    second = solve_grid(one_player_game, [(1,)], 0.5, 5, order="seeded-random", seed=3, jobs=2)
    assert first.provenance == second.provenance
    assert first.policy.rules == second.policy.rules
    assert first.max_gap == second.max_gap


def test_grid_search_arguments(one_player_game):
    with pytest.raises(ValueError):
        solve_grid(one_player_game, [(1,)], 0.5, 0)
    with pytest.raises(ValueError):
        solve_grid(one_player_game, [(1,)], 0.5, 5, order="seeded-random")
    with pytest.raises(ValueError):
        solve_grid(one_player_game, [(1,)], 0.5, 5, order="sideways")


def test_best_response_dynamics_on_one_player(one_player_game):
    cert = solve_best_response_dynamics(one_player_game, [(1,)], 0.5, 5, seed=0)
    assert cert.status == "certified"
    assert cert.gap_history == pytest.approx([0.5, 0.0])
    assert cert.provenance["iterations"] == 2
    assert cert.policy.rules[(0, "s", (1,))][0].weight("good") == 1


def test_best_response_dynamics_on_insurance(insurance):
    model, goals = insurance
    cert = solve_best_response_dynamics(model, [goals], 0.5, 10, seed=4)
    assert cert.status == "certified"
    assert cert.passed
    assert cert.T_eps == 7
    assert cert.provenance["source"] == "best-response-dynamics"
    assert len(cert.gap_history) == cert.provenance["iterations"]


def test_best_response_dynamics_without_convergence(cycling_game):
    cert = solve_best_response_dynamics(cycling_game, [(1, 1)], 0.25, 4, seed=9)
    assert cert.status == "no convergence"
    assert not cert.passed
    assert len(cert.gap_history) == 5
    assert cert.gap_history[0] > 0.15
    assert all(gap >= 0.5 - 1e-9 for gap in cert.gap_history[1:])
    assert cert.max_gap == pytest.approx(min(cert.gap_history))
    assert cert.provenance["rounds"] == 4


def test_random_pure_policy_is_pure(insurance):
    model, goals = insurance
    lattice = build_goal_lattice(model, [goals], 4)
    policy = random_pure_policy(model, lattice, 4, np.random.default_rng(2))
    policy.check(model)
    assert all(len(mixed.support()) == 1 for profile in policy.rules.values() for mixed in profile)


def test_passing_certificates_hold_at_a_deeper_horizon(insurance, one_player_game):
    """A passing certificate at T bounds every deviation gain by eps, also at depth T + 20"""
    model, goals = insurance
    solved = [
        (model, solve_best_response_dynamics(model, [goals], 0.5, 10, seed=1)),
        (one_player_game, solve_best_response_dynamics(one_player_game, [(1,)], 0.5, 10, seed=1)),
        (one_player_game, solve_grid(one_player_game, [(1,)], 0.5, 100)),
    ]
    for game, cert in solved:
        assert cert.passed
        depth = cert.T_eps + 20
        for k in range(game.num_players):
            u = evaluate_policy(game, cert.policy, k=k, m=depth)
            v = evaluate_best_response(game, cert.policy, k=k, m=depth)
            for state in game.non_target_states(0):
                for goal in cert.policy.lattice.goals(0):
                    assert v.value(0, state, goal) - u.value(0, state, goal) <= 0.5 + 1e-9


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
