"""
Finite-horizon evaluation of Markov multipolicies.

evaluate_policy / evaluate_best_response run the truncated backward
recursions u^m and v^m (indicator start at stage m, one operator
application per stage down to 0) and attach the geometric truncation bound
(1 - beta)^m / beta. enumerate_oracle and simulate are independent checks of
the same criterion: exact path enumeration and seeded Monte Carlo.
"""

import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from bellman import CellValueFn, MixedAction, apply_mixed, best_response
from config import ORACLE_NODE_BUDGET
from game_core import (Action, GameModel, GoalLattice, GoalVector, StageModel, State,
                       build_goal_lattice, canonicalize_goal, compute_beta, format_goal,
                       subtract_reward)

Cell = Tuple[int, State, GoalVector]


class PolicyShapeError(ValueError):
    """The policy does not cover a lattice cell, or plays an undeclared action there"""

    def __init__(self, message: str, cell: Optional[Cell] = None):
        super().__init__(message)
        self.cell = cell


class UndefinedBoundError(ValueError):
    """Truncation bound requested with beta outside (0, 1]"""


class OracleBudgetError(RuntimeError):
    """Path enumeration exceeded its node budget"""


def describe_cell(cell: Cell) -> str:
    n, state, goal = cell
    return f"stage {n}, state {state}, goal {format_goal(goal)}"


def uniform_profile(stage: StageModel, state: State) -> Tuple[MixedAction, ...]:
    return tuple(MixedAction.uniform(actions) for actions in stage.actions[state])


@dataclass
class MarkovMultipolicy:
    """One mixed action per player for every (stage < horizon, state, goal) cell.

    Stages >= horizon play the uniform tail rule.
    """
    lattice: GoalLattice
    horizon: int
    rules: Dict[Cell, Tuple[MixedAction, ...]]

    @classmethod
    def from_rule(cls, model: GameModel, lattice: GoalLattice, horizon: int,
                  rule: Callable[[int, State, GoalVector, StageModel], Sequence[MixedAction]]
                  ) -> 'MarkovMultipolicy':
        if lattice.horizon < horizon:
            lattice = build_goal_lattice(model, lattice.initial_goals, horizon)
        rules = {}
        for cell in policy_cells(model, lattice, horizon):
            n, state, goal = cell
            rules[cell] = tuple(rule(n, state, goal, model.stage(n)))
        return cls(lattice=lattice, horizon=horizon, rules=rules)

    @classmethod
    def uniform(cls, model: GameModel, lattice: GoalLattice, horizon: int) -> 'MarkovMultipolicy':
        return cls.from_rule(model, lattice, horizon, lambda n, i, goal, stage: uniform_profile(stage, i))

    def profile(self, model: GameModel, n: int, state: State, goal: GoalVector) -> Tuple[MixedAction, ...]:
        if n >= self.horizon:
            return uniform_profile(model.stage(n), state)
        try:
            return self.rules[(n, state, goal)]
        except KeyError:
            cell = (n, state, goal)
            raise PolicyShapeError(f"Policy does not cover {describe_cell(cell)}", cell)

    def with_player(self, k: int, entries: Dict[Cell, MixedAction]) -> 'MarkovMultipolicy':
        """Copy with player k's mixed action replaced at every cell in `entries`"""
        rules = dict(self.rules)
        for cell, mixed in entries.items():
            profile = list(rules[cell])
            profile[k] = mixed
            rules[cell] = tuple(profile)
        return MarkovMultipolicy(lattice=self.lattice, horizon=self.horizon, rules=rules)

    def check(self, model: GameModel):
        """Raise PolicyShapeError at the first uncovered or invalid cell"""
        for cell in policy_cells(model, self.lattice, self.horizon):
            n, state, goal = cell
            profile = self.profile(model, n, state, goal)
            lists = model.stage(n).actions[state]
            if len(profile) != len(lists):
                raise PolicyShapeError(
                    f"Expected {len(lists)} mixed actions at {describe_cell(cell)}, found {len(profile)}", cell)
            for k, (mixed, actions) in enumerate(zip(profile, lists)):
                if not mixed.is_valid_for(actions):
                    raise PolicyShapeError(
                        f"Invalid mixed action for player {k + 1} at {describe_cell(cell)}", cell)
        extra = set(self.rules) - set(policy_cells(model, self.lattice, self.horizon))
        if extra:
            cell = sorted(extra)[0]
            raise PolicyShapeError(f"Policy names a cell outside the lattice: {describe_cell(cell)}", cell)


def policy_cells(model: GameModel, lattice: GoalLattice, horizon: int) -> Iterator[Cell]:
    for n in range(horizon):
        for state in model.non_target_states(n):
            for goal in lattice.goals(n):
                yield (n, state, goal)


def truncation_bound_exact(beta, m: int) -> Fraction:
    beta = Fraction(beta)
    if beta <= 0 or beta > 1:
        raise UndefinedBoundError(f"Truncation bound needs 0 < beta <= 1, got {beta}")
    return (1 - beta) ** m / beta


def truncation_bound(beta, m: int) -> float:
    """sum_{t >= m} (1 - beta)^t = (1 - beta)^m / beta"""
    return float(truncation_bound_exact(beta, m))


@dataclass
class ValueTable:
    """Values of one player per stage 0..depth over (non-target state, lattice goal) cells"""
    player: int
    depth: int
    lattice: GoalLattice
    states: List[Tuple[State, ...]]
    values: List[np.ndarray]
    beta: Fraction
    bound: Optional[float] = None
    argmax: Dict[Cell, Tuple[Action, ...]] = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.bound is not None

    @property
    def status(self) -> str:
        return "certified" if self.certified else "uncertified truncation"

    def value(self, n: int, state: State, goal: GoalVector) -> float:
        return self.stage_fn(n)(state, canonicalize_goal(goal))

    def stage_fn(self, n: int) -> CellValueFn:
        return CellValueFn(self.player, self.states[n], self.lattice.goals(n), self.values[n])

    def bound_at(self, n: int) -> Optional[float]:
        if self.bound is None:
            return None
        return truncation_bound(self.beta, self.depth - n)

    def rows(self, stages: Optional[Sequence[int]] = None) -> Iterator[Tuple[int, State, GoalVector, float]]:
        for n in (range(self.depth + 1) if stages is None else stages):
            goals = self.lattice.goals(n)
            for si, state in enumerate(self.states[n]):
                for gi, goal in enumerate(goals):
                    yield n, state, goal, float(self.values[n][si, gi])


def _map_cells(fn, cells, jobs: int, verbose: bool, desc: str):
    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(tqdm(executor.map(fn, cells), total=len(cells), desc=desc,
                             disable=not verbose, leave=False, file=sys.stderr))
    return [fn(c) for c in cells]


def _sweep(model: GameModel, lattice: GoalLattice, k: int, m: int, cell_fn, jobs: int,
           verbose: bool, desc: str):
    if lattice.horizon < m:
        lattice = build_goal_lattice(model, lattice.initial_goals, m)
    states = [model.non_target_states(n) for n in range(m + 1)]
    values: List[Optional[np.ndarray]] = [None] * (m + 1)
    final_goals = lattice.goals(m)
    top = np.zeros((len(states[m]), len(final_goals)))
    for gi, goal in enumerate(final_goals):
        if goal[k] == 0:
            top[:, gi] = 1.0
    values[m] = top
    extras = {}
    for n in range(m - 1, -1, -1):
        following = CellValueFn(k, states[n + 1], lattice.goals(n + 1), values[n + 1])
        goals = lattice.goals(n)
        cells = [(state, goal) for state in states[n] for goal in goals]
        results = _map_cells(lambda c: cell_fn(n, c[0], c[1], following), cells, jobs, verbose,
                             f"{desc} stage {n}")
        table = np.zeros((len(states[n]), len(goals)))
        for pos, (value, extra) in enumerate(results):
            table[pos // len(goals), pos % len(goals)] = value
            if extra is not None:
                extras[(n, cells[pos][0], cells[pos][1])] = extra
        values[n] = table
    return lattice, states, values, extras


def _attach_bound(model: GameModel, beta, m: int):
    beta = compute_beta(model) if beta is None else Fraction(beta)
    bound = truncation_bound(beta, m) if beta > 0 else None
    return beta, bound


def evaluate_policy(model: GameModel, policy: MarkovMultipolicy, lattice: Optional[GoalLattice] = None,
                    k: int = 0, m: Optional[int] = None, beta=None, jobs: int = 1,
                    verbose: bool = False) -> ValueTable:
    """u^m of player k under `policy`; stage 0 carries the bound (1 - beta)^m / beta"""
    lattice = policy.lattice if lattice is None else lattice
    m = policy.horizon if m is None else m

    def cell(n, state, goal, following):
        profile = policy.profile(model, n, state, goal)
        return apply_mixed(model.stage(n), model.target_set, k, state, goal, profile, following), None

    lattice, states, values, _ = _sweep(model, lattice, k, m, cell, jobs, verbose, f"u[{k + 1}]")
    beta, bound = _attach_bound(model, beta, m)
    if bound is None and verbose:
        print(f"[!] beta = 0: value table for player {k + 1} is an uncertified truncation", file=sys.stderr)
    return ValueTable(player=k, depth=m, lattice=lattice, states=states, values=values, beta=beta, bound=bound)


def evaluate_best_response(model: GameModel, others: MarkovMultipolicy, lattice: Optional[GoalLattice] = None,
                           k: int = 0, m: Optional[int] = None, beta=None, jobs: int = 1,
                           verbose: bool = False) -> ValueTable:
    """v^m of player k against the other players' entries of `others`, with argmax actions per cell"""
    lattice = others.lattice if lattice is None else lattice
    m = others.horizon if m is None else m

    def cell(n, state, goal, following):
        profile = others.profile(model, n, state, goal)
        value, argmax = best_response(model.stage(n), model.target_set, k, state, goal, profile, following)
        return value, tuple(argmax)

    lattice, states, values, argmax = _sweep(model, lattice, k, m, cell, jobs, verbose, f"v[{k + 1}]")
    beta, bound = _attach_bound(model, beta, m)
    return ValueTable(player=k, depth=m, lattice=lattice, states=states, values=values, beta=beta,
                      bound=bound, argmax=argmax)


def greedy_policy(policy: MarkovMultipolicy, table: ValueTable) -> MarkovMultipolicy:
    """Replace the table's player by the first maximizing pure action at every policy cell"""
    entries = {}
    for cell in policy.rules:
        actions = table.argmax.get(cell)
        if actions is None:
            raise PolicyShapeError(f"Best-response table has no argmax at {describe_cell(cell)}", cell)
        entries[cell] = MixedAction.point(actions[0])
    return policy.with_player(table.player, entries)


def enumerate_oracle(model: GameModel, policy: MarkovMultipolicy, i: State, goal, k: int, horizon: int,
                     budget: int = ORACLE_NODE_BUDGET) -> Tuple[Fraction, Fraction]:
    """Exact bracket [lower, upper] on player k's criterion value from path prefixes of length <= horizon.

    lower is the mass of paths absorbed in D by `horizon` with the goal met;
    upper adds the mass of paths still outside D at `horizon`.
    """
    goal = canonicalize_goal(goal)
    target = model.target_set
    if i in target:
        hit = Fraction(1) if goal[k] == 0 else Fraction(0)
        return hit, hit
    lower = Fraction(0)
    pending = Fraction(0)
    nodes = 0
    stack = [(0, i, goal, Fraction(1))]
    while stack:
        n, state, current, mass = stack.pop()
        nodes += 1
        if nodes > budget:
            raise OracleBudgetError(f"Path enumeration exceeded {budget} nodes (horizon {horizon})")
        if n == horizon:
            pending += mass
            continue
        stage = model.stage(n)
        profile = policy.profile(model, n, state, current)
        for combo in product(*(m.support() for m in profile)):
            weight = mass
            for _, w in combo:
                weight *= w
            joint = tuple(a for a, _ in combo)
            following = subtract_reward(current, stage.reward_vector(state, joint))
            for j, p in stage.row(state, joint):
                if p == 0:
                    continue
                if j in target:
                    if following[k] == 0:
                        lower += weight * p
                else:
                    stack.append((n + 1, j, following, weight * p))
    return lower, lower + pending


def _draw(rng: np.random.Generator, options: Sequence[Tuple[object, Fraction]]):
    u = rng.random()
    acc = 0.0
    for label, p in options:
        acc += float(p)
        if u < acc:
            return label
    return options[-1][0]


def simulate(model: GameModel, policy: MarkovMultipolicy, i: State, goal, k: int, episodes: int,
             max_steps: int, seed: int, jobs: int = 1, verbose: bool = False) -> Tuple[float, float]:
    """Monte Carlo estimate of player k's criterion value and its standard error.

    Episode e draws from its own generator seeded with (seed, e), so the
    estimate does not depend on scheduling. Episodes still outside D with an
    unmet goal after max_steps count as failures.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    goal = canonicalize_goal(goal)
    target = model.target_set
    if goal[k] == 0:
        return 1.0, 0.0
    if i in target:
        return 0.0, 0.0

    def run_episode(e: int) -> int:
        rng = np.random.default_rng([seed, e])
        state, current = i, goal
        for n in range(max_steps):
            stage = model.stage(n)
            profile = policy.profile(model, n, state, current)
            joint = tuple(_draw(rng, mixed.support()) for mixed in profile)
            current = subtract_reward(current, stage.reward_vector(state, joint))
            state = _draw(rng, stage.row(state, joint))
            if state in target or current[k] == 0:
                return 1 if current[k] == 0 else 0
        return 0

    indices = list(range(episodes))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(tqdm(executor.map(run_episode, indices), total=episodes, desc="Episodes",
                                 disable=not verbose, file=sys.stderr))
    else:
        outcomes = [run_episode(e) for e in tqdm(indices, desc="Episodes", disable=not verbose, file=sys.stderr)]
    samples = np.asarray(outcomes, dtype=float)
    estimate = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(episodes)) if episodes > 1 else 0.0
    return estimate, stderr
