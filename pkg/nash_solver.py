"""
epsilon-Nash search and certification.

Parameters: T(eps) = floor+(log_{1-beta}(eps * beta / 5)) + 1 makes each
truncation error < eps/5, and the weight grid L = {0, 1/K, ..., 1} is fine
enough that some grid multipolicy passes the check. A candidate multipolicy
passes when |u^T - v^T| < 3 eps / 5 for every player at every stage-0 cell;
together with the two truncation errors that bounds every player's gain from
deviating by eps.

Candidate generation (grid enumeration, seeded random grid draws,
best-response dynamics) is independent of certification: whatever the
source, only a passing certificate is reported as certified.
"""

import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from bellman import MixedAction
from config import BOUND_DIGIT_LIMIT, CERTIFY_FRACTION
from game_core import (GameModel, GoalLattice, GoalVector, State, build_goal_lattice, compute_beta,
                       require_valid)
from policy_eval import (MarkovMultipolicy, PolicyShapeError, UndefinedBoundError, evaluate_best_response,
                         evaluate_policy, greedy_policy, policy_cells, truncation_bound,
                         truncation_bound_exact)

PASS = "pass"
FAIL = "fail"


class AbsorptionBoundError(ValueError):
    """beta = 0: no uniform absorption bound, so no truncation horizon can be certified"""


def exact_epsilon(epsilon) -> Fraction:
    """Exact decimal value of epsilon (0.1 -> 1/10), so grid sizes and thresholds are exact"""
    if isinstance(epsilon, float):
        return Fraction(repr(epsilon))
    return Fraction(epsilon)


def horizon_for(epsilon, beta) -> int:
    """Smallest period length with (1 - beta)^T / beta < eps / 5"""
    beta = Fraction(beta)
    eps = exact_epsilon(epsilon)
    if eps <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if beta <= 0:
        raise UndefinedBoundError(f"horizon needs beta > 0, got {beta}")
    if beta >= 1:
        return 1
    x = math.log(float(eps) * float(beta) / 5) / math.log(1 - float(beta))
    horizon = max(math.floor(x), 0) + 1
    # float log can land one short of the exact threshold
    while truncation_bound_exact(beta, horizon) >= eps / 5:
        horizon += 1
    return horizon


def max_action_counts_at(model: GameModel, n: int) -> List[int]:
    """max over non-target states of |A_n^k(i)|, per player"""
    stage = model.stage(n)
    counts = [1] * model.num_players
    for state in model.non_target_states(n):
        for k, actions in enumerate(stage.actions[state]):
            counts[k] = max(counts[k], len(actions))
    return counts


def max_action_counts(model: GameModel, horizon: int) -> List[int]:
    """Per-player maximum of |A_n^k(i)| over stages n <= horizon"""
    per_stage = [max_action_counts_at(model, n) for n in range(horizon + 1)]
    return [max(column) for column in zip(*per_stage)]


@dataclass(frozen=True)
class SolverParams:
    epsilon: float
    beta: Fraction
    T_eps: int
    K: int
    num_players: int
    action_product: int

    @property
    def delta(self) -> Fraction:
        return Fraction(1, self.K)

    def on_grid(self, weight: Fraction) -> bool:
        return 0 <= weight <= 1 and (weight * self.K).denominator == 1


def grid_params(epsilon, model: GameModel, T_eps: int) -> SolverParams:
    """K = floor(10 T N prod_k max|A^k| / eps) + 1 segments of width delta = 1/K"""
    product_ = math.prod(max_action_counts(model, T_eps))
    scaled = Fraction(10 * T_eps * model.num_players * product_) / exact_epsilon(epsilon)
    K = math.floor(scaled) + 1
    return SolverParams(epsilon=float(epsilon), beta=compute_beta(model), T_eps=T_eps, K=K,
                        num_players=model.num_players, action_product=product_)


@dataclass(frozen=True)
class EnumerationBound:
    """Size of the full grid search: prod_{n=0..T} (K + 1)^{e_n}"""
    K: int
    exponents: Tuple[int, ...]
    digits: int
    value: Optional[int] = None


def grid_enumeration_count(K: int, exponents: Sequence[int]) -> EnumerationBound:
    log10 = sum(e for e in exponents) * math.log10(K + 1)
    if log10 > BOUND_DIGIT_LIMIT:
        return EnumerationBound(K=K, exponents=tuple(exponents), digits=math.floor(log10) + 1)
    value = 1
    for e in exponents:
        value *= (K + 1) ** e
    digits = max(int(log10), 0) + 1
    while 10 ** digits <= value:
        digits += 1
    while digits > 1 and 10 ** (digits - 1) > value:
        digits -= 1
    return EnumerationBound(K=K, exponents=tuple(exponents), digits=digits, value=value)


def enumeration_bound(epsilon, model: GameModel) -> EnumerationBound:
    return _setup(model, epsilon).bound


@dataclass(frozen=True)
class CertificateRow:
    player: int
    state: State
    goal: GoalVector
    u: float
    v: float

    @property
    def gap(self) -> float:
        return abs(self.u - self.v)


@dataclass
class Certificate:
    epsilon: float
    beta: Fraction
    T_eps: int
    K: int
    rows: List[CertificateRow]
    provenance: Dict[str, object] = field(default_factory=dict)
    bound_digits: Optional[int] = None
    status: str = "checked"
    gap_history: List[float] = field(default_factory=list)
    policy: Optional[MarkovMultipolicy] = None

    @property
    def delta(self) -> Fraction:
        return Fraction(1, self.K)

    @property
    def max_gap(self) -> float:
        return max((row.gap for row in self.rows), default=0.0)

    @property
    def threshold(self) -> float:
        num, den = CERTIFY_FRACTION
        return float(exact_epsilon(self.epsilon) * num / den)

    @property
    def passed(self) -> bool:
        # an empty certificate never passes
        return bool(self.rows) and self.max_gap < self.threshold

    @property
    def verdict(self) -> str:
        return PASS if self.passed else FAIL

    @property
    def theoretical_note(self) -> str:
        bound = truncation_bound(self.beta, self.T_eps)
        if self.passed:
            return (f"u and v at horizon {self.T_eps} each lie within {bound:.6g} < eps/5 of the true values; "
                    f"max gap {self.max_gap:.6g} < 3eps/5 = {self.threshold:.6g}, so no player gains more than "
                    f"eps = {self.epsilon:g} by deviating at any checked cell")
        return (f"max gap {self.max_gap:.6g} >= 3eps/5 = {self.threshold:.6g}: "
                f"the candidate is not certified as an eps-Nash equilibrium")

    def to_dict(self) -> Dict:
        return {
            "epsilon": self.epsilon,
            "beta": str(self.beta),
            "T_eps": self.T_eps,
            "K": self.K,
            "delta": str(self.delta),
            "max_gap": self.max_gap,
            "verdict": self.verdict,
            "status": self.status,
            "provenance": self.provenance,
            "bound_digits": self.bound_digits,
            "gap_history": self.gap_history,
            "theoretical_note": self.theoretical_note,
            "rows": [
                {"player": row.player + 1, "state": row.state, "goal": [str(c) for c in row.goal],
                 "u": row.u, "v": row.v, "gap": row.gap}
                for row in self.rows
            ],
        }


@dataclass
class _Setup:
    beta: Fraction
    params: SolverParams
    bound: EnumerationBound

    @property
    def bound_digits(self) -> int:
        return self.bound.digits


def _setup(model: GameModel, epsilon) -> _Setup:
    require_valid(model)
    beta = compute_beta(model)
    if beta <= 0:
        raise AbsorptionBoundError("uniform absorption bound beta = 0; certification impossible")
    T = horizon_for(epsilon, beta)
    params = grid_params(epsilon, model, T)
    bound = grid_enumeration_count(
        params.K, [math.prod(max_action_counts_at(model, n)) for n in range(T + 1)])
    return _Setup(beta=beta, params=params, bound=bound)


def _certify(model: GameModel, policy: MarkovMultipolicy, setup: _Setup, provenance: Dict,
             jobs: int = 1) -> Certificate:
    T = setup.params.T_eps
    if policy.horizon < T:
        raise PolicyShapeError(f"Policy horizon {policy.horizon} is shorter than the period length {T}")
    rows = []
    for k in range(model.num_players):
        u = evaluate_policy(model, policy, policy.lattice, k, T, beta=setup.beta, jobs=jobs)
        v = evaluate_best_response(model, policy, policy.lattice, k, T, beta=setup.beta, jobs=jobs)
        for state in model.non_target_states(0):
            for goal in policy.lattice.goals(0):
                rows.append(CertificateRow(k, state, goal, u.value(0, state, goal), v.value(0, state, goal)))
    return Certificate(epsilon=setup.params.epsilon, beta=setup.beta, T_eps=T, K=setup.params.K, rows=rows,
                       provenance=dict(provenance), bound_digits=setup.bound_digits, policy=policy)


def certify(model: GameModel, policy: MarkovMultipolicy, epsilon, jobs: int = 1,
            provenance: Optional[Dict] = None) -> Certificate:
    """Check |u - v| < 3 eps / 5 at horizon T(eps) for every player and stage-0 lattice cell"""
    setup = _setup(model, epsilon)
    return _certify(model, policy, setup, provenance or {"source": "user", "iterations": 1, "seed": None}, jobs)


def unrank_subset(rank: int, n: int, k: int) -> List[int]:
    """k-subset of {0..n-1} with colex rank `rank`"""
    subset = [0] * k
    while k > 0:
        lower = k - 1
        while lower < n:
            mid = (lower + n + 1) // 2
            if rank < math.comb(mid, k):
                n = mid - 1
            else:
                lower = mid
        rank -= math.comb(n, k)
        k -= 1
        subset[k] = n
    return subset


def unrank_composition(rank: int, parts: int, total: int) -> List[int]:
    """Weak composition of `total` into `parts` nonnegative parts (stars and bars, colex order)"""
    bars = unrank_subset(rank, total + parts - 1, parts - 1)
    edges = [-1] + bars + [total + parts - 1]
    return [edges[t + 1] - edges[t] - 1 for t in range(parts)]


def composition_count(parts: int, total: int) -> int:
    return math.comb(total + parts - 1, parts - 1)


def random_composition(rng: np.random.Generator, parts: int, total: int) -> List[int]:
    """Uniform draw over weak compositions: choose the bar positions without replacement"""
    if parts == 1:
        return [total]
    bars = sorted(int(b) for b in rng.choice(total + parts - 1, size=parts - 1, replace=False))
    edges = [-1] + bars + [total + parts - 1]
    return [edges[t + 1] - edges[t] - 1 for t in range(parts)]


def round_to_grid(weights: Sequence, K: int) -> Tuple[Fraction, ...]:
    """Nearest grid distribution: every weight moves by < 1/K and the result sums to exactly 1"""
    exact = [Fraction(w) for w in weights]
    total = sum(exact, Fraction(0))
    if total <= 0 or any(w < 0 for w in exact):
        raise ValueError("weights must be nonnegative with a positive sum")
    scaled = [w / total * K for w in exact]
    floors = [math.floor(s) for s in scaled]
    missing = K - sum(floors)
    order = sorted(range(len(scaled)), key=lambda t: (-(scaled[t] - floors[t]), t))
    for t in order[:missing]:
        floors[t] += 1
    return tuple(Fraction(f, K) for f in floors)


def _grid_slots(model: GameModel, lattice: GoalLattice, horizon: int):
    slots = []
    for cell in policy_cells(model, lattice, horizon):
        n, state, _ = cell
        for k, actions in enumerate(model.stage(n).actions[state]):
            slots.append((cell, k, actions))
    return slots


def _policy_from_compositions(model, lattice, horizon, slots, compositions, K) -> MarkovMultipolicy:
    rules: Dict = {}
    for (cell, k, actions), parts in zip(slots, compositions):
        mixed = MixedAction(tuple((a, Fraction(p, K)) for a, p in zip(actions, parts)))
        rules.setdefault(cell, [None] * model.num_players)[k] = mixed
    return MarkovMultipolicy(lattice=lattice, horizon=horizon,
                             rules={cell: tuple(profile) for cell, profile in rules.items()})


def _deterministic_candidate(index: int, slots, K: int) -> Optional[List[List[int]]]:
    """Mixed-radix decoding of the candidate index, last slot varying fastest"""
    digits = []
    for _, _, actions in reversed(slots):
        base = composition_count(len(actions), K)
        index, digit = divmod(index, base)
        digits.append(unrank_composition(digit, len(actions), K))
    if index:
        return None
    return list(reversed(digits))


def solve_grid(model: GameModel, initial_goals: Iterable, epsilon, budget: int,
               order: str = "deterministic", seed: Optional[int] = None, jobs: int = 1,
               verbose: bool = False) -> Certificate:
    """Certify grid-valued multipolicies until one passes or the budget runs out.

    Returns the first passing certificate (lowest candidate index); on
    exhaustion, the smallest-gap certificate with status 'budget exhausted'.
    """
    if budget <= 0:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if order not in ("deterministic", "seeded-random"):
        raise ValueError(f"Invalid order: {order}. Valid orders: ['deterministic', 'seeded-random']")
    if order == "seeded-random" and seed is None:
        raise ValueError("seeded-random order requires a seed")
    setup = _setup(model, epsilon)
    T, K = setup.params.T_eps, setup.params.K
    lattice = build_goal_lattice(model, initial_goals, T)
    slots = _grid_slots(model, lattice, T)
    rng = np.random.default_rng(seed) if order == "seeded-random" else None
    source = "grid-" + order
    if verbose:
        print(f"[+] Grid search: T(eps) = {T}, K = {K}, {len(slots)} slots, "
              f"full grid has {setup.bound_digits} digits", file=sys.stderr)

    best = None
    index = 0
    progress = tqdm(total=budget, desc="Candidates", disable=not verbose, file=sys.stderr)
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        while index < budget:
            batch = []
            while len(batch) < jobs and index < budget:
                if rng is None:
                    compositions = _deterministic_candidate(index, slots, K)
                    if compositions is None:
                        break
                else:
                    compositions = [random_composition(rng, len(actions), K) for _, _, actions in slots]
                policy = _policy_from_compositions(model, lattice, T, slots, compositions, K)
                batch.append((index, policy))
                index += 1
            if not batch:
                break
            futures = [executor.submit(_certify, model, policy, setup,
                                       {"source": source, "iterations": i + 1, "seed": seed})
                       for i, policy in batch]
            results = [(i, policy, f.result()) for (i, policy), f in zip(batch, futures)]
            progress.update(len(batch))
            for i, policy, cert in results:
                cert.gap_history = []
                if cert.passed:
                    progress.close()
                    cert.status = "certified"
                    cert.policy = policy
                    if verbose:
                        print(f"[+] Candidate {i + 1} passed with max gap {cert.max_gap:.6g}", file=sys.stderr)
                    return cert
                if best is None or cert.max_gap < best[2].max_gap:
                    best = (i, policy, cert)
    progress.close()
    _, policy, cert = best
    cert.status = "budget exhausted"
    cert.provenance = {"source": source, "iterations": index, "seed": seed, "best_candidate": best[0] + 1}
    cert.policy = policy
    if verbose:
        print(f"[!] Budget of {budget} candidates exhausted; best max gap {cert.max_gap:.6g}", file=sys.stderr)
    return cert


def random_pure_policy(model: GameModel, lattice: GoalLattice, horizon: int,
                       rng: np.random.Generator) -> MarkovMultipolicy:
    def rule(n, state, goal, stage):
        return tuple(MixedAction.point(actions[int(rng.integers(len(actions)))])
                     for actions in stage.actions[state])
    return MarkovMultipolicy.from_rule(model, lattice, horizon, rule)


def solve_best_response_dynamics(model: GameModel, initial_goals: Iterable, epsilon, max_rounds: int,
                                 seed: int, jobs: int = 1, verbose: bool = False) -> Certificate:
    """Start uniform; each round every player in turn switches to a greedy best response.

    Every round's multipolicy is certified; a repeated multipolicy means the
    dynamics cycle, and the search restarts from a seeded random pure
    multipolicy. No convergence is assumed: only a passing certificate counts.
    """
    setup = _setup(model, epsilon)
    T = setup.params.T_eps
    lattice = build_goal_lattice(model, initial_goals, T)
    rng = np.random.default_rng(seed)
    policy = MarkovMultipolicy.uniform(model, lattice, T)
    seen = {frozenset(policy.rules.items())}
    history: List[float] = []
    restarts = 0
    best = None

    for round_ in range(max_rounds + 1):
        if round_ > 0:
            for k in range(model.num_players):
                table = evaluate_best_response(model, policy, lattice, k, T, beta=setup.beta, jobs=jobs)
                policy = greedy_policy(policy, table)
            fingerprint = frozenset(policy.rules.items())
            if fingerprint in seen:
                restarts += 1
                if verbose:
                    print(f"[!] Round {round_}: best responses cycled, restart {restarts}", file=sys.stderr)
                policy = random_pure_policy(model, lattice, T, rng)
                fingerprint = frozenset(policy.rules.items())
            seen.add(fingerprint)
        provenance = {"source": "best-response-dynamics", "iterations": round_ + 1, "seed": seed,
                      "restarts": restarts}
        cert = _certify(model, policy, setup, provenance, jobs)
        history.append(cert.max_gap)
        if verbose:
            print(f"[+] Round {round_}: max gap {cert.max_gap:.6g} (threshold {cert.threshold:.6g})",
                  file=sys.stderr)
        if cert.passed:
            cert.status = "certified"
            cert.gap_history = list(history)
            cert.policy = policy
            return cert
        if best is None or cert.max_gap < best[1].max_gap:
            best = (policy, cert)

    policy, cert = best
    cert.status = "no convergence"
    cert.gap_history = list(history)
    cert.provenance = dict(cert.provenance, rounds=max_rounds, restarts=restarts)
    cert.policy = policy
    return cert
