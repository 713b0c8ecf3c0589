"""
Three-player energy management game.

Player 1 owns renewable generation and storage and sells energy to players
2 and 3; players 2 and 3 demand energy from player 1 and may also buy from
a utility. Storage levels evolve as

    i1' = min(M1', (i1 - t2 - t3 - xi1)^+)
    ik' = min(Mk', (ik + tk - (xik - etak))^+),   k = 2, 3

with traded amounts tk = min(offer of player 1 to k, demand of k). The game
ends when every store is empty: D = {(0, 0, 0)}.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from game_core import (DIVERGES, INCONCLUSIVE, BetaSequence, GameModel, GameModelError, StageModel,
                       to_rational)

Distribution = Dict[int, Fraction]
EnergyState = Tuple[int, int, int]
# (offer to 2, offer to 3, demand of 2, demand of 3)
EnergyJoint = Tuple[int, int, int, int]
RewardFn = Callable[[int, EnergyState, EnergyJoint], Sequence]

TARGET = (0, 0, 0)


def state_label(state: EnergyState) -> str:
    return ":".join(str(x) for x in state)


def parse_state_label(label: str) -> EnergyState:
    parts = tuple(int(x) for x in label.split(":"))
    if len(parts) != 3:
        raise ValueError(f"Energy state label must be 'i1:i2:i3', got {label!r}")
    return parts


def _distribution(values: Dict, name: str, low: int, high: Optional[int]) -> Distribution:
    dist = {int(m): to_rational(p) for m, p in values.items()}
    for m, p in dist.items():
        if p < 0:
            raise GameModelError(f"{name}: negative probability {p} at {m}")
        if m < low or (high is not None and m > high):
            bound = "inf" if high is None else high
            raise GameModelError(f"{name}: support point {m} outside [{low}, {bound}]")
    total = sum(dist.values(), Fraction(0))
    if total != 1:
        raise GameModelError(f"{name}: probabilities sum to {total}, not 1")
    return {m: p for m, p in sorted(dist.items()) if p != 0}


def truncated_geometric(ratio, truncation: int) -> Distribution:
    """P(m) = (1 - ratio) ratio^m for m < truncation; the remaining mass ratio^truncation sits on `truncation`"""
    ratio = to_rational(ratio)
    if not 0 <= ratio < 1:
        raise ValueError(f"ratio must be in [0, 1), got {ratio}")
    if truncation < 0:
        raise ValueError(f"truncation must be >= 0, got {truncation}")
    dist = {m: (1 - ratio) * ratio ** m for m in range(truncation)}
    dist[truncation] = ratio ** truncation
    return {m: p for m, p in dist.items() if p != 0}


def convolve_demand(q: Distribution, g: Distribution, capacity: int) -> Distribution:
    """Distribution of consumption minus utility purchase, xi - eta.

    m >= 0: sum_{l=0..M} q(m + l) g(l);  m < 0: sum_{l=|m|..M} q(l + m) g(l)
    """
    top = max(q) if q else 0
    result = {}
    for m in range(-capacity, top + 1):
        start = 0 if m >= 0 else -m
        mass = sum((q.get(m + l, Fraction(0)) * g.get(l, Fraction(0)) for l in range(start, capacity + 1)),
                   Fraction(0))
        if mass != 0:
            result[m] = mass
    return result


@dataclass(frozen=True)
class EnergyStageParams:
    """Capacities and distributions of one period.

    net_demand is q^1 over {-M1..M1}; consumption[k] and purchase[k] are
    q^k over {0, 1, ...} (already truncated) and g^k over {0..Mk} for
    players 2 and 3 (k = 0, 1 in the tuples).
    """
    capacities: Tuple[int, int, int]
    net_demand: Distribution
    consumption: Tuple[Distribution, Distribution]
    purchase: Tuple[Distribution, Distribution]

    @classmethod
    def build(cls, capacities: Sequence[int], net_demand: Dict, consumption: Sequence[Dict],
              purchase: Sequence[Dict]) -> 'EnergyStageParams':
        caps = tuple(int(c) for c in capacities)
        if len(caps) != 3 or any(c < 0 for c in caps):
            raise GameModelError(f"capacities must be three nonnegative integers, got {capacities}")
        if len(consumption) != 2 or len(purchase) != 2:
            raise GameModelError("consumption and purchase need one distribution for each of players 2 and 3")
        return cls(
            capacities=caps,
            net_demand=_distribution(net_demand, "net demand of player 1", -caps[0], caps[0]),
            consumption=tuple(_distribution(consumption[t], f"consumption of player {t + 2}", 0, None)
                              for t in range(2)),
            purchase=tuple(_distribution(purchase[t], f"purchase of player {t + 2}", 0, caps[t + 1])
                           for t in range(2)),
        )

    def residual_demand(self, t: int) -> Distribution:
        """Convolved demand of player t + 2"""
        return convolve_demand(self.consumption[t], self.purchase[t], self.capacities[t + 1])


@dataclass(frozen=True)
class EnergyParams:
    """Eventually-stationary parameters: prefix periods, then `tail` for ever"""
    prefix: Tuple[EnergyStageParams, ...]
    tail: EnergyStageParams

    def stage(self, n: int) -> EnergyStageParams:
        return self.prefix[n] if n < len(self.prefix) else self.tail

    def represented_stages(self) -> Tuple[EnergyStageParams, ...]:
        return self.prefix + (self.tail,)


@dataclass(frozen=True)
class HarmonicNetDemand:
    """Declared family with q_n^1(M^1) = delta / (n + capacity) for every period n"""
    delta: Fraction
    capacity: int

    def __post_init__(self):
        object.__setattr__(self, 'delta', to_rational(self.delta))
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")

    def top_mass(self, n: int) -> Fraction:
        return self.delta / (n + self.capacity)


@dataclass(frozen=True)
class ActionCaps:
    """Largest offer of player 1 to each customer, and largest demand of players 2 and 3"""
    offer: Optional[int] = None
    demand: Tuple[Optional[int], Optional[int]] = (None, None)


def _capped(limit: int, cap: Optional[int]) -> int:
    return limit if cap is None else min(limit, cap)


def seller_actions(i1: int, caps: ActionCaps) -> List[Tuple[int, int]]:
    """(b1, b2) with b1 <= i1 and b2 <= i1 - b1"""
    return [(b1, b2)
            for b1 in range(_capped(i1, caps.offer) + 1)
            for b2 in range(_capped(i1 - b1, caps.offer) + 1)]


def buyer_actions(level: int, capacity: int, cap: Optional[int]) -> List[int]:
    return list(range(_capped(capacity - level, cap) + 1))


def default_rewards(n: int, state: EnergyState, joint: EnergyJoint) -> Tuple[int, int, int]:
    """One unit of reward per unit traded: player 1 on both sales, each customer on its purchase"""
    b1, b2, a2, a3 = joint
    t2, t3 = min(b1, a2), min(b2, a3)
    return (t2 + t3, t2, t3)


def _marginals(state: EnergyState, joint: EnergyJoint, stage: EnergyStageParams,
               following: Tuple[int, int, int], demands: Sequence[Distribution]) -> List[Dict[int, Fraction]]:
    i1, i2, i3 = state
    b1, b2, a2, a3 = joint
    t2, t3 = min(b1, a2), min(b2, a3)
    first: Dict[int, Fraction] = {}
    for m, p in stage.net_demand.items():
        j = min(following[0], max(i1 - t2 - t3 - m, 0))
        first[j] = first.get(j, Fraction(0)) + p
    result = [first]
    for level, traded, cap, demand in ((i2, t2, following[1], demands[0]), (i3, t3, following[2], demands[1])):
        marginal: Dict[int, Fraction] = {}
        for m, p in demand.items():
            j = min(cap, max(level + traded - m, 0))
            marginal[j] = marginal.get(j, Fraction(0)) + p
        result.append(marginal)
    return result


def _energy_stage(params: EnergyParams, n: int, caps: ActionCaps, rewards: RewardFn) -> StageModel:
    stage = params.stage(n)
    following = params.stage(n + 1).capacities
    demands = (stage.residual_demand(0), stage.residual_demand(1))
    M1, M2, M3 = stage.capacities
    states = list(product(range(M1 + 1), range(M2 + 1), range(M3 + 1)))
    actions, reward_map, kernel = {}, {}, {}
    for state in states:
        label = state_label(state)
        if state == TARGET:
            continue
        sellers = seller_actions(state[0], caps)
        buyers2 = buyer_actions(state[1], M2, caps.demand[0])
        buyers3 = buyer_actions(state[2], M3, caps.demand[1])
        actions[label] = (tuple(f"{b1}:{b2}" for b1, b2 in sellers),
                          tuple(str(a) for a in buyers2), tuple(str(a) for a in buyers3))
        for (b1, b2), a2, a3 in product(sellers, buyers2, buyers3):
            joint = (b1, b2, a2, a3)
            key = (label, (f"{b1}:{b2}", str(a2), str(a3)))
            reward_map[key] = tuple(rewards(n, state, joint))
            marginals = _marginals(state, joint, stage, following, demands)
            row = []
            for (j1, p1), (j2, p2), (j3, p3) in product(*(sorted(m.items()) for m in marginals)):
                row.append((state_label((j1, j2, j3)), p1 * p2 * p3))
            kernel[key] = row
    return StageModel.build(n, [state_label(s) for s in states], actions, reward_map, kernel)


def build_energy_model(params: EnergyParams, action_caps: Optional[ActionCaps] = None,
                       rewards: Optional[RewardFn] = None) -> GameModel:
    """Game model with one stage per prefix period plus the stationary tail.

    Kernel rows are the product of the three storage marginals; rewards
    default to one unit per unit traded.
    """
    caps = action_caps or ActionCaps()
    rewards = rewards or default_rewards
    prefix = tuple(_energy_stage(params, n, caps, rewards) for n in range(len(params.prefix)))
    tail = _energy_stage(params, len(params.prefix), caps, rewards)
    return GameModel(num_players=3, target_set=frozenset({state_label(TARGET)}), prefix=prefix, tail=tail)


def _upper_mass(dist: Distribution, threshold: int) -> Fraction:
    return sum((p for m, p in dist.items() if m >= threshold), Fraction(0))


def customer_empty_mass(stage: EnergyStageParams) -> Tuple[Fraction, Fraction]:
    """P(xik - etak >= Mk) for players 2 and 3"""
    return tuple(_upper_mass(stage.residual_demand(t), stage.capacities[t + 1]) for t in range(2))


def energy_stage_beta(stage: EnergyStageParams, top_mass: Optional[Fraction] = None) -> Fraction:
    """beta_n = q^1(M1) * P(xi2 - eta2 >= M2) * P(xi3 - eta3 >= M3)"""
    if top_mass is None:
        top_mass = stage.net_demand.get(stage.capacities[0], Fraction(0))
    second, third = customer_empty_mass(stage)
    return top_mass * second * third


def check_condition_c(params: EnergyParams, probe: int, family: Optional[HarmonicNetDemand] = None
                      ) -> BetaSequence:
    """Decide whether sum_n beta_n diverges for the energy game.

    Without a family, a stationary tail with beta > 0 proves divergence. A
    declared HarmonicNetDemand replaces q_n^1(M_n^1) by delta / (n + M^1);
    the series then diverges when every period's capacity fits the family
    and both customers empty out with probability bounded away from 0.
    """
    if family is None:
        values = tuple(energy_stage_beta(params.stage(n)) for n in range(probe))
        partial = sum(values, Fraction(0))
        verdict = DIVERGES if energy_stage_beta(params.tail) > 0 else INCONCLUSIVE
        return BetaSequence(values, verdict, partial)

    values = tuple(energy_stage_beta(params.stage(n), family.top_mass(n)) for n in range(probe))
    partial = sum(values, Fraction(0))
    stages = params.represented_stages()
    fits = all(stage.capacities[0] <= family.capacity for stage in stages)
    customers = min(min(customer_empty_mass(stage)) for stage in stages)
    verdict = DIVERGES if fits and customers > 0 else INCONCLUSIVE
    return BetaSequence(values, verdict, partial)


def energy_target_bound_holds(model: GameModel, params: EnergyParams) -> bool:
    """p_n(D | i, a) >= beta_n at every non-target state and joint action of every represented stage"""
    for position, stage in enumerate(model.represented_stages()):
        beta = energy_stage_beta(params.stage(position))
        for state in model.non_target_states(position):
            for joint in stage.joint_actions(state):
                if stage.hit_probability(state, joint, model.target_set) < beta:
                    return False
    return True


def stationary_params(capacities: Sequence[int], net_demand: Dict, consumption: Sequence[Dict],
                      purchase: Sequence[Dict], prefix_length: int = 0) -> EnergyParams:
    stage = EnergyStageParams.build(capacities, net_demand, consumption, purchase)
    return EnergyParams(prefix=(stage,) * prefix_length, tail=stage)


def demo_params() -> EnergyParams:
    """Small stationary instance with capacities (1, 1, 1)"""
    return stationary_params(
        capacities=(1, 1, 1),
        net_demand={-1: Fraction(1, 4), 0: Fraction(1, 4), 1: Fraction(1, 2)},
        consumption=(truncated_geometric(Fraction(1, 2), 3), truncated_geometric(Fraction(1, 2), 3)),
        purchase=({0: Fraction(2, 3), 1: Fraction(1, 3)}, {0: Fraction(1)}),
    )
