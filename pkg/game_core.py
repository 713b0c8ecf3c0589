"""
Game model for nonstationary N-player Markov games under the first-passage
probability criterion: exact rational data, validation, the uniform absorption
bound beta, goal canonicalization and the reachable goal lattice.

A model is a finite prefix of stages followed by one tail stage that repeats
for every n >= len(prefix).
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from config import DEFAULT_PROBE

State = str
Action = str
JointAction = Tuple[Action, ...]
GoalVector = Tuple[Fraction, ...]
Row = Tuple[Tuple[State, Fraction], ...]

DIVERGES = "diverges (proven)"
FAILS = "fails (proven)"
INCONCLUSIVE = "inconclusive"


class GameModelError(ValueError):
    """Malformed model input (bad rational, inconsistent shapes)"""


class LatticeError(LookupError):
    """A lookup fell outside the goal lattice the caller built"""


def to_rational(value) -> Fraction:
    """Parse an exact rational from an int, a Fraction or a 'num/den' string"""
    if isinstance(value, bool):
        raise GameModelError(f"Invalid rational: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            if '/' in text:
                num, den = text.split('/')
                numerator, denominator = int(num), int(den)
            else:
                numerator, denominator = int(text), 1
        except ValueError:
            raise GameModelError(f"Invalid rational: {value!r} (expected 'num/den')")
        if denominator == 0:
            raise GameModelError(f"Zero denominator in rational: {value!r}")
        return Fraction(numerator, denominator)
    raise GameModelError(
        f"Rational must be an integer or a 'num/den' string, got {type(value).__name__}")


def canonicalize_goal(goal: Iterable) -> GoalVector:
    """Clamp every goal component at 0.

    Rewards are nonnegative, so every goal with a component <= 0 has
    criterion value 1 for that player; all such goals are merged at 0.
    """
    return tuple(max(to_rational(component), Fraction(0)) for component in goal)


def subtract_reward(goal: GoalVector, reward: GoalVector) -> GoalVector:
    return canonicalize_goal(g - r for g, r in zip(goal, reward))


@dataclass(frozen=True)
class StageModel:
    """One decision epoch: states, per-player action lists, rewards and kernel.

    `actions[state]` holds one action tuple per player; `rewards` and
    `kernel` are keyed by (state, joint action). Omitted rewards are 0.
    """
    index: int
    states: Tuple[State, ...]
    actions: Dict[State, Tuple[Tuple[Action, ...], ...]]
    rewards: Dict[Tuple[State, JointAction], GoalVector]
    kernel: Dict[Tuple[State, JointAction], Row]
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def build(cls, index: int, states: Sequence[State], actions: Dict, rewards: Dict = None,
              kernel: Dict = None) -> 'StageModel':
        """Create a stage from loosely typed data, converting every number to a Fraction.

        Kernel rows may be given as a mapping next_state -> probability or
        as a sequence of (next_state, probability) pairs.
        """
        norm_actions = {
            str(state): tuple(tuple(str(a) for a in player_actions) for player_actions in lists)
            for state, lists in actions.items()
        }
        norm_rewards = {}
        for (state, joint), vector in (rewards or {}).items():
            norm_rewards[(str(state), tuple(joint))] = tuple(to_rational(r) for r in vector)
        norm_kernel = {}
        for (state, joint), row in (kernel or {}).items():
            pairs = row.items() if isinstance(row, dict) else row
            norm_kernel[(str(state), tuple(joint))] = tuple((str(j), to_rational(p)) for j, p in pairs)
        return cls(index=index, states=tuple(str(s) for s in states), actions=norm_actions,
                   rewards=norm_rewards, kernel=norm_kernel)

    def action_list(self, player: int, state: State) -> Tuple[Action, ...]:
        return self.actions[state][player]

    def joint_actions(self, state: State) -> List[JointAction]:
        return list(product(*self.actions[state]))

    def reward_vector(self, state: State, joint: JointAction) -> GoalVector:
        vector = self.rewards.get((state, joint))
        if vector is None:
            return (Fraction(0),) * len(joint)
        return vector

    def row(self, state: State, joint: JointAction) -> Row:
        try:
            return self.kernel[(state, joint)]
        except KeyError:
            raise GameModelError(f"No kernel row for state {state!r}, action {joint!r} at stage {self.index}")

    def hit_probability(self, state: State, joint: JointAction, target: FrozenSet[State]) -> Fraction:
        """p_n(D | i, a), exact"""
        return sum((p for j, p in self.row(state, joint) if j in target), Fraction(0))

    def split_row(self, state: State, joint: JointAction, target: FrozenSet[State]):
        """(float hit probability, ((j, float p) for j outside D)), cached per cell"""
        key = ('split', state, joint, target)
        cached = self._cache.get(key)
        if cached is None:
            row = self.row(state, joint)
            hit = float(sum((p for j, p in row if j in target), Fraction(0)))
            rest = tuple((j, float(p)) for j, p in row if j not in target and p != 0)
            cached = (hit, rest)
            self._cache[key] = cached
        return cached

    def reward_vectors(self, target: FrozenSet[State]) -> Tuple[GoalVector, ...]:
        """Distinct reward vectors over non-target states and their joint actions"""
        key = ('rewards', target)
        cached = self._cache.get(key)
        if cached is None:
            seen = set()
            for state in self.states:
                if state in target or state not in self.actions:
                    continue
                for joint in self.joint_actions(state):
                    seen.add(self.reward_vector(state, joint))
            cached = tuple(sorted(seen))
            self._cache[key] = cached
        return cached


@dataclass(frozen=True)
class GameModel:
    """Eventually-stationary game: prefix stages 0..P-1, then `tail` for all n >= P"""
    num_players: int
    target_set: FrozenSet[State]
    prefix: Tuple[StageModel, ...]
    tail: StageModel

    @property
    def prefix_length(self) -> int:
        return len(self.prefix)

    def stage(self, n: int) -> StageModel:
        if n < 0:
            raise ValueError(f"Stage index must be >= 0, got {n}")
        return self.prefix[n] if n < len(self.prefix) else self.tail

    def represented_stages(self) -> Tuple[StageModel, ...]:
        return self.prefix + (self.tail,)

    def stage_label(self, position: int) -> str:
        return f"stage {position}" if position < len(self.prefix) else "tail"

    def successor_states(self, position: int) -> Tuple[State, ...]:
        """State set of the stage following represented stage `position`"""
        if position + 1 < len(self.prefix):
            return self.prefix[position + 1].states
        return self.tail.states

    def non_target_states(self, n: int) -> Tuple[State, ...]:
        return tuple(s for s in self.stage(n).states if s not in self.target_set)


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    location: str
    message: str

    def to_dict(self) -> Dict[str, str]:
        return {"severity": self.severity, "location": self.location, "message": self.message}


@dataclass(frozen=True)
class BetaSequence:
    values: Tuple[Fraction, ...]
    verdict: str
    partial_sum: Fraction


@dataclass
class ValidationReport:
    findings: List[Finding] = field(default_factory=list)
    beta: Optional[Fraction] = None
    beta_sequence: Optional[BetaSequence] = None

    @property
    def ok(self) -> bool:
        return not any(f.severity == "error" for f in self.findings)

    def errors(self) -> List[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    def to_dict(self) -> Dict:
        result = {
            "ok": self.ok,
            "findings": [f.to_dict() for f in self.findings],
            "beta": str(self.beta) if self.beta is not None else None,
        }
        if self.beta_sequence is not None:
            result["beta_sequence"] = {
                "values": [str(b) for b in self.beta_sequence.values],
                "verdict": self.beta_sequence.verdict,
                "partial_sum": str(self.beta_sequence.partial_sum),
            }
        return result


def _validate_stage(model: GameModel, position: int, findings: List[Finding]):
    stage = model.represented_stages()[position]
    label = model.stage_label(position)
    n_players = model.num_players
    declared = set(stage.states)
    successors = set(model.successor_states(position))

    def error(where, message):
        findings.append(Finding("error", f"{label}, {where}", message))

    if len(declared) != len(stage.states):
        error("states", "duplicate state labels")
    for d in sorted(model.target_set - declared):
        error(f"state {d}", "target state missing from stage state set")
    for state in stage.actions:
        if state not in declared:
            error(f"state {state}", "actions declared for unknown state")

    valid_joints = {}
    for state in stage.states:
        lists = stage.actions.get(state)
        if lists is None:
            if state not in model.target_set:
                error(f"state {state}", "missing action lists")
            continue
        if len(lists) != n_players:
            error(f"state {state}", f"expected {n_players} action lists, found {len(lists)}")
            continue
        for k, player_actions in enumerate(lists):
            if not player_actions:
                error(f"state {state}, player {k + 1}", "empty action list")
            elif len(set(player_actions)) != len(player_actions):
                error(f"state {state}, player {k + 1}", "duplicate action labels")
        valid_joints[state] = set(stage.joint_actions(state))

    for (state, joint), vector in stage.rewards.items():
        where = f"reward {state} {list(joint)}"
        if joint not in valid_joints.get(state, ()):
            error(where, "reward for undeclared state or joint action")
        if len(vector) != n_players:
            error(where, f"reward vector has {len(vector)} components, expected {n_players}")
        for k, r in enumerate(vector):
            if r < 0:
                error(where, f"negative reward {r} for player {k + 1}")

    for (state, joint), row in stage.kernel.items():
        where = f"kernel {state} {list(joint)}"
        if joint not in valid_joints.get(state, ()):
            error(where, "kernel row for undeclared state or joint action")
        targets = [j for j, _ in row]
        if len(set(targets)) != len(targets):
            error(where, "duplicate next state in kernel row")
        for j, p in row:
            if p < 0:
                error(where, f"negative probability {p} for next state {j}")
            if j not in successors:
                error(where, f"next state {j} not in successor stage state set")
        total = sum((p for _, p in row), Fraction(0))
        if total != 1:
            error(where, f"kernel row not stochastic (sums to {total})")

    for state, joints in valid_joints.items():
        if state in model.target_set:
            continue
        for joint in sorted(joints):
            if (state, joint) not in stage.kernel:
                error(f"kernel {state} {list(joint)}", "missing kernel row")


def validate_model(model: GameModel, probe: int = DEFAULT_PROBE) -> ValidationReport:
    """Report every violated model invariant; never raises on invariant violations"""
    report = ValidationReport()
    if model.num_players < 1:
        report.findings.append(Finding("error", "header", "num_players must be >= 1"))
    if not model.target_set:
        report.findings.append(Finding("error", "header", "target set is empty"))
    if model.num_players >= 1:
        for position in range(len(model.represented_stages())):
            _validate_stage(model, position, report.findings)

    if report.ok:
        report.beta = compute_beta(model)
        verdict, partial = check_divergence(model, probe)
        report.beta_sequence = BetaSequence(beta_sequence(model, probe), verdict, partial)
        if report.beta == 0:
            report.findings.append(Finding(
                "warning", "model", "uniform absorption bound beta = 0; certification impossible"))
    return report


class InvalidModelError(ValueError):
    """The model has validation errors; `findings` lists them"""

    def __init__(self, findings: Sequence[Finding]):
        self.findings = list(findings)
        first = self.findings[0]
        super().__init__(f"Model has {len(self.findings)} validation error(s), "
                         f"first at {first.location}: {first.message}")


def require_valid(model: GameModel, probe: int = 1) -> ValidationReport:
    """validate_model, raising InvalidModelError unless the report is ok"""
    report = validate_model(model, probe)
    if not report.ok:
        raise InvalidModelError(report.errors())
    return report


def stage_beta(stage: StageModel, target: FrozenSet[State]) -> Optional[Fraction]:
    """min over i outside D and joint actions a of p(D | i, a); None if there is no such cell"""
    best = None
    for state in stage.states:
        if state in target or state not in stage.actions:
            continue
        for joint in stage.joint_actions(state):
            hit = stage.hit_probability(state, joint, target)
            if best is None or hit < best:
                best = hit
    return best


def compute_beta(model: GameModel) -> Fraction:
    """Uniform absorption bound: exact minimum over every represented stage"""
    values = [stage_beta(stage, model.target_set) for stage in model.represented_stages()]
    values = [v for v in values if v is not None]
    return min(values) if values else Fraction(1)


def beta_sequence(model: GameModel, probe_horizon: int) -> Tuple[Fraction, ...]:
    values = []
    for n in range(probe_horizon):
        b = stage_beta(model.stage(n), model.target_set)
        values.append(Fraction(1) if b is None else b)
    return tuple(values)


def check_divergence(model: GameModel, probe_horizon: int) -> Tuple[str, Fraction]:
    """Decide whether sum_n beta_n diverges (sufficient for absorption into D with probability 1).

    The tail stage repeats forever, so its beta decides the series; the
    partial sum covers beta_0 .. beta_{probe_horizon - 1}.
    """
    partial = sum(beta_sequence(model, probe_horizon), Fraction(0))
    tail_beta = stage_beta(model.tail, model.target_set)
    if tail_beta is None or tail_beta > 0:
        return DIVERGES, partial
    return FAILS, partial


@dataclass(frozen=True)
class GoalLattice:
    """Reachable canonical goal vectors per stage 0..horizon, each stage sorted"""
    stages: Tuple[Tuple[GoalVector, ...], ...]
    _index: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        index = tuple({goal: pos for pos, goal in enumerate(goals)} for goals in self.stages)
        object.__setattr__(self, '_index', index)

    @property
    def horizon(self) -> int:
        return len(self.stages) - 1

    @property
    def initial_goals(self) -> Tuple[GoalVector, ...]:
        return self.stages[0]

    def goals(self, n: int) -> Tuple[GoalVector, ...]:
        if not 0 <= n < len(self.stages):
            raise LatticeError(f"Lattice covers stages 0..{self.horizon}, not {n}")
        return self.stages[n]

    def index(self, n: int, goal: GoalVector) -> int:
        try:
            return self._index[n][goal]
        except (IndexError, KeyError):
            raise LatticeError(f"Goal {format_goal(goal)} is not in the stage-{n} lattice")

    def contains(self, n: int, goal: GoalVector) -> bool:
        return 0 <= n < len(self.stages) and goal in self._index[n]

    def restricted(self, horizon: int) -> 'GoalLattice':
        return GoalLattice(stages=self.stages[:horizon + 1])

    def size(self) -> int:
        return sum(len(goals) for goals in self.stages)


def build_goal_lattice(model: GameModel, initial_goals: Iterable[Iterable], horizon: int) -> GoalLattice:
    """Forward closure of the initial goals under goal -> canon(goal - r_n(i, a))"""
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    current = sorted({canonicalize_goal(g) for g in initial_goals})
    if not current:
        raise GameModelError("At least one initial goal is required")
    for goal in current:
        if len(goal) != model.num_players:
            raise GameModelError(f"Goal {format_goal(goal)} has {len(goal)} components, "
                                 f"expected {model.num_players}")
    stages = [tuple(current)]
    for n in range(horizon):
        vectors = model.stage(n).reward_vectors(model.target_set)
        following = {subtract_reward(goal, r) for goal in current for r in vectors}
        current = sorted(following)
        stages.append(tuple(current))
    return GoalLattice(stages=tuple(stages))


def format_goal(goal: GoalVector) -> str:
    return "(" + ",".join(str(c) for c in goal) + ")"


def parse_goal(text: str) -> GoalVector:
    """Parse '2,3' or '(2,3)' into a canonical goal vector"""
    body = text.strip().strip('()')
    if not body:
        raise GameModelError(f"Empty goal: {text!r}")
    return canonicalize_goal(to_rational(part) for part in body.split(','))
