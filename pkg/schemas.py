"""
File formats and request schemas for the risk-probability game solver.

Game and policy documents are JSON validated with pydantic; rationals are
"num/den" strings or integers and JSON floats are rejected. CSV exports put
their metadata in leading "# key=value" lines.
"""

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, StrictInt, StrictStr, ValidationError, model_validator

from bellman import MixedAction
from config import GAME_FORMAT, POLICY_FORMAT, STOCHASTIC_STRATEGIES, STRATEGIES
from game_core import (GameModel, GameModelError, GoalVector, StageModel, build_goal_lattice,
                       canonicalize_goal, parse_goal, to_rational)
from nash_solver import Certificate
from policy_eval import MarkovMultipolicy, ValueTable

Rational = Union[StrictInt, StrictStr]


class GameFileError(ValueError):
    """Unparseable game or policy document.

    Syntax errors carry line and column; schema errors carry the JSON path.
    """

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 path: Optional[str] = None):
        self.line = line
        self.column = column
        self.path = path
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        elif path:
            where = f" (at {path})"
        super().__init__(f"{message}{where}")


class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid')


class RewardEntry(_Strict):
    state: StrictStr
    action: List[StrictStr]
    reward: List[Rational]


class KernelEntry(_Strict):
    state: StrictStr
    action: List[StrictStr]
    row: List[Tuple[StrictStr, Rational]]


class StageDocument(_Strict):
    states: List[StrictStr]
    actions: Dict[StrictStr, List[List[StrictStr]]]
    rewards: List[RewardEntry] = Field(default_factory=list)
    kernel: List[KernelEntry] = Field(default_factory=list)


class GameDocument(_Strict):
    format: Literal[GAME_FORMAT]
    num_players: StrictInt = Field(ge=1)
    target_set: List[StrictStr]
    prefix_length: StrictInt = Field(ge=0)
    stages: List[StageDocument] = Field(default_factory=list)
    tail: StageDocument

    @model_validator(mode='after')
    def _prefix_matches(self):
        if len(self.stages) != self.prefix_length:
            raise ValueError(f"prefix_length is {self.prefix_length} but {len(self.stages)} stages are given")
        return self


class PolicyCellDocument(_Strict):
    stage: StrictInt = Field(ge=0)
    state: StrictStr
    goal: List[Rational]
    profile: List[Dict[StrictStr, Rational]]


class PolicyDocument(_Strict):
    format: Literal[POLICY_FORMAT]
    horizon: StrictInt = Field(ge=0)
    initial_goals: List[List[Rational]] = Field(min_length=1)
    cells: List[PolicyCellDocument]


def _error_path(err: ValidationError) -> Tuple[str, str]:
    first = err.errors()[0]
    path = ".".join(str(part) for part in first['loc'])
    return first['msg'], path


def _load_json(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise GameFileError(f"Invalid {what} JSON: {e.msg}", line=e.lineno, column=e.colno)


def _stage_from_document(index: int, doc: StageDocument, where: str) -> StageModel:
    rewards, kernel = {}, {}
    for pos, entry in enumerate(doc.rewards):
        key = (entry.state, tuple(entry.action))
        if key in rewards:
            raise GameFileError("Duplicate reward entry", path=f"{where}.rewards.{pos}")
        rewards[key] = entry.reward
    for pos, entry in enumerate(doc.kernel):
        key = (entry.state, tuple(entry.action))
        if key in kernel:
            raise GameFileError("Duplicate kernel entry", path=f"{where}.kernel.{pos}")
        kernel[key] = entry.row
    try:
        return StageModel.build(index, doc.states, doc.actions, rewards, kernel)
    except GameModelError as e:
        raise GameFileError(str(e), path=where)


def game_from_document(data: Any) -> GameModel:
    try:
        doc = GameDocument.model_validate(data)
    except ValidationError as e:
        message, path = _error_path(e)
        raise GameFileError(f"Invalid game document: {message}", path=path)
    prefix = tuple(_stage_from_document(n, stage, f"stages.{n}") for n, stage in enumerate(doc.stages))
    tail = _stage_from_document(doc.prefix_length, doc.tail, "tail")
    return GameModel(num_players=doc.num_players, target_set=frozenset(doc.target_set), prefix=prefix, tail=tail)


def parse_game(text: str) -> GameModel:
    """Parse a game document; raises GameFileError with a location on failure"""
    return game_from_document(_load_json(text, "game"))


def _stage_to_document(stage: StageModel) -> Dict[str, Any]:
    return {
        "states": list(stage.states),
        "actions": {state: [list(actions) for actions in lists] for state, lists in stage.actions.items()},
        "rewards": [{"state": state, "action": list(joint), "reward": [str(r) for r in vector]}
                    for (state, joint), vector in stage.rewards.items()],
        "kernel": [{"state": state, "action": list(joint), "row": [[j, str(p)] for j, p in row]}
                   for (state, joint), row in stage.kernel.items()],
    }


def game_to_document(model: GameModel) -> Dict[str, Any]:
    return {
        "format": GAME_FORMAT,
        "num_players": model.num_players,
        "target_set": sorted(model.target_set),
        "prefix_length": model.prefix_length,
        "stages": [_stage_to_document(stage) for stage in model.prefix],
        "tail": _stage_to_document(model.tail),
    }


def serialize_game(model: GameModel) -> str:
    """Deterministic text: declared order everywhere, rationals in lowest terms"""
    return json.dumps(game_to_document(model), indent=2) + "\n"


def policy_from_document(data: Any, model: GameModel) -> MarkovMultipolicy:
    try:
        doc = PolicyDocument.model_validate(data)
        goals = [canonicalize_goal(goal) for goal in doc.initial_goals]
        lattice = build_goal_lattice(model, goals, doc.horizon)
        rules = {}
        for pos, cell in enumerate(doc.cells):
            key = (cell.stage, cell.state, canonicalize_goal(cell.goal))
            if key in rules:
                raise GameFileError("Duplicate policy cell", path=f"cells.{pos}")
            rules[key] = tuple(MixedAction.from_dict(weights) for weights in cell.profile)
    except ValidationError as e:
        message, path = _error_path(e)
        raise GameFileError(f"Invalid policy document: {message}", path=path)
    except GameModelError as e:
        raise GameFileError(f"Invalid policy document: {e}")
    return MarkovMultipolicy(lattice=lattice, horizon=doc.horizon, rules=rules)


def parse_policy(text: str, model: GameModel) -> MarkovMultipolicy:
    """Parse a policy document against `model`; coverage is checked by MarkovMultipolicy.check"""
    return policy_from_document(_load_json(text, "policy"), model)


def policy_to_document(policy: MarkovMultipolicy) -> Dict[str, Any]:
    cells = []
    for (n, state, goal) in sorted(policy.rules):
        cells.append({
            "stage": n,
            "state": state,
            "goal": [str(c) for c in goal],
            "profile": [mixed.to_dict() for mixed in policy.rules[(n, state, goal)]],
        })
    return {
        "format": POLICY_FORMAT,
        "horizon": policy.horizon,
        "initial_goals": [[str(c) for c in goal] for goal in policy.lattice.initial_goals],
        "cells": cells,
    }


def serialize_policy(policy: MarkovMultipolicy) -> str:
    return json.dumps(policy_to_document(policy), indent=2) + "\n"


def _number(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.12g}"


def _csv_text(header: Dict[str, Any], columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    for key, value in header.items():
        buffer.write(f"# {key}={value}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def _goal_columns(num_players: int) -> List[str]:
    return [f"goal_{k + 1}" for k in range(num_players)]


def value_table_csv(u_tables: Sequence[ValueTable], v_tables: Optional[Sequence[ValueTable]] = None,
                    extra_columns: Sequence[str] = (),
                    extra: Optional[Dict[Tuple[int, str, GoalVector], Sequence[Any]]] = None,
                    header: Optional[Dict[str, Any]] = None) -> str:
    """One row per (stage, state, goal, player) with u, optional v and the bound at that stage.

    `extra` adds cross-check columns, keyed by (player, state, goal), on
    stage-0 rows only.
    """
    num_players = len(u_tables[0].lattice.initial_goals[0])
    columns = ["stage", "state"] + _goal_columns(num_players) + ["player", "u"]
    if v_tables is not None:
        columns.append("v")
    columns += ["bound"] + list(extra_columns)
    rows = []
    for pos, table in enumerate(u_tables):
        best = v_tables[pos] if v_tables is not None else None
        for n, state, goal, value in table.rows():
            row = [n, state] + [str(c) for c in goal] + [table.player + 1, _number(value)]
            if best is not None:
                row.append(_number(best.value(n, state, goal)))
            row.append(_number(table.bound_at(n)))
            if extra_columns:
                cells = (extra or {}).get((table.player, state, goal)) if n == 0 else None
                row += [_number(c) if isinstance(c, float) else ("" if c is None else str(c))
                        for c in (cells or [None] * len(extra_columns))]
            rows.append(row)
    return _csv_text(header or {}, columns, rows)


def _certificate_header(cert: Certificate) -> Dict[str, Any]:
    provenance = cert.provenance
    return {
        "epsilon": cert.epsilon,
        "beta": cert.beta,
        "T_eps": cert.T_eps,
        "K": cert.K,
        "delta": cert.delta,
        "verdict": cert.verdict,
        "status": cert.status,
        "max_gap": _number(cert.max_gap),
        "source": provenance.get("source"),
        "iterations": provenance.get("iterations"),
        "seed": provenance.get("seed"),
        "bound_digits": cert.bound_digits,
    }


def certificate_csv(cert: Certificate) -> str:
    num_players = len(cert.rows[0].goal) if cert.rows else 0
    columns = ["player", "state"] + _goal_columns(num_players) + ["u", "v", "gap"]
    rows = [[row.player + 1, row.state] + [str(c) for c in row.goal]
            + [_number(row.u), _number(row.v), _number(row.gap)]
            for row in cert.rows]
    return _csv_text(_certificate_header(cert), columns, rows)


def certificate_report(cert: Certificate) -> str:
    """Human-readable rendering of the certificate CSV rows"""
    lines = [f"{key:>13}: {value}" for key, value in _certificate_header(cert).items()]
    lines.append("")
    lines.append(f"{'player':>6}  {'state':<10} {'goal':<16} {'u':>12} {'v':>12} {'gap':>12}")
    for row in cert.rows:
        goal = "(" + ",".join(str(c) for c in row.goal) + ")"
        lines.append(f"{row.player + 1:>6}  {row.state:<10} {goal:<16} "
                     f"{row.u:>12.6g} {row.v:>12.6g} {row.gap:>12.6g}")
    if cert.gap_history:
        lines.append("")
        lines.append("gap history: " + ", ".join(f"{g:.6g}" for g in cert.gap_history))
    lines.append("")
    lines.append(cert.theoretical_note)
    return "\n".join(lines) + "\n"


def table1_csv(beta: Fraction, rows: Sequence[Tuple[float, int]]) -> str:
    return _csv_text({"beta": beta}, ["epsilon", "T"], [[str(eps), t] for eps, t in rows])


def _goals_from(value: Any) -> List[GoalVector]:
    if value is None:
        raise ValueError("initial_goals is required")
    if isinstance(value, str):
        return [parse_goal(value)]
    if not isinstance(value, list) or not value:
        raise ValueError("initial_goals must be a goal string or a non-empty list of goals")
    if all(not isinstance(v, (list, str)) for v in value):
        value = [value]
    return [parse_goal(v) if isinstance(v, str) else canonicalize_goal(to_rational(c) for c in v)
            for v in value]


def _epsilon_from(data: Dict[str, Any]) -> float:
    epsilon = data.get('epsilon')
    if isinstance(epsilon, bool) or not isinstance(epsilon, (int, float)) or not epsilon > 0:
        raise ValueError("epsilon must be a number > 0")
    return float(epsilon)


@dataclass
class SolveRequest:
    """Request schema for the solve endpoint"""
    model: GameModel
    initial_goals: List[GoalVector]
    epsilon: float
    strategy: str = "brd"
    budget: int = 100_000
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SolveRequest':
        if 'model' not in data:
            raise ValueError("model is required")
        strategy = data.get('strategy', 'brd')
        if strategy not in STRATEGIES:
            raise ValueError(f"Invalid strategy: {strategy}. Valid strategies: {list(STRATEGIES)}")
        budget = data.get('budget', 100_000)
        if isinstance(budget, bool) or not isinstance(budget, int) or budget < 1:
            raise ValueError("budget must be an integer >= 1")
        seed = data.get('seed')
        if strategy in STOCHASTIC_STRATEGIES and seed is None:
            raise ValueError(f"strategy '{strategy}' requires a seed")
        return cls(model=game_from_document(data['model']), initial_goals=_goals_from(data.get('initial_goals')),
                   epsilon=_epsilon_from(data), strategy=strategy, budget=budget, seed=seed)


@dataclass
class CertifyRequest:
    """Request schema for the certify endpoint"""
    model: GameModel
    policy: MarkovMultipolicy
    epsilon: float

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CertifyRequest':
        if 'model' not in data or 'policy' not in data:
            raise ValueError("model and policy are required")
        model = game_from_document(data['model'])
        return cls(model=model, policy=policy_from_document(data['policy'], model), epsilon=_epsilon_from(data))
