"""
Configuration for the risk-probability game solver
"""

import os
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

# Numerical constants
TIE_TOLERANCE = 1e-12  # argmax ties: |v1 - v2| <= TIE_TOLERANCE * max(1, |v1|)
DEFAULT_PROBE = 50
ORACLE_NODE_BUDGET = 1_000_000
BOUND_DIGIT_LIMIT = 100_000  # larger enumeration bounds are reported by digit count only
CERTIFY_FRACTION = (3, 5)  # certificate threshold is 3/5 of epsilon

# File format tags
GAME_FORMAT = "riskgame/1"
POLICY_FORMAT = "riskgame-policy/1"

# Defaults that never change a numerical result
DEFAULT_JOBS = int(os.getenv('RISKGAME_JOBS', '1'))
SERVER_PORT = int(os.getenv('PORT', '5001'))

COMMANDS = ("validate", "evaluate", "solve", "certify", "table1", "scenario")
STRATEGIES = ("grid", "brd", "random")
STOCHASTIC_STRATEGIES = ("brd", "random")
FORMATS = ("csv", "report")
TABLE1_EPSILONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
SIMULATION_MAX_STEPS = 200

# Input files each command reads
REQUIRED_INPUTS = {
    "validate": ("model",),
    "evaluate": ("model", "policy"),
    "solve": ("model",),
    "certify": ("model", "policy"),
}

# Exit codes (stable contract)
EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_PARSE = 2
EXIT_BUDGET = 3


class RunConfig(BaseModel):
    """Validated options for one CLI invocation"""
    command: str
    scenario: Optional[str] = None
    model: Optional[Path] = None
    policy: Optional[Path] = None
    epsilon: float = 0.5
    budget: int = 100_000
    seed: Optional[int] = None
    strategy: str = "brd"
    out: Optional[Path] = None
    format: str = "csv"
    jobs: int = Field(default=DEFAULT_JOBS, ge=1)
    probe: int = Field(default=DEFAULT_PROBE, ge=1)
    goals: Optional[str] = None
    horizon: Optional[int] = Field(default=None, ge=0)
    episodes: Optional[int] = Field(default=None, ge=1)
    oracle_depth: Optional[int] = Field(default=None, ge=0)
    beta: Optional[str] = None
    verbose: bool = False

    @field_validator('epsilon')
    @classmethod
    def _epsilon_positive(cls, value):
        if not value > 0:
            raise ValueError("epsilon must be > 0")
        return value

    @field_validator('budget')
    @classmethod
    def _budget_positive(cls, value):
        if value < 1:
            raise ValueError("budget must be >= 1")
        return value

    @field_validator('command')
    @classmethod
    def _known_command(cls, value):
        if value not in COMMANDS:
            raise ValueError(f"Invalid command: {value}. Valid commands: {list(COMMANDS)}")
        return value

    @field_validator('strategy')
    @classmethod
    def _known_strategy(cls, value):
        if value not in STRATEGIES:
            raise ValueError(f"Invalid strategy: {value}. Valid strategies: {list(STRATEGIES)}")
        return value

    @field_validator('format')
    @classmethod
    def _known_format(cls, value):
        if value not in FORMATS:
            raise ValueError(f"Invalid format: {value}. Valid formats: {list(FORMATS)}")
        return value

    @model_validator(mode='after')
    def _check_inputs(self):
        for name in REQUIRED_INPUTS.get(self.command, ()):
            if getattr(self, name) is None:
                raise ValueError(f"{self.command} requires --{name}")
        for name in ('model', 'policy'):
            path = getattr(self, name)
            # solve writes the policy file instead of reading it
            if name == 'policy' and self.command == 'solve':
                continue
            if path is not None and not path.exists():
                raise ValueError(f"{name} file not found: {path}")
        if self.command == 'solve' and self.strategy in STOCHASTIC_STRATEGIES and self.seed is None:
            raise ValueError(f"strategy '{self.strategy}' requires --seed")
        if self.episodes is not None and self.seed is None:
            raise ValueError("Monte Carlo episodes require --seed")
        if self.command == 'solve' and not self.goals:
            raise ValueError("solve requires --goal")
        if self.command == 'table1' and self.beta is None and self.model is None:
            raise ValueError("table1 requires --beta or --model")
        if self.command == 'scenario' and not self.scenario:
            raise ValueError("scenario requires a name (insurance or energy)")
        return self
