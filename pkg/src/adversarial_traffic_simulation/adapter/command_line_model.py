import json
import os
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from adversarial_traffic_simulation.configuration import RunConfig, SimulationMode, PlannerKind, SelectionMode, \
    OpponentPolicy
from adversarial_traffic_simulation.errors import ConfigurationError

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')
DEFAULT_LOG_LEVEL = 'INFO'


class Command(Enum):
    SYNTHESIZE = "synthesize"
    """Write the synthetic fixture corpus as scenario files"""
    LABEL = "label"
    """Generate pseudo-labels for every surrounding vehicle of a corpus"""
    TRAIN = "train"
    """Train the opponent scorer from labels"""
    GENERATE = "generate"
    """Run adversarial episodes over a corpus"""
    REPLAY = "replay"
    """Run the null-adversary baseline: the opponent replays its log"""
    EVALUATE = "evaluate"
    """Compute efficiency and naturalness reports for episode results"""


def log_level(environ: dict[str, str] = os.environ) -> str:
    """Level from ADVSIM_LOG; unknown values fall back to INFO."""
    level = environ.get('ADVSIM_LOG', DEFAULT_LOG_LEVEL).upper()
    return level if level in LOG_LEVELS else DEFAULT_LOG_LEVEL


class CommandLineArguments(BaseModel):
    """Parsed flags; None means the flag was not given and the config file or the defaults decide."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    command: Command
    corpus: Optional[Path] = None
    out: Optional[Path] = None
    results: Optional[Path] = None
    labels: Optional[Path] = None
    model: Optional[Path] = None
    config: Optional[Path] = None
    mode: Optional[SimulationMode] = None
    update_cycle: Optional[float] = None
    planner: Optional[PlannerKind] = None
    seed: Optional[int] = None
    n1: Optional[int] = None
    n2: Optional[int] = None
    reaction_sensitivity: Optional[float] = Field(default=None, alias='lambda')
    temperature: Optional[float] = None
    select: Optional[SelectionMode] = None
    policy: Optional[OpponentPolicy] = None
    jobs: Optional[int] = None
    count: int = 20

    def file_config(self) -> dict:
        if self.config is None:
            return {}
        if not self.config.is_file():
            raise ConfigurationError(f"config file {self.config} does not exist")

        try:
            data = json.loads(self.config.read_text(encoding='utf-8'))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ConfigurationError(f"config file {self.config} is not valid JSON: {e}") from e

        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {self.config} must contain a JSON object")

        return data

    def to_run_config(self) -> RunConfig:
        """Flags override the config file, which overrides the defaults."""
        data = self.file_config()
        sim = dict(data.get('sim', {}))
        predictor = dict(sim.get('predictor', {}))
        planner = dict(sim.get('planner', {}))

        if self.mode is not None:
            sim['mode'] = self.mode.value
            sim.pop('update_cycle', None)
        if self.update_cycle is not None:
            sim['update_cycle'] = self.update_cycle
        if self.planner is not None:
            planner['kind'] = self.planner.value
        if self.reaction_sensitivity is not None:
            predictor['reaction_sensitivity'] = self.reaction_sensitivity
        if self.select is not None:
            sim['selection'] = self.select.value
        if self.policy is not None:
            sim['opponent_policy'] = self.policy.value
        if self.command == Command.REPLAY:
            sim['opponent_policy'] = OpponentPolicy.REPLAY.value

        for key in ('seed', 'n1', 'n2', 'temperature'):
            if getattr(self, key) is not None:
                sim[key] = getattr(self, key)

        if predictor:
            sim['predictor'] = predictor
        if planner:
            sim['planner'] = planner

        paths = {'corpus': self.corpus, 'out': self.out, 'results': self.results, 'labels': self.labels,
                 'scorer_model': self.model}
        overrides = {key: str(value) for key, value in paths.items() if value is not None}
        if self.jobs is not None:
            overrides['jobs'] = self.jobs

        try:
            return RunConfig.model_validate({**data, **overrides, 'sim': sim})
        except ValidationError as e:
            error = e.errors()[0]
            field = '.'.join(str(part) for part in error['loc'])
            raise ConfigurationError(f"invalid configuration field '{field}': {error['msg']}") from e
