import math
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from adversarial_traffic_simulation.errors import ConfigurationError


class SimulationMode(Enum):
    G = "g"
    """Plan the whole adversarial trajectory once at the start"""
    S1 = "s1"
    """Replan every second"""
    S2 = "s2"
    """Replan every 2 seconds"""
    S4 = "s4"
    """Replan every 4 seconds"""
    CUSTOM = "custom"
    """Replan with a user supplied update cycle"""


class SelectionMode(Enum):
    ARGMAX = "argmax"
    SAMPLE = "sample"


class PlannerKind(Enum):
    REPLAY = "replay"
    IDM = "idm"


class OpponentPolicy(Enum):
    ADVERSARIAL = "adversarial"
    REPLAY = "replay"
    """Null adversary: the selected opponent replays its log"""
    RANDOM_SEARCH = "random_search"
    """Baseline: random search over kinematic bicycle controls, judged against the ego at constant velocity"""


_MODE_CYCLES = {
    SimulationMode.S1: 1.0,
    SimulationMode.S2: 2.0,
    SimulationMode.S4: 4.0,
}


class PredictorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    n_hypotheses: int = Field(default=6, ge=1)
    goal_spacing: float = Field(default=5.0, gt=0)
    """Distance between lattice goals along a lane centerline (m)"""
    max_longitudinal_accel: float = Field(default=6.0, gt=0)
    max_lateral_accel: float = Field(default=4.0, gt=0)
    max_yaw_rate: float = Field(default=1.0, gt=0)
    """rad/s"""
    lane_weight: float = 1.0
    heading_weight: float = 1.0
    accel_weight: float = 0.5
    reaction_sensitivity: float = Field(default=2.0, ge=0)
    """Weight of the overlap penalty exp(-lambda * overlap) in conditional prediction"""
    temperature: float = Field(default=1.0, gt=0)
    lane_search_radius: float = Field(default=5.0, gt=0)
    """Lanes closer than this to the agent are candidates for lattice goals (m)"""
    lane_width: float = Field(default=3.5, gt=0)
    """Reachable lanes at least half a lane width to the side are lane change targets (m)"""
    lane_change_duration: float = Field(default=3.0, gt=0)
    duplicate_tolerance: float = Field(default=0.1, ge=0)

    def with_hypotheses(self, n_hypotheses: int) -> 'PredictorConfig':
        return self.model_copy(update={'n_hypotheses': n_hypotheses})


class IdmParameters(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    desired_speed: Optional[float] = Field(default=None, gt=0)
    """v0; None resolves to the mean logged ego speed"""
    time_headway: float = Field(default=1.5, gt=0)
    min_gap: float = Field(default=2.0, gt=0)
    max_accel: float = Field(default=2.0, gt=0)
    comfortable_decel: float = Field(default=2.0, gt=0)
    exponent: float = Field(default=4.0, gt=0)
    max_deceleration: float = Field(default=8.0, gt=0)
    corridor_half_width: float = Field(default=3.0, gt=0)
    path_lost_threshold: float = Field(default=5.0, gt=0)
    lookahead_time: float = Field(default=1.0, gt=0)
    min_lookahead: float = Field(default=3.0, gt=0)


class PlannerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: PlannerKind = PlannerKind.IDM
    idm: IdmParameters = IdmParameters()


class RandomSearchConfig(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    samples: int = Field(default=64, ge=1)
    control_points: int = Field(default=4, ge=1)
    """Piecewise-constant segments of acceleration and steering over the plan"""
    wheelbase: float = Field(default=2.8, gt=0)
    rear_axle_ratio: float = Field(default=0.5, gt=0, lt=1)
    """Distance from the rear axle to the centre of gravity over the wheelbase"""
    max_accel: float = Field(default=3.0, ge=0)
    max_decel: float = Field(default=6.0, ge=0)
    max_steering: float = Field(default=0.3, ge=0, lt=math.pi / 2)
    """rad"""


class ScorerHyperparameters(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    hidden_dim: int = Field(default=16, ge=1)
    alpha: float = Field(default=0.25, gt=0, lt=1)
    """Positive class weight; negatives are weighted with 1 - alpha"""
    gamma: float = Field(default=2.0, ge=0)
    learning_rate: float = Field(default=1.0, gt=0)
    epochs: int = Field(default=2000, ge=1)


class HistogramSpec(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    lower: float = -8.0
    upper: float = 8.0
    bins: int = Field(default=50, ge=1)
    smoothing: float = Field(default=1e-6, ge=0)

    @model_validator(mode='after')
    def _check_range(self) -> 'HistogramSpec':
        if self.upper <= self.lower:
            raise ConfigurationError(f"histogram upper bound {self.upper} must exceed lower bound {self.lower}")
        return self


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: SimulationMode = SimulationMode.S1
    update_cycle: Optional[float] = Field(default=None, gt=0)
    """T in seconds; derived from the mode unless mode is custom. None for G (plan once)."""
    n1: int = Field(default=6, ge=1)
    n2: int = Field(default=6, ge=1)
    planner: PlannerConfig = PlannerConfig()
    predictor: PredictorConfig = PredictorConfig()
    selection: SelectionMode = SelectionMode.SAMPLE
    temperature: float = Field(default=0.1, gt=0)
    seed: int = 0
    future_horizon: Optional[float] = Field(default=None, gt=0)
    """Overrides the scenario's future horizon"""
    start_time: Optional[float] = None
    """Defaults to the first ego sample plus the history horizon"""
    opponent_policy: OpponentPolicy = OpponentPolicy.ADVERSARIAL
    search: RandomSearchConfig = RandomSearchConfig()

    @model_validator(mode='before')
    @classmethod
    def _derive_update_cycle(cls, data):
        if not isinstance(data, dict):
            return data

        mode = SimulationMode(data.get('mode', SimulationMode.S1))
        cycle = data.get('update_cycle')

        if mode == SimulationMode.G:
            if cycle is not None and not math.isinf(cycle):
                raise ConfigurationError(f"mode g plans once; update_cycle {cycle} is not allowed")
            return {**data, 'update_cycle': None}

        if mode == SimulationMode.CUSTOM:
            if cycle is None:
                raise ConfigurationError("mode custom requires update_cycle")
            return data

        if cycle is not None and not math.isclose(cycle, _MODE_CYCLES[mode]):
            raise ConfigurationError(f"mode {mode.value} implies update_cycle {_MODE_CYCLES[mode]}, got {cycle}")

        return {**data, 'update_cycle': _MODE_CYCLES[mode]}

    def replan_interval_steps(self, dt: float) -> int | None:
        """Number of simulation steps between replans, None when planning only once."""
        if self.update_cycle is None:
            return None

        return max(1, round(self.update_cycle / dt))


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    corpus: Optional[Path] = None
    out: Optional[Path] = None
    results: Optional[Path] = None
    labels: Optional[Path] = None
    scorer_model: Optional[Path] = None
    sim: SimConfig = SimConfig()
    scorer: ScorerHyperparameters = ScorerHyperparameters()
    histogram: HistogramSpec = HistogramSpec()
    jobs: int = Field(default=1, ge=1)

    @property
    def seed(self) -> int:
        return self.sim.seed
