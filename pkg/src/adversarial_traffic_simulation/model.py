import math
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from adversarial_traffic_simulation.configuration import ScorerHyperparameters, HistogramSpec
from adversarial_traffic_simulation.errors import ScenarioValidationError, UnknownAgentError

GRID_TOLERANCE = 1e-6
PROBABILITY_TOLERANCE = 1e-9

Point = tuple[float, float]
Polyline = tuple[Point, ...]


def normalize_angle(angle: float) -> float:
    """Maps an angle to (-pi, pi]. Angles already in range are returned unchanged."""
    if -math.pi < angle <= math.pi or not math.isfinite(angle):
        return angle

    wrapped = math.atan2(math.sin(angle), math.cos(angle))

    return math.pi if wrapped <= -math.pi else wrapped


def grid_time(step: int, dt: float) -> float:
    # rounding keeps 11 * 0.1 == 1.1 so computed times compare equal to logged ones
    return round(step * dt, 9)


def _orientation(p: Point, q: Point, r: Point) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool:
    d1 = _orientation(c, d, a)
    d2 = _orientation(c, d, b)
    d3 = _orientation(a, b, c)
    d4 = _orientation(a, b, d)

    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True

    def on_segment(p: Point, q: Point, r: Point) -> bool:
        return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])

    return (d1 == 0 and on_segment(c, d, a)) or (d2 == 0 and on_segment(c, d, b)) \
        or (d3 == 0 and on_segment(a, b, c)) or (d4 == 0 and on_segment(a, b, d))


class Pose(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    t: float
    """seconds"""
    x: float
    y: float
    heading: float
    """radians in (-pi, pi]"""
    speed: float = Field(ge=0)
    """m/s along the heading"""

    @field_validator('heading')
    @classmethod
    def _normalize_heading(cls, heading: float) -> float:
        return normalize_angle(heading)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.heading), math.sin(self.heading)])


class AgentTrack(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, allow_inf_nan=False)

    agent_id: str = Field(alias='id')
    length: float = Field(gt=0)
    width: float = Field(gt=0)
    states: tuple[Pose, ...] = Field(min_length=1)

    @model_validator(mode='after')
    def _check_time_order(self) -> 'AgentTrack':
        for previous, current in zip(self.states, self.states[1:]):
            if current.t <= previous.t:
                raise ScenarioValidationError("states are not strictly increasing in time", self.agent_id, current.t)
        return self

    @property
    def times(self) -> np.ndarray:
        return np.array([state.t for state in self.states])

    @property
    def positions(self) -> np.ndarray:
        return np.array([[state.x, state.y] for state in self.states])

    @property
    def first(self) -> Pose:
        return self.states[0]

    @property
    def last(self) -> Pose:
        return self.states[-1]

    @property
    def extent(self) -> tuple[float, float]:
        return self.length, self.width

    def state_at(self, t: float) -> Optional[Pose]:
        index = int(np.searchsorted(self.times, t - GRID_TOLERANCE))
        if index < len(self.states) and abs(self.states[index].t - t) <= GRID_TOLERANCE:
            return self.states[index]
        return None

    def between(self, start: float, end: float) -> tuple[Pose, ...]:
        """States with start <= t <= end (grid tolerance applied on both sides)."""
        return tuple(state for state in self.states if start - GRID_TOLERANCE <= state.t <= end + GRID_TOLERANCE)

    def with_states(self, states: tuple[Pose, ...]) -> 'AgentTrack':
        return self.model_copy(update={'states': states})


class MapGraph(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, allow_inf_nan=False)

    lane_centerlines: tuple[Polyline, ...] = Field(default=(), alias='lanes')
    drivable_polygons: tuple[Polyline, ...] = Field(default=(), alias='drivable')

    @model_validator(mode='after')
    def _check_geometry(self) -> 'MapGraph':
        for index, line in enumerate(self.lane_centerlines):
            if len(line) < 2:
                raise ScenarioValidationError(f"lane {index} has fewer than 2 points")
            for a, b in zip(line, line[1:]):
                if a == b:
                    raise ScenarioValidationError(f"lane {index} repeats point {a}")

        for index, polygon in enumerate(self.drivable_polygons):
            ring = polygon[:-1] if len(polygon) > 1 and polygon[0] == polygon[-1] else polygon
            if len(ring) < 3:
                raise ScenarioValidationError(f"drivable polygon {index} has fewer than 3 vertices")
            if not MapGraph._is_simple(ring):
                raise ScenarioValidationError(f"drivable polygon {index} self-intersects")

        return self

    @staticmethod
    def _is_simple(ring: Polyline) -> bool:
        edges = [(ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring))]

        for i in range(len(edges)):
            for j in range(i + 1, len(edges)):
                adjacent = j == i + 1 or (i == 0 and j == len(edges) - 1)
                if adjacent:
                    continue
                if _segments_cross(*edges[i], *edges[j]):
                    return False

        return True

    @property
    def lane_arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(np.asarray(line, dtype=float) for line in self.lane_centerlines)


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, allow_inf_nan=False)

    scenario_id: Optional[str] = Field(default=None, alias='id')
    dt: float = Field(default=0.1, gt=0)
    history_horizon: float = Field(ge=0)
    future_horizon: float = Field(ge=0)
    ego_id: str
    map: MapGraph = MapGraph()
    tracks: tuple[AgentTrack, ...] = Field(alias='agents')

    @model_validator(mode='after')
    def _check_consistency(self) -> 'Scenario':
        seen = set()
        for track in self.tracks:
            if track.agent_id in seen:
                raise ScenarioValidationError("duplicate agent id", track.agent_id)
            seen.add(track.agent_id)

            for state in track.states:
                steps = state.t / self.dt
                if not math.isfinite(steps) or abs(steps - round(steps)) > GRID_TOLERANCE:
                    raise ScenarioValidationError(f"state is off the dt={self.dt} grid", track.agent_id, state.t)

        if self.ego_id not in seen:
            raise ScenarioValidationError(f"ego_id {self.ego_id} does not resolve to a track")

        return self

    def track(self, agent_id: str) -> AgentTrack:
        for track in self.tracks:
            if track.agent_id == agent_id:
                return track

        raise UnknownAgentError(agent_id)

    def has_agent(self, agent_id: str) -> bool:
        return any(track.agent_id == agent_id for track in self.tracks)

    @property
    def ego(self) -> AgentTrack:
        return self.track(self.ego_id)

    @property
    def surrounding_tracks(self) -> tuple[AgentTrack, ...]:
        return tuple(track for track in self.tracks if track.agent_id != self.ego_id)

    @property
    def start_time(self) -> float:
        return min(track.first.t for track in self.tracks)

    @property
    def end_time(self) -> float:
        return max(track.last.t for track in self.tracks)

    @property
    def is_log_complete(self) -> bool:
        duration = self.ego.last.t - self.ego.first.t
        return math.isclose(duration, self.history_horizon + self.future_horizon, abs_tol=self.dt / 2)

    def snap(self, t: float) -> float:
        """Rounds a time onto the dt grid."""
        return grid_time(round(t / self.dt), self.dt)

    def with_tracks(self, tracks: tuple[AgentTrack, ...]) -> 'Scenario':
        return self.model_copy(update={'tracks': tracks})


class TrajectoryHypothesis(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    poses: tuple[Pose, ...] = Field(min_length=1)
    probability: float = Field(ge=0, le=1)
    agent_id: Optional[str] = None
    label: Optional[str] = None
    """How the sampler produced the trajectory, e.g. constant_velocity or lattice"""

    @property
    def times(self) -> np.ndarray:
        return np.array([pose.t for pose in self.poses])

    @property
    def positions(self) -> np.ndarray:
        return np.array([[pose.x, pose.y] for pose in self.poses])

    @property
    def headings(self) -> np.ndarray:
        return np.array([pose.heading for pose in self.poses])

    @property
    def speeds(self) -> np.ndarray:
        return np.array([pose.speed for pose in self.poses])

    def pose_at(self, t: float) -> Optional[Pose]:
        index = int(np.searchsorted(self.times, t - GRID_TOLERANCE))
        if index < len(self.poses) and abs(self.poses[index].t - t) <= GRID_TOLERANCE:
            return self.poses[index]
        return None


class HypothesisSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    agent_id: str
    length: float = Field(gt=0)
    width: float = Field(gt=0)
    hypotheses: tuple[TrajectoryHypothesis, ...] = Field(min_length=1)
    fallback: bool = False
    """True when no reachable lane goal existed and only constant-velocity/hard-brake candidates were used"""

    @model_validator(mode='after')
    def _check_normalized(self) -> 'HypothesisSet':
        total = math.fsum(hypothesis.probability for hypothesis in self.hypotheses)
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"hypothesis probabilities sum to {total}, expected 1")
        return self

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([hypothesis.probability for hypothesis in self.hypotheses])


class OrientedBox(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    center: Point
    heading: float
    length: float = Field(gt=0)
    width: float = Field(gt=0)

    @staticmethod
    def of(pose: Pose, length: float, width: float) -> 'OrientedBox':
        return OrientedBox(center=(pose.x, pose.y), heading=pose.heading, length=length, width=width)


class CollisionReport(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    occurred: bool
    time: Optional[float] = None
    relative_speed: Optional[float] = Field(default=None, ge=0)
    agent_id: Optional[str] = None
    """The agent the ego collided with (episode collisions only)"""
    with_opponent: Optional[bool] = None

    @model_validator(mode='after')
    def _check_presence(self) -> 'CollisionReport':
        if self.occurred != (self.time is not None) or self.occurred != (self.relative_speed is not None):
            raise ValueError("time and relative_speed must be present iff a collision occurred")
        return self

    @staticmethod
    def none() -> 'CollisionReport':
        return CollisionReport(occurred=False)


class InteractionLabel(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario_id: Optional[str] = None
    agent_id: str
    positive: bool


FEATURE_NAMES = (
    'longitudinal',
    'lateral',
    'relative_heading',
    'relative_speed',
    'closing_speed',
    'distance',
    'same_lane',
    'time_to_closest_approach',
)


class FeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    longitudinal: float
    """m, SV position along the ego heading"""
    lateral: float
    """m, SV position left of the ego heading"""
    relative_heading: float
    """rad, SV heading minus ego heading, normalized"""
    relative_speed: float
    """m/s, SV speed minus ego speed"""
    closing_speed: float
    """m/s, negative range rate"""
    distance: float
    """m, centroid distance"""
    same_lane: float
    """1.0 when both agents are nearest to the same centerline, else 0.0"""
    time_to_closest_approach: float
    """s, under constant velocity, clipped to [0, horizon]"""

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES])


SCORER_SCHEMA_VERSION = 1


class ScorerModel(BaseModel):
    """Two-layer perceptron with tanh hidden units and a sigmoid output."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    schema_version: int = SCORER_SCHEMA_VERSION
    input_dim: int
    hidden_dim: int
    hidden_weights: tuple[tuple[float, ...], ...]
    """input_dim x hidden_dim, row-major"""
    hidden_bias: tuple[float, ...]
    output_weights: tuple[float, ...]
    output_bias: float
    feature_mean: tuple[float, ...]
    feature_scale: tuple[float, ...]
    hyperparameters: ScorerHyperparameters

    def logits(self, features: np.ndarray) -> np.ndarray:
        standardized = (np.atleast_2d(features) - np.asarray(self.feature_mean)) / np.asarray(self.feature_scale)
        hidden = np.tanh(standardized @ np.asarray(self.hidden_weights) + np.asarray(self.hidden_bias))

        return hidden @ np.asarray(self.output_weights) + self.output_bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        logits = np.clip(self.logits(features), -500.0, 500.0)

        return 1.0 / (1.0 + np.exp(-logits))


class AdversarialScoreSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    scores: dict[str, float]
    selected: str


class ReplanRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    time: float
    chosen_index: int
    risk: float
    risks: tuple[float, ...]
    used_fallback: bool
    """True when no hypothesis pair collided and the most likely pair decided"""
    prediction_fallback: bool = False
    trajectory: TrajectoryHypothesis


class EpisodeStatus(Enum):
    COMPLETED = "completed"
    INVALID = "invalid"
    FAILED = "failed"


class TerminationReason(Enum):
    COLLISION = "collision"
    HORIZON = "horizon"
    END_OF_LOG = "end_of_log"
    PATH_LOST = "path_lost"
    FAILED = "failed"


class EpisodeResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario_id: Optional[str]
    status: EpisodeStatus
    termination: TerminationReason
    seed: int
    start_time: float
    collision: CollisionReport = CollisionReport.none()
    opponent_id: Optional[str] = None
    opponent_scores: dict[str, float] = {}
    replans: tuple[ReplanRecord, ...] = ()
    ego_track: Optional[AgentTrack] = None
    opponent_track: Optional[AgentTrack] = None
    generation_time: float = Field(default=0.0, ge=0)
    """Wall-clock seconds, including every replan"""
    plan_exhausted: bool = False
    error: Optional[str] = None

    @property
    def is_valid(self) -> bool:
        return self.status == EpisodeStatus.COMPLETED

    @property
    def collision_time_since_start(self) -> Optional[float]:
        if not self.collision.occurred:
            return None
        return self.collision.time - self.start_time


class EfficiencyReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    collision_rate: float = Field(ge=0, le=1)
    mean_collision_time: Optional[float] = None
    """seconds after episode start, over colliding episodes; None without collisions"""
    mean_relative_speed: Optional[float] = None
    mean_generation_time: Optional[float] = None
    episodes: int
    valid_episodes: int
    invalid_episodes: int
    failed_episodes: int
    collisions: int


class NaturalnessReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    kl_divergence: Optional[float] = Field(default=None, ge=0)
    wasserstein_distance: Optional[float] = Field(default=None, ge=0)
    sspd: Optional[float] = Field(default=None, ge=0)
    hausdorff: Optional[float] = Field(default=None, ge=0)
    scenarios_compared: int = 0
    histogram: HistogramSpec = HistogramSpec()


class RunArtifact(BaseModel):
    """Envelope written around every JSON artifact, embedding the resolved configuration."""

    model_config = ConfigDict(frozen=True)

    seed: int
    config: dict
    payload: dict
