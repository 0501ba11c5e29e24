"""
Target-driven trajectory sampler.

Candidates are built from closed-form motion primitives: constant-acceleration profiles along the current heading
(constant velocity, hard brake, mild brake, accelerate), quintic lane changes onto neighbouring reachable lanes, and
quintic curves to goals placed every goal_spacing metres along reachable lane centerlines. Every candidate is checked
against the acceleration and yaw-rate bounds on an oversampled grid and scored by lane adherence, heading alignment at
the goal and peak acceleration. The kept n cover every manoeuvre group first and are normalised with a softmax.
"""
import math
import threading
from typing import NamedTuple, Callable

import numpy as np
from aws_lambda_powertools import Logger
from cachetools import LRUCache

from adversarial_traffic_simulation.configuration import PredictorConfig
from adversarial_traffic_simulation.errors import InsufficientDataError
from adversarial_traffic_simulation.geometry import points_to_polyline_distances, project_onto_polyline, \
    interpolate_polyline, arc_lengths, heading_difference, align_times, boxes_overlap
from adversarial_traffic_simulation.model import Scenario, HypothesisSet, TrajectoryHypothesis, Pose, AgentTrack, \
    normalize_angle, grid_time
from adversarial_traffic_simulation.services import TrajectoryPredictor

OVERSAMPLING = 10
FEASIBILITY_TOLERANCE = 1e-9
STANDSTILL_SPEED = 1e-6

CONSTANT_VELOCITY = 'constant_velocity'
HARD_BRAKE = 'hard_brake'
MILD_BRAKE = 'mild_brake'
ACCELERATE = 'accelerate'
LANE_CHANGE_LEFT = 'lane_change_left'
LANE_CHANGE_RIGHT = 'lane_change_right'
LATTICE = 'lattice'

# manoeuvre groups as (rank, lane index); selection reserves one candidate per group in this order
CONSTANT_VELOCITY_GROUP = 0
BRAKE_GROUP = 1
LANE_CHANGE_GROUP = 2
LATTICE_GROUP = 3
SPEED_CHANGE_GROUP = 4

Group = tuple[int, int]

# tau -> (positions (k, len, 2), velocities (k, len, 2))
Sampler = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


class CandidateSet(NamedTuple):
    labels: tuple[str, ...]
    groups: tuple[Group, ...]
    times: np.ndarray
    """(n,) output timestamps, shared by all candidates"""
    positions: np.ndarray
    """(k, n, 2)"""
    headings: np.ndarray
    speeds: np.ndarray
    base_scores: np.ndarray
    fallback: bool


class _Lane(NamedTuple):
    index: int
    points: np.ndarray
    arc_length: float
    """of the agent's foot point"""
    lateral: float
    """agent offset from the centerline, positive to the left"""


class _Start(NamedTuple):
    position: np.ndarray
    heading: float
    speed: float

    @property
    def forward(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])

    @property
    def left(self) -> np.ndarray:
        return np.array([-math.sin(self.heading), math.cos(self.heading)])


def _straight_sampler(start: _Start, accelerations: list[float]) -> Sampler:
    accelerations = np.asarray(accelerations, dtype=float)[:, None]

    def sample(tau: np.ndarray):
        stop = np.full_like(accelerations, np.inf)
        np.divide(start.speed, -accelerations, out=stop, where=accelerations < 0)
        moving = np.minimum(tau[None, :], stop)

        distance = start.speed * moving + 0.5 * accelerations * moving ** 2
        speed = np.maximum(start.speed + accelerations * moving, 0.0)

        return start.position + distance[..., None] * start.forward, speed[..., None] * start.forward

    return sample


def _offset_sampler(start: _Start, offsets: list[float], duration: float) -> Sampler:
    offsets = np.asarray(offsets, dtype=float)[:, None]

    def sample(tau: np.ndarray):
        s = np.clip(tau / duration, 0.0, 1.0)[None, :]
        lateral = offsets * (10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5)
        lateral_rate = offsets * (30 * s ** 2 - 60 * s ** 3 + 30 * s ** 4) / duration

        positions = start.position + (start.speed * tau)[None, :, None] * start.forward + lateral[..., None] * start.left
        velocities = start.speed * start.forward + lateral_rate[..., None] * start.left

        return positions, np.broadcast_to(velocities, positions.shape)

    return sample


def _quintic_sampler(start: _Start, goals: np.ndarray, goal_velocities: np.ndarray, horizon: float) -> Sampler:
    """Quintic per axis from the current state (zero acceleration) to each goal state (zero acceleration) at horizon."""
    initial_velocity = start.speed * start.forward
    displacement = goals - start.position
    c3 = (20 * displacement - (8 * goal_velocities + 12 * initial_velocity) * horizon) / (2 * horizon ** 3)
    c4 = (-30 * displacement + (14 * goal_velocities + 16 * initial_velocity) * horizon) / (2 * horizon ** 4)
    c5 = (12 * displacement - 6 * (goal_velocities + initial_velocity) * horizon) / (2 * horizon ** 5)

    def sample(tau: np.ndarray):
        t = tau[None, :, None]
        positions = start.position + initial_velocity * t + c3[:, None, :] * t ** 3 + c4[:, None, :] * t ** 4 \
            + c5[:, None, :] * t ** 5
        velocities = initial_velocity + 3 * c3[:, None, :] * t ** 2 + 4 * c4[:, None, :] * t ** 3 \
            + 5 * c5[:, None, :] * t ** 4

        return positions, velocities

    return sample


def _headings_from_velocities(velocities: np.ndarray, initial_heading: float) -> np.ndarray:
    """atan2 of the velocity; samples at standstill inherit the previous heading."""
    raw = np.arctan2(velocities[..., 1], velocities[..., 0])
    moving = np.linalg.norm(velocities, axis=-1) > STANDSTILL_SPEED

    last_moving = np.where(moving, np.arange(raw.shape[-1])[None, :], -1)
    np.maximum.accumulate(last_moving, axis=-1, out=last_moving)

    filled = np.take_along_axis(raw, np.maximum(last_moving, 0), axis=-1)
    return np.where(last_moving >= 0, filled, initial_heading)


def _kinematics(sampler: Sampler, tau: np.ndarray, start: _Start) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    positions, velocities = sampler(tau)
    return positions, _headings_from_velocities(velocities, start.heading), np.linalg.norm(velocities, axis=-1)


def _accelerations(speeds: np.ndarray, headings: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Longitudinal and lateral accelerations between consecutive samples, speeds/headings including tau = 0."""
    longitudinal = np.diff(speeds, axis=-1) / step
    heading_change = heading_difference(headings[..., 1:], headings[..., :-1])
    lateral = 0.5 * (speeds[..., 1:] + speeds[..., :-1]) * heading_change / step

    return longitudinal, lateral


def _feasible(sampler: Sampler, fine_tau: np.ndarray, start: _Start, config: PredictorConfig) -> np.ndarray:
    _, headings, speeds = _kinematics(sampler, fine_tau, start)
    step = fine_tau[1] - fine_tau[0]

    longitudinal, lateral = _accelerations(speeds, headings, step)
    yaw = np.abs(heading_difference(headings[..., 1:], headings[..., :-1]))

    return np.all(np.abs(longitudinal) <= config.max_longitudinal_accel + FEASIBILITY_TOLERANCE, axis=-1) \
        & np.all(np.abs(lateral) <= config.max_lateral_accel + FEASIBILITY_TOLERANCE, axis=-1) \
        & np.all(yaw <= config.max_yaw_rate * step + FEASIBILITY_TOLERANCE, axis=-1)


class TargetDrivenPredictor(TrajectoryPredictor):
    def __init__(self, logger: Logger, cache_size: int = 32):
        self.logger = logger
        self._cache = LRUCache(maxsize=cache_size)
        self._lock = threading.Lock()

    def predict_marginal(self, observation: Scenario, agent_id: str, config: PredictorConfig) -> HypothesisSet:
        candidates, chosen = self._prepared(observation, agent_id, config)
        logits = candidates.base_scores[chosen] / config.temperature

        return self._hypothesis_set(observation.track(agent_id), candidates, chosen, logits)

    def predict_conditional(self, observation: Scenario, ego_id: str, opponent_trajectory: TrajectoryHypothesis,
                            config: PredictorConfig) -> HypothesisSet:
        """
        Ego reaction distribution: the marginal candidate set, each base probability multiplied by
        exp(-lambda * overlap) where overlap counts the timestamps at which the candidate's box meets the opponent's.
        """
        if opponent_trajectory.agent_id is None or not observation.has_agent(opponent_trajectory.agent_id):
            raise InsufficientDataError("conditional prediction needs an opponent trajectory of an observed agent")

        candidates, chosen = self._prepared(observation, ego_id, config)
        overlaps = self.overlap_counts(candidates, chosen, observation.track(ego_id),
                                       observation.track(opponent_trajectory.agent_id), opponent_trajectory)

        logits = candidates.base_scores[chosen] / config.temperature - config.reaction_sensitivity * overlaps

        return self._hypothesis_set(observation.track(ego_id), candidates, chosen, logits)

    @staticmethod
    def overlap_counts(candidates: CandidateSet, chosen: np.ndarray, agent: AgentTrack, opponent: AgentTrack,
                       opponent_trajectory: TrajectoryHypothesis) -> np.ndarray:
        mask_candidates, mask_opponent = align_times(candidates.times, opponent_trajectory.times)

        overlap = boxes_overlap(candidates.positions[chosen][:, mask_candidates],
                                candidates.headings[chosen][:, mask_candidates], agent.extent,
                                opponent_trajectory.positions[mask_opponent][None, :],
                                opponent_trajectory.headings[mask_opponent][None, :], opponent.extent)

        return overlap.sum(axis=-1).astype(float)

    def candidates(self, observation: Scenario, agent_id: str, config: PredictorConfig) -> tuple[CandidateSet, np.ndarray]:
        """The full scored candidate pool and the indices of the n hypotheses kept from it."""
        return self._prepared(observation, agent_id, config)

    def _prepared(self, observation: Scenario, agent_id: str, config: PredictorConfig):
        key = (id(observation), agent_id, config)

        with self._lock:
            cached = self._cache.get(key)
        if cached is not None and cached[0] is observation:
            return cached[1]

        candidates = self._build_candidates(observation, agent_id, config)
        prepared = candidates, self._select(candidates, config)

        with self._lock:
            self._cache[key] = (observation, prepared)

        return prepared

    def _build_candidates(self, observation: Scenario, agent_id: str, config: PredictorConfig) -> CandidateSet:
        track = observation.track(agent_id)
        if len(track.states) < 2:
            raise InsufficientDataError(f"agent {agent_id} needs at least 2 history states for prediction")

        current = track.last
        start = _Start(position=current.position, heading=current.heading, speed=current.speed)

        dt = observation.dt
        steps = max(1, round(observation.future_horizon / dt))
        horizon = steps * dt
        first_step = round(current.t / dt)
        times = np.array([grid_time(first_step + k, dt) for k in range(1, steps + 1)])

        fine_tau = np.linspace(0.0, horizon, steps * OVERSAMPLING + 1)
        coarse_tau = np.concatenate([[0.0], dt * np.arange(1, steps + 1)])

        reachable = self._reachable_lanes(observation, start, config)
        fallback = not reachable

        if fallback:
            self.logger.warning(f"agent {agent_id} has no reachable lane within {config.lane_search_radius} m; "
                                f"falling back to constant velocity and hard brake")
            families = [([CONSTANT_VELOCITY, HARD_BRAKE],
                         [(CONSTANT_VELOCITY_GROUP, 0), (BRAKE_GROUP, 0)],
                         _straight_sampler(start, [0.0, -config.max_longitudinal_accel]))]
        else:
            families = [
                ([CONSTANT_VELOCITY, HARD_BRAKE, MILD_BRAKE],
                 [(CONSTANT_VELOCITY_GROUP, 0), (BRAKE_GROUP, 0), (SPEED_CHANGE_GROUP, 0)],
                 _straight_sampler(start, [0.0, -config.max_longitudinal_accel, -config.max_longitudinal_accel / 2])),
            ]
            for family in (self._lane_change_sampler(start, reachable, horizon, config),
                           self._lattice_sampler(start, reachable, horizon, config)):
                if family is not None:
                    families.append(family)

        labels, groups, sampled = [], [], []
        for family_labels, family_groups, sampler in families:
            feasible = _feasible(sampler, fine_tau, start, config)
            if fallback:
                feasible[:] = True
            positions, headings, speeds = _kinematics(sampler, coarse_tau, start)
            for index in np.flatnonzero(feasible):
                labels.append(family_labels[index])
                groups.append(family_groups[index])
                sampled.append((positions[index], headings[index], speeds[index]))

        missing = config.n_hypotheses - len(sampled)
        if missing > 0 and not fallback:
            accelerations = [config.max_longitudinal_accel * (i + 1) / (missing + 1) for i in range(missing)]
            positions, headings, speeds = _kinematics(_straight_sampler(start, accelerations), coarse_tau, start)
            for index in range(missing):
                labels.append(ACCELERATE)
                groups.append((SPEED_CHANGE_GROUP, 0))
                sampled.append((positions[index], headings[index], speeds[index]))

        positions = np.stack([item[0] for item in sampled])
        headings = np.stack([item[1] for item in sampled])
        speeds = np.stack([item[2] for item in sampled])

        return CandidateSet(
            labels=tuple(labels),
            groups=tuple(groups),
            times=times,
            positions=positions[:, 1:],
            headings=headings[:, 1:],
            speeds=speeds[:, 1:],
            base_scores=self._base_scores(observation, positions, headings, speeds, dt, config),
            fallback=fallback,
        )

    @staticmethod
    def _reachable_lanes(observation: Scenario, start: _Start, config: PredictorConfig) -> list[_Lane]:
        """Lanes within the search radius whose direction at the foot point is within 90 degrees of the heading."""
        reachable = []

        for index, lane in enumerate(observation.map.lane_arrays):
            projection = project_onto_polyline(start.position, lane)
            aligned = abs(heading_difference(projection.heading, start.heading)) < math.pi / 2
            if projection.distance <= config.lane_search_radius and aligned:
                reachable.append(_Lane(index=index, points=lane, arc_length=projection.arc_length,
                                       lateral=projection.lateral))

        return reachable

    @staticmethod
    def _lane_change_sampler(start: _Start, lanes: list[_Lane], horizon: float, config: PredictorConfig):
        # a lane at lateral offset d from the agent lies at -d in the agent's left direction
        targets = [lane for lane in lanes if abs(lane.lateral) >= config.lane_width / 2]
        if not targets:
            return None

        labels = [LANE_CHANGE_LEFT if lane.lateral < 0 else LANE_CHANGE_RIGHT for lane in targets]
        groups = [(LANE_CHANGE_GROUP, lane.index) for lane in targets]
        sampler = _offset_sampler(start, [-lane.lateral for lane in targets],
                                  min(config.lane_change_duration, horizon))

        return labels, groups, sampler

    @staticmethod
    def _lattice_sampler(start: _Start, lanes: list[_Lane], horizon: float, config: PredictorConfig):
        reach = start.speed * horizon + 0.5 * config.max_longitudinal_accel * horizon ** 2
        goals, goal_velocities, groups = [], [], []

        for lane in lanes:
            lane_length = arc_lengths(lane.points)[-1]
            count = int(math.floor(reach / config.goal_spacing))

            for distance in config.goal_spacing * np.arange(1, count + 1):
                if lane.arc_length + distance > lane_length:
                    break
                point, tangent = interpolate_polyline(lane.points, lane.arc_length + distance)
                speed = max(2 * distance / horizon - start.speed, 0.0)
                goals.append(point)
                goal_velocities.append(speed * np.array([math.cos(tangent), math.sin(tangent)]))
                groups.append((LATTICE_GROUP, lane.index))

        if not goals:
            return None

        sampler = _quintic_sampler(start, np.array(goals), np.array(goal_velocities), horizon)
        return [LATTICE] * len(goals), groups, sampler

    @staticmethod
    def _base_scores(observation: Scenario, positions: np.ndarray, headings: np.ndarray, speeds: np.ndarray,
                     dt: float, config: PredictorConfig) -> np.ndarray:
        """w1 * (-mean lane offset) + w2 * (-|heading error at goal|) + w3 * (-peak |acceleration|)"""
        longitudinal, lateral = _accelerations(speeds, headings, dt)
        peak_acceleration = np.max(np.hypot(longitudinal, lateral), axis=-1)

        lanes = observation.map.lane_arrays
        if not lanes:
            return -config.accel_weight * peak_acceleration

        future = positions[:, 1:]
        flat = future.reshape(-1, 2)
        distances = np.stack([points_to_polyline_distances(flat, lane) for lane in lanes])
        mean_offset = distances.min(axis=0).reshape(future.shape[:2]).mean(axis=-1)

        heading_error = np.empty(len(positions))
        for index, (goal, goal_heading) in enumerate(zip(positions[:, -1], headings[:, -1])):
            nearest = lanes[int(np.argmin([points_to_polyline_distances(goal, lane)[0] for lane in lanes]))]
            heading_error[index] = abs(heading_difference(goal_heading, project_onto_polyline(goal, nearest).heading))

        return -(config.lane_weight * mean_offset + config.heading_weight * heading_error
                 + config.accel_weight * peak_acceleration)

    @staticmethod
    def _select(candidates: CandidateSet, config: PredictorConfig) -> np.ndarray:
        """
        Indices of the kept hypotheses, best first. The best candidate of each manoeuvre group is reserved while
        there is room (constant velocity, braking, lane changes and lattice goals per target lane, speed changes),
        then the rest is filled by score; near-duplicates are only used when nothing else is left.
        """
        n = config.n_hypotheses
        order = sorted(range(len(candidates.labels)), key=lambda i: (-candidates.base_scores[i], i))

        if candidates.fallback:
            return np.array(order[:n])

        chosen = []

        def duplicate(i: int) -> bool:
            return any(np.max(np.linalg.norm(candidates.positions[i] - candidates.positions[j], axis=-1))
                       <= config.duplicate_tolerance for j in chosen)

        for group in sorted(set(candidates.groups)):
            if len(chosen) >= n:
                break
            for i in order:
                if candidates.groups[i] == group and not duplicate(i):
                    chosen.append(i)
                    break

        for allow_duplicates in (False, True):
            for i in order:
                if len(chosen) >= n:
                    break
                if i not in chosen and (allow_duplicates or not duplicate(i)):
                    chosen.append(i)

        return np.array(sorted(chosen, key=lambda i: (-candidates.base_scores[i], i)))

    @staticmethod
    def _hypothesis_set(track: AgentTrack, candidates: CandidateSet, chosen: np.ndarray,
                        logits: np.ndarray) -> HypothesisSet:
        weights = np.exp(logits - logits.max())
        probabilities = weights / weights.sum()

        hypotheses = []
        for index, probability in zip(chosen, probabilities):
            poses = tuple(
                Pose.model_construct(t=float(t), x=float(position[0]), y=float(position[1]),
                                     heading=normalize_angle(float(heading)), speed=float(speed))
                for t, position, heading, speed in zip(candidates.times, candidates.positions[index],
                                                       candidates.headings[index], candidates.speeds[index])
            )
            hypotheses.append(TrajectoryHypothesis(poses=poses, probability=float(probability),
                                                   agent_id=track.agent_id, label=candidates.labels[index]))

        return HypothesisSet(agent_id=track.agent_id, length=track.length, width=track.width,
                             hypotheses=tuple(hypotheses), fallback=candidates.fallback)
