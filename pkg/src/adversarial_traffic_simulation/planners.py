import math

import numpy as np
from aws_lambda_powertools import Logger

from adversarial_traffic_simulation.configuration import IdmParameters, PlannerConfig, PlannerKind
from adversarial_traffic_simulation.errors import EndOfLogError, PathLostError
from adversarial_traffic_simulation.geometry import project_onto_polyline, interpolate_polyline
from adversarial_traffic_simulation.model import Scenario, Pose, AgentTrack, grid_time, normalize_angle
from adversarial_traffic_simulation.services import EgoPlanner

PATH_EXTENSION = 1000.0
"""metres of straight road appended beyond the last logged ego position"""
MIN_DESIRED_SPEED = 0.1
MIN_GAP = 1e-3


def replay_step(log: Scenario, t_now: float) -> Pose:
    """The logged ego pose at t_now + dt."""
    t_next = grid_time(round(t_now / log.dt) + 1, log.dt)
    pose = log.ego.state_at(t_next)

    if pose is None:
        raise EndOfLogError(f"ego {log.ego_id} has no logged pose at t={t_next}")

    return pose


def idm_acceleration(speed: float, desired_speed: float, gap: float | None, approach_rate: float,
                     params: IdmParameters) -> float:
    """
    a * [1 - (v / v0)^delta - (s* / s)^2] with s* = s0 + v * T + v * dv / (2 sqrt(a * b)), clamped to
    [-max_deceleration, a]. Without a leader (gap None) the interaction term is zero.
    """
    free_road = (speed / desired_speed) ** params.exponent
    interaction = 0.0

    if gap is not None:
        desired_gap = params.min_gap + speed * params.time_headway \
            + speed * approach_rate / (2 * math.sqrt(params.max_accel * params.comfortable_decel))
        interaction = (max(desired_gap, 0.0) / max(gap, MIN_GAP)) ** 2

    acceleration = params.max_accel * (1.0 - free_road - interaction)

    return min(max(acceleration, -params.max_deceleration), params.max_accel)


def reference_path(track: AgentTrack) -> np.ndarray:
    """Logged positions without repeated points, extended straight beyond both ends."""
    points = [track.positions[0]]
    for position in track.positions[1:]:
        if np.linalg.norm(position - points[-1]) > 1e-6:
            points.append(position)

    if len(points) >= 2:
        head = points[1] - points[0]
        tail = points[-1] - points[-2]
    else:
        head = tail = np.array([math.cos(track.last.heading), math.sin(track.last.heading)])

    head = head / np.linalg.norm(head)
    tail = tail / np.linalg.norm(tail)

    return np.array([points[0] - PATH_EXTENSION * head, *points, points[-1] + PATH_EXTENSION * tail])


class ReplayPlanner(EgoPlanner):
    def __init__(self, log: Scenario):
        self.log = log

    def step(self, state: Scenario, t_now: float) -> Pose:
        return replay_step(self.log, t_now)


class IdmPlanner(EgoPlanner):
    """
    Follows the logged ego route with pure pursuit and sets the speed with the intelligent driver model. The leader is
    the nearest agent ahead whose centre lies within the corridor around the route.
    """

    def __init__(self, log: Scenario, params: IdmParameters, logger: Logger):
        self.params = params
        self.logger = logger
        self.dt = log.dt
        self.path = reference_path(log.ego)

        if params.desired_speed is not None:
            self.desired_speed = params.desired_speed
        else:
            self.desired_speed = max(float(np.mean([state.speed for state in log.ego.states])), MIN_DESIRED_SPEED)

    def leader(self, state: Scenario, t_now: float, ego_arc_length: float) -> tuple[AgentTrack, Pose, float] | None:
        """Nearest agent ahead in the corridor with its pose at t_now and its arc length along the route."""
        nearest = None

        for track in state.surrounding_tracks:
            pose = track.state_at(t_now)
            if pose is None:
                continue

            projection = project_onto_polyline(pose.position, self.path)
            ahead = projection.arc_length - ego_arc_length
            if ahead <= 0 or abs(projection.lateral) > self.params.corridor_half_width:
                continue

            if nearest is None or ahead < nearest[2] - ego_arc_length:
                nearest = (track, pose, projection.arc_length)

        return nearest

    def step(self, state: Scenario, t_now: float) -> Pose:
        ego = state.ego
        pose = ego.last
        projection = project_onto_polyline(pose.position, self.path)

        if abs(projection.lateral) > self.params.path_lost_threshold:
            raise PathLostError(f"ego is {abs(projection.lateral):.2f} m off its reference path at t={t_now}")

        gap = None
        approach_rate = 0.0
        leader = self.leader(state, t_now, projection.arc_length)

        if leader is not None:
            track, leader_pose, leader_arc_length = leader
            _, tangent = interpolate_polyline(self.path, leader_arc_length)
            leader_speed = float(leader_pose.velocity @ np.array([math.cos(tangent), math.sin(tangent)]))

            gap = leader_arc_length - projection.arc_length - (ego.length + track.length) / 2
            approach_rate = pose.speed - leader_speed

        acceleration = idm_acceleration(pose.speed, self.desired_speed, gap, approach_rate, self.params)
        speed = max(pose.speed + acceleration * self.dt, 0.0)
        distance = 0.5 * (pose.speed + speed) * self.dt

        lookahead = max(self.params.min_lookahead, self.params.lookahead_time * pose.speed)
        target, _ = interpolate_polyline(self.path, projection.arc_length + lookahead)
        to_target = target - pose.position
        alpha = math.atan2(to_target[1], to_target[0]) - pose.heading
        curvature = 2 * math.sin(alpha) / max(float(np.linalg.norm(to_target)), MIN_GAP)

        heading_change = curvature * distance
        chord_heading = pose.heading + heading_change / 2

        return Pose(
            t=grid_time(round(t_now / self.dt) + 1, self.dt),
            x=pose.x + distance * math.cos(chord_heading),
            y=pose.y + distance * math.sin(chord_heading),
            heading=normalize_angle(pose.heading + heading_change),
            speed=speed,
        )


def build_planner(log: Scenario, config: PlannerConfig, logger: Logger) -> EgoPlanner:
    match config.kind:
        case PlannerKind.REPLAY:
            return ReplayPlanner(log)
        case PlannerKind.IDM:
            return IdmPlanner(log, config.idm, logger)
        case _:
            raise ValueError(f"Invalid planner kind: {config.kind}")
