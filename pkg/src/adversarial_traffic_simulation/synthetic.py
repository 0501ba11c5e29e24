"""
Deterministic synthetic scenes on a straight road.

The main road has two eastbound lanes (y = 0 and y = 3.5) and one westbound lane (y = 7); a separate eastbound road runs
at y = 40. Every logged scene is collision-free. The interacting vehicle of a scene (lead, adjacent or follower) is a
positive interaction label, background vehicles (far road, oncoming, crossing far ahead) are negative.
"""
import math
from enum import Enum

import numpy as np

from adversarial_traffic_simulation.model import AgentTrack, MapGraph, Pose, Scenario, grid_time, normalize_angle

LANE_WIDTH = 3.5
CAR_LENGTH = 4.8
CAR_WIDTH = 2.0
ROAD_START = -200.0
ROAD_END = 600.0
FAR_ROAD_Y = 40.0

DT = 0.1
HISTORY_HORIZON = 1.0
FUTURE_HORIZON = 8.0
EGO_ID = 'ego'


class SceneKind(Enum):
    LEAD = "lead"
    """Vehicle ahead in the ego lane, slightly faster than the ego"""
    ADJACENT = "adjacent"
    """Vehicle side by side in the left neighbour lane"""
    FOLLOWER = "follower"
    """Vehicle behind in the ego lane, slightly slower than the ego"""


_CORPUS_KINDS = (SceneKind.ADJACENT, SceneKind.LEAD, SceneKind.FOLLOWER, SceneKind.ADJACENT, SceneKind.LEAD)


def straight_road(eastbound_lanes: int = 2, westbound_lanes: int = 1, far_road: bool = True) -> MapGraph:
    lanes = [((ROAD_START, i * LANE_WIDTH), (ROAD_END, i * LANE_WIDTH)) for i in range(eastbound_lanes)]
    lanes += [((ROAD_END, (eastbound_lanes + i) * LANE_WIDTH), (ROAD_START, (eastbound_lanes + i) * LANE_WIDTH))
              for i in range(westbound_lanes)]

    top = (eastbound_lanes + westbound_lanes - 0.5) * LANE_WIDTH
    bottom = -0.5 * LANE_WIDTH
    drivable = [((ROAD_START, bottom), (ROAD_END, bottom), (ROAD_END, top), (ROAD_START, top))]

    if far_road:
        lanes.append(((ROAD_START, FAR_ROAD_Y), (ROAD_END, FAR_ROAD_Y)))
        drivable.append(((ROAD_START, FAR_ROAD_Y - LANE_WIDTH / 2), (ROAD_END, FAR_ROAD_Y - LANE_WIDTH / 2),
                         (ROAD_END, FAR_ROAD_Y + LANE_WIDTH / 2), (ROAD_START, FAR_ROAD_Y + LANE_WIDTH / 2)))

    return MapGraph(lane_centerlines=tuple(lanes), drivable_polygons=tuple(drivable))


def profile_track(agent_id: str, x: float, y: float, heading: float, speeds, t_start: float = 0.0, dt: float = DT,
                  length: float = CAR_LENGTH, width: float = CAR_WIDTH) -> AgentTrack:
    """Straight-line track following a speed profile, one speed per grid step starting at t_start."""
    speeds = np.asarray(speeds, dtype=float)
    travelled = np.concatenate([[0.0], np.cumsum(0.5 * (speeds[1:] + speeds[:-1]) * dt)])
    first_step = round(t_start / dt)

    states = tuple(
        Pose(t=grid_time(first_step + i, dt), x=x + distance * math.cos(heading), y=y + distance * math.sin(heading),
             heading=heading, speed=float(speed))
        for i, (distance, speed) in enumerate(zip(travelled, speeds))
    )

    return AgentTrack(agent_id=agent_id, length=length, width=width, states=states)


def constant_velocity_track(agent_id: str, x: float, y: float, heading: float, speed: float, t_start: float = 0.0,
                            t_end: float = HISTORY_HORIZON + FUTURE_HORIZON, dt: float = DT, length: float = CAR_LENGTH,
                            width: float = CAR_WIDTH) -> AgentTrack:
    steps = round((t_end - t_start) / dt) + 1
    return profile_track(agent_id, x, y, heading, np.full(steps, speed), t_start, dt, length, width)


def scene(scenario_id: str, tracks: list[AgentTrack], road: MapGraph | None = None) -> Scenario:
    return Scenario(scenario_id=scenario_id, dt=DT, history_horizon=HISTORY_HORIZON, future_horizon=FUTURE_HORIZON,
                    ego_id=EGO_ID, map=road if road is not None else straight_road(), tracks=tuple(tracks))


def interaction_scene(scenario_id: str, kind: SceneKind, rng: np.random.Generator) -> Scenario:
    ego_speed = float(rng.uniform(8.0, 12.0))
    tracks = [constant_velocity_track(EGO_ID, 0.0, 0.0, 0.0, ego_speed)]

    match kind:
        case SceneKind.LEAD:
            tracks.append(constant_velocity_track('lead', float(rng.uniform(15.0, 25.0)), 0.0, 0.0,
                                                  ego_speed + float(rng.uniform(0.0, 1.0))))
        case SceneKind.ADJACENT:
            tracks.append(constant_velocity_track('adjacent', float(rng.uniform(-2.0, 2.0)), LANE_WIDTH, 0.0,
                                                  ego_speed))
        case SceneKind.FOLLOWER:
            tracks.append(constant_velocity_track('follower', -float(rng.uniform(15.0, 22.0)), 0.0, 0.0,
                                                  ego_speed - float(rng.uniform(0.0, 1.0))))
        case _:
            raise ValueError(f"Invalid scene kind: {kind}")

    tracks.append(constant_velocity_track('far', float(rng.uniform(-20.0, 20.0)), FAR_ROAD_Y, 0.0,
                                          float(rng.uniform(8.0, 12.0))))
    tracks.append(constant_velocity_track('oncoming', float(rng.uniform(150.0, 180.0)), 2 * LANE_WIDTH, math.pi,
                                          float(rng.uniform(8.0, 12.0))))

    return scene(scenario_id, tracks)


def fixture_corpus(n: int = 20, seed: int = 0) -> list[Scenario]:
    """Collision-free logged corpus with ids fixture-000, fixture-001, ..."""
    rng = np.random.default_rng(seed)
    corpus = []

    for index in range(n):
        scenario = interaction_scene(f"fixture-{index:03d}", _CORPUS_KINDS[index % len(_CORPUS_KINDS)], rng)

        if index % 4 == 3:
            crossing = constant_velocity_track('crossing', 400.0, -60.0, math.pi / 2, float(rng.uniform(6.0, 8.0)))
            scenario = scenario.with_tracks(scenario.tracks + (crossing,))

        corpus.append(scenario)

    return corpus


def lead_vehicle_scene(scenario_id: str = 'lead-vehicle', ego_speed: float = 10.0, gap: float = 20.0) -> Scenario:
    return scene(scenario_id, [
        constant_velocity_track(EGO_ID, 0.0, 0.0, 0.0, ego_speed),
        constant_velocity_track('lead', gap, 0.0, 0.0, ego_speed + 0.5),
        constant_velocity_track('far', 0.0, FAR_ROAD_Y, 0.0, ego_speed),
        constant_velocity_track('oncoming', 160.0, 2 * LANE_WIDTH, math.pi, ego_speed),
    ])


def head_on_scene(scenario_id: str = 'head-on', speed: float = 10.0, distance: float = 100.0) -> Scenario:
    """Ego and an oncoming vehicle in the same eastbound lane; the log ends before they meet."""
    t_end = HISTORY_HORIZON + 1.0
    return scene(scenario_id, [
        constant_velocity_track(EGO_ID, 0.0, 0.0, 0.0, speed, t_end=t_end),
        constant_velocity_track('oncoming', distance, 0.0, math.pi, speed, t_end=t_end),
    ], straight_road(far_road=False))


def stalled_vehicle_scene(scenario_id: str = 'stalled-vehicle', ego_speed: float = 10.0,
                          appears_after: float = 2.0, distance: float = 60.0) -> Scenario:
    """
    A stalled vehicle appears in the ego lane appears_after seconds into the episode; the logged ego brakes at
    2 m/s^2 from that moment. The adjacent vehicle drives side by side with the ego throughout.
    """
    steps = round((HISTORY_HORIZON + FUTURE_HORIZON) / DT) + 1
    times = np.arange(steps) * DT
    appears = HISTORY_HORIZON + appears_after
    ego_speeds = np.where(times < appears, ego_speed, np.maximum(ego_speed - 2.0 * (times - appears), 0.0))

    return scene(scenario_id, [
        profile_track(EGO_ID, 0.0, 0.0, 0.0, ego_speeds),
        constant_velocity_track('adjacent', 1.0, LANE_WIDTH, 0.0, ego_speed),
        constant_velocity_track('stalled', ego_speed * appears + distance, 0.0, 0.0, 0.0, t_start=appears),
        constant_velocity_track('far', 0.0, FAR_ROAD_Y, 0.0, ego_speed),
    ])


def rigidly_moved(scenario: Scenario, angle: float, shift: tuple[float, float]) -> Scenario:
    """The same scene rotated by angle about the origin and then translated by shift; times are unchanged."""
    c, s = math.cos(angle), math.sin(angle)

    def point(x: float, y: float) -> tuple[float, float]:
        return c * x - s * y + shift[0], s * x + c * y + shift[1]

    def line(polyline) -> tuple:
        return tuple(point(x, y) for x, y in polyline)

    def pose(state: Pose) -> Pose:
        x, y = point(state.x, state.y)
        return Pose(t=state.t, x=x, y=y, heading=normalize_angle(state.heading + angle), speed=state.speed)

    tracks = tuple(track.with_states(tuple(pose(state) for state in track.states)) for track in scenario.tracks)
    road = MapGraph(lane_centerlines=tuple(line(lane) for lane in scenario.map.lane_centerlines),
                    drivable_polygons=tuple(line(polygon) for polygon in scenario.map.drivable_polygons))

    return scenario.model_copy(update={'tracks': tracks, 'map': road})
