"""
Conversion of decoded Waymo Open Motion scenario records into scenarios.

The record is the dict form of the Scenario proto (e.g. from json_format.MessageToDict with snake_case field names):
timestamps_seconds, current_time_index, sdc_track_index, tracks[].states[] and map_features[].lane.polyline. Decoding
TFRecord files is left to the caller.
"""
import math

import numpy as np

from adversarial_traffic_simulation.errors import ScenarioParseError
from adversarial_traffic_simulation.model import Scenario, AgentTrack, MapGraph, Pose, grid_time

DEFAULT_CURRENT_TIME_INDEX = 10


def _require(record: dict, key: str, field: str):
    if key not in record:
        raise ScenarioParseError(field, "missing")
    return record[key]


def _lane(feature: dict) -> tuple | None:
    polyline = feature.get('lane', {}).get('polyline', [])
    points = []

    for point in polyline:
        xy = (float(point['x']), float(point['y']))
        if not points or xy != points[-1]:
            points.append(xy)

    return tuple(points) if len(points) >= 2 else None


def _track(track: dict, index: int, times: list[float], dt: float) -> AgentTrack | None:
    states = _require(track, 'states', f"tracks.{index}.states")
    poses = []
    length = width = None

    for t, state in zip(times, states):
        if not state.get('valid', False):
            continue

        length = length or float(state['length'])
        width = width or float(state['width'])
        poses.append(Pose(
            t=grid_time(round(t / dt), dt),
            x=float(state['center_x']),
            y=float(state['center_y']),
            heading=float(state['heading']),
            speed=math.hypot(float(state.get('velocity_x', 0.0)), float(state.get('velocity_y', 0.0))),
        ))

    if not poses:
        return None

    return AgentTrack(agent_id=str(_require(track, 'id', f"tracks.{index}.id")), length=length, width=width,
                      states=tuple(poses))


def convert_scenario_record(record: dict) -> Scenario:
    """Invalid states are dropped, tracks without any valid state are left out."""
    timestamps = [float(t) for t in _require(record, 'timestamps_seconds', 'timestamps_seconds')]
    if len(timestamps) < 2:
        raise ScenarioParseError('timestamps_seconds', "needs at least 2 timestamps")

    dt = round(float(np.median(np.diff(timestamps))), 6)
    origin = timestamps[0]
    times = [t - origin for t in timestamps]

    tracks_data = _require(record, 'tracks', 'tracks')
    sdc_index = int(_require(record, 'sdc_track_index', 'sdc_track_index'))
    if not 0 <= sdc_index < len(tracks_data):
        raise ScenarioParseError('sdc_track_index', f"{sdc_index} is not a track index")

    tracks = [track for track in (_track(data, index, times, dt) for index, data in enumerate(tracks_data))
              if track is not None]
    lanes = [lane for lane in (_lane(feature) for feature in record.get('map_features', [])) if lane is not None]

    current = int(record.get('current_time_index', DEFAULT_CURRENT_TIME_INDEX))
    history_horizon = grid_time(current, dt)

    return Scenario(
        scenario_id=record.get('scenario_id'),
        dt=dt,
        history_horizon=history_horizon,
        future_horizon=grid_time(len(times) - 1 - current, dt),
        ego_id=str(tracks_data[sdc_index]['id']),
        map=MapGraph(lane_centerlines=tuple(lanes)),
        tracks=tuple(tracks),
    )
