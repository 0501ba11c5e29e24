from adversarial_traffic_simulation.errors import EmptyHistoryError, InsufficientDataError
from adversarial_traffic_simulation.model import Scenario, Pose, GRID_TOLERANCE


def slice_observation(scenario: Scenario, t_now: float) -> Scenario:
    """
    The observation available at t_now: every state with t <= t_now, at most history_horizon seconds old. Agents
    without a state in that window are dropped, the map is kept as is.
    """
    if t_now < scenario.start_time - GRID_TOLERANCE:
        raise EmptyHistoryError(f"t_now={t_now} precedes the first sample at {scenario.start_time}")
    if t_now > scenario.end_time + GRID_TOLERANCE:
        raise InsufficientDataError(f"t_now={t_now} is beyond the scenario end at {scenario.end_time}")

    window_start = t_now - scenario.history_horizon
    tracks = []

    for track in scenario.tracks:
        states = track.between(window_start, t_now)
        if states:
            tracks.append(track.with_states(states))

    if not any(track.agent_id == scenario.ego_id for track in tracks):
        raise EmptyHistoryError(f"ego {scenario.ego_id} has no state in [{window_start}, {t_now}]")

    return scenario.with_tracks(tuple(tracks))


def truncate(scenario: Scenario, t_now: float) -> Scenario:
    """Everything logged up to t_now, without clipping to the history horizon."""
    tracks = []

    for track in scenario.tracks:
        states = tuple(state for state in track.states if state.t <= t_now + GRID_TOLERANCE)
        if states:
            tracks.append(track.with_states(states))

    return scenario.with_tracks(tuple(tracks))


def append_states(scenario: Scenario, poses: dict[str, Pose], templates: Scenario | None = None) -> Scenario:
    """
    Appends one pose per listed agent; tracks of unlisted agents stay untouched. Agents entering the scene get a new
    track whose dimensions are taken from the same agent in templates.
    """
    tracks = [
        track.with_states(track.states + (poses[track.agent_id],)) if track.agent_id in poses else track
        for track in scenario.tracks
    ]

    for agent_id in sorted(poses.keys() - {track.agent_id for track in scenario.tracks}):
        if templates is None:
            raise InsufficientDataError(f"agent {agent_id} enters the scene but no template track is available")
        tracks.append(templates.track(agent_id).with_states((poses[agent_id],)))

    return scenario.with_tracks(tuple(tracks))


def has_future(scenario: Scenario) -> bool:
    ego = scenario.ego
    return ego.last.t - ego.first.t >= scenario.history_horizon + scenario.dt - GRID_TOLERANCE


def current_time(observation: Scenario) -> float:
    return observation.ego.last.t
