"""
Efficiency and naturalness evaluation of simulated episodes.

Naturalness compares the opponent's simulated track with the same agent's logged track over the simulated time span:
acceleration distributions are pooled across the batch for the KL divergence and the Wasserstein distance, the
trajectory distances are averaged per scenario.
"""
from typing import Sequence

import numpy as np
from scipy.stats import wasserstein_distance

from adversarial_traffic_simulation.configuration import HistogramSpec
from adversarial_traffic_simulation.errors import TrackTooShortError, InsufficientDataError, DegeneratePolylineError, \
    UnmatchedResultError, EmptyCorpusError
from adversarial_traffic_simulation.geometry import points_to_polyline_distances
from adversarial_traffic_simulation.model import Pose, AgentTrack, EpisodeResult, Scenario, EfficiencyReport, \
    NaturalnessReport, EpisodeStatus

MIN_ACCELERATION_POSES = 3


def acceleration_series(track: AgentTrack | Sequence[Pose]) -> np.ndarray:
    """Central differences of the speed channel, one value per interior pose."""
    poses = track.states if isinstance(track, AgentTrack) else tuple(track)
    if len(poses) < MIN_ACCELERATION_POSES:
        raise TrackTooShortError(f"acceleration needs at least {MIN_ACCELERATION_POSES} poses, got {len(poses)}")

    speeds = np.array([pose.speed for pose in poses])
    times = np.array([pose.t for pose in poses])

    return (speeds[2:] - speeds[:-2]) / (times[2:] - times[:-2])


def _check_sample(sample) -> np.ndarray:
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise InsufficientDataError("sample is empty")
    return sample


def binned_distribution(sample, histogram: HistogramSpec) -> np.ndarray:
    """Smoothed, normalised histogram; values outside the range count in the outermost bins."""
    edges = np.linspace(histogram.lower, histogram.upper, histogram.bins + 1)
    counts, _ = np.histogram(np.clip(sample, histogram.lower, histogram.upper), bins=edges)
    smoothed = counts + histogram.smoothing

    return smoothed / smoothed.sum()


def kl_divergence(sample_p, sample_q, histogram: HistogramSpec = HistogramSpec()) -> float:
    """KL(p || q) over shared bins."""
    p = binned_distribution(_check_sample(sample_p), histogram)
    q = binned_distribution(_check_sample(sample_q), histogram)

    return max(float(np.sum(p * np.log(p / q))), 0.0)


def wasserstein_1d(sample_p, sample_q) -> float:
    return float(wasserstein_distance(_check_sample(sample_p), _check_sample(sample_q)))


def _polyline(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or len(points) < 2:
        raise DegeneratePolylineError("trajectory distance needs polylines with at least 2 points")
    return points


def sspd(trajectory_a, trajectory_b) -> float:
    """Symmetric segment-path distance: mean of the two mean vertex-to-path distances."""
    a = _polyline(trajectory_a)
    b = _polyline(trajectory_b)

    return 0.5 * float(np.mean(points_to_polyline_distances(a, b)) + np.mean(points_to_polyline_distances(b, a)))


def hausdorff(trajectory_a, trajectory_b) -> float:
    a = _polyline(trajectory_a)
    b = _polyline(trajectory_b)

    return max(float(np.max(points_to_polyline_distances(a, b))), float(np.max(points_to_polyline_distances(b, a))))


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def efficiency_report(results: list[EpisodeResult]) -> EfficiencyReport:
    """Rates and means over valid episodes only; means over colliding episodes are None without collisions."""
    valid = [result for result in results if result.is_valid]
    collided = [result for result in valid if result.collision.occurred]

    return EfficiencyReport(
        collision_rate=len(collided) / len(valid) if valid else 0.0,
        mean_collision_time=_mean([result.collision_time_since_start for result in collided]),
        mean_relative_speed=_mean([result.collision.relative_speed for result in collided]),
        mean_generation_time=_mean([result.generation_time for result in valid]),
        episodes=len(results),
        valid_episodes=len(valid),
        invalid_episodes=sum(1 for result in results if result.status == EpisodeStatus.INVALID),
        failed_episodes=sum(1 for result in results if result.status == EpisodeStatus.FAILED),
        collisions=len(collided),
    )


def logged_counterpart(result: EpisodeResult, scenario: Scenario) -> AgentTrack | None:
    """The opponent's logged states over the simulated span of its track."""
    simulated = result.opponent_track
    if simulated is None or not scenario.has_agent(simulated.agent_id):
        return None

    logged = scenario.track(simulated.agent_id)
    states = logged.between(simulated.first.t, simulated.last.t)

    return logged.with_states(states) if states else None


def naturalness_report(pairs: list[tuple[EpisodeResult, Scenario]],
                       histogram: HistogramSpec = HistogramSpec()) -> NaturalnessReport:
    generated_accelerations, logged_accelerations = [], []
    path_distances, worst_distances = [], []

    for result, scenario in pairs:
        if not result.is_valid:
            continue

        logged = logged_counterpart(result, scenario)
        if logged is None:
            continue

        simulated = result.opponent_track
        if len(simulated.states) >= MIN_ACCELERATION_POSES and len(logged.states) >= MIN_ACCELERATION_POSES:
            generated_accelerations.extend(acceleration_series(simulated))
            logged_accelerations.extend(acceleration_series(logged))

        if len(simulated.states) >= 2 and len(logged.states) >= 2:
            path_distances.append(sspd(simulated.positions, logged.positions))
            worst_distances.append(hausdorff(simulated.positions, logged.positions))

    has_accelerations = bool(generated_accelerations) and bool(logged_accelerations)

    return NaturalnessReport(
        kl_divergence=kl_divergence(generated_accelerations, logged_accelerations, histogram)
        if has_accelerations else None,
        wasserstein_distance=wasserstein_1d(generated_accelerations, logged_accelerations)
        if has_accelerations else None,
        sspd=_mean(path_distances),
        hausdorff=_mean(worst_distances),
        scenarios_compared=len(path_distances),
        histogram=histogram,
    )


def evaluate_batch(results: list[EpisodeResult], scenarios: list[Scenario],
                   histogram: HistogramSpec = HistogramSpec()) -> tuple[EfficiencyReport, NaturalnessReport]:
    if not results:
        raise EmptyCorpusError("no episode results to evaluate")

    by_id = {scenario.scenario_id: scenario for scenario in scenarios}
    unmatched = [result.scenario_id for result in results if result.scenario_id not in by_id]
    if unmatched:
        raise UnmatchedResultError(f"no logged scenario for results {unmatched}")

    pairs = [(result, by_id[result.scenario_id]) for result in results]

    return efficiency_report(results), naturalness_report(pairs, histogram)
