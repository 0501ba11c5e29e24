import math

import numpy as np
from pydantic import BaseModel, ConfigDict

from adversarial_traffic_simulation.configuration import ScorerHyperparameters, SelectionMode
from adversarial_traffic_simulation.errors import InsufficientDataError, DegenerateCorpusError, NoOpponentError
from adversarial_traffic_simulation.geometry import boxes_overlap, heading_difference, point_to_polyline_distance
from adversarial_traffic_simulation.model import Scenario, InteractionLabel, FeatureVector, ScorerModel, \
    AdversarialScoreSet, AgentTrack, GRID_TOLERANCE
from adversarial_traffic_simulation.scenario import has_future, current_time, slice_observation

PROBABILITY_EPSILON = 1e-7
MIN_HISTORY_STATES = 2


class TrainingMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    loss_curve: tuple[float, ...]
    initial_loss: float
    final_loss: float
    accuracy: float
    positives: int
    negatives: int


def _headings(track: AgentTrack) -> np.ndarray:
    return np.array([state.heading for state in track.states])


def generate_labels(scenario: Scenario) -> list[InteractionLabel]:
    """
    Pseudo-labels from the full logged episode. An SV is positive when the area swept by its boxes overlaps the area
    swept by the ego's boxes at any pair of timestamps (same path, e.g. driving one after the other), or when the
    centroid distance at a common timestamp drops below the ego length (e.g. side by side in adjacent lanes).
    """
    if not has_future(scenario):
        raise InsufficientDataError(f"scenario {scenario.scenario_id} has no logged future for the ego")

    ego = scenario.ego
    ego_positions = ego.positions
    ego_headings = _headings(ego)
    ego_steps = np.rint(ego.times / scenario.dt).astype(int)

    labels = []

    for track in sorted(scenario.surrounding_tracks, key=lambda candidate: candidate.agent_id):
        positions = track.positions
        path_overlap = bool(np.any(boxes_overlap(ego_positions[:, None, :], ego_headings[:, None], ego.extent,
                                                 positions[None, :, :], _headings(track)[None, :], track.extent)))

        _, ego_index, sv_index = np.intersect1d(ego_steps, np.rint(track.times / scenario.dt).astype(int),
                                                return_indices=True)
        distances = np.linalg.norm(ego_positions[ego_index] - positions[sv_index], axis=-1)
        close = bool(np.any(distances < ego.length))

        labels.append(InteractionLabel(scenario_id=scenario.scenario_id, agent_id=track.agent_id,
                                       positive=path_overlap or close))

    return labels


def _nearest_lane(scenario: Scenario, point) -> int | None:
    lanes = scenario.map.lane_centerlines
    if not lanes:
        return None

    return int(np.argmin([point_to_polyline_distance(point, lane) for lane in lanes]))


def extract_features(scenario: Scenario, sv_id: str) -> FeatureVector:
    """Interaction features of one SV relative to the ego, from history only, in the ego frame at the SV's last state."""
    track = scenario.track(sv_id)
    if len(track.states) < MIN_HISTORY_STATES:
        raise InsufficientDataError(f"agent {sv_id} has a single-state history")

    sv = track.last
    ego_track = scenario.ego
    ego = ego_track.state_at(sv.t) or ego_track.last

    offset = sv.position - ego.position
    forward = np.array([math.cos(ego.heading), math.sin(ego.heading)])
    left = np.array([-math.sin(ego.heading), math.cos(ego.heading)])
    relative_velocity = sv.velocity - ego.velocity

    distance = float(np.linalg.norm(offset))
    closing_speed = -float(offset @ relative_velocity) / distance if distance > 0 else 0.0

    squared_relative_speed = float(relative_velocity @ relative_velocity)
    time_to_closest_approach = 0.0
    if squared_relative_speed > 1e-12:
        time_to_closest_approach = float(np.clip(-float(offset @ relative_velocity) / squared_relative_speed,
                                                 0.0, scenario.future_horizon))

    ego_lane = _nearest_lane(scenario, ego.position)
    same_lane = 1.0 if ego_lane is not None and ego_lane == _nearest_lane(scenario, sv.position) else 0.0

    return FeatureVector(
        longitudinal=float(offset @ forward),
        lateral=float(offset @ left),
        relative_heading=float(heading_difference(sv.heading, ego.heading)),
        relative_speed=sv.speed - ego.speed,
        closing_speed=closing_speed,
        distance=distance,
        same_lane=same_lane,
        time_to_closest_approach=time_to_closest_approach,
    )


def focal_loss(p: float, y: int, alpha_t: float, gamma: float) -> float:
    """-alpha_t (1 - p_t)^gamma log(p_t); p is clamped to [1e-7, 1 - 1e-7]."""
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")

    p = min(max(p, PROBABILITY_EPSILON), 1.0 - PROBABILITY_EPSILON)
    p_t = p if y == 1 else 1.0 - p

    return -alpha_t * (1.0 - p_t) ** gamma * math.log(p_t)


def _sigmoid(logits):
    return 1.0 / (1.0 + np.exp(-np.clip(logits, -500.0, 500.0)))


def _focal_loss_and_gradient(logits: np.ndarray, targets: np.ndarray, alpha_t: np.ndarray,
                             gamma: float) -> tuple[np.ndarray, np.ndarray]:
    p = np.clip(_sigmoid(logits), PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON)
    p_t = np.where(targets == 1, p, 1.0 - p)
    sign = np.where(targets == 1, 1.0, -1.0)
    modulation = (1.0 - p_t) ** gamma
    log_p_t = np.log(p_t)

    loss = -alpha_t * modulation * log_p_t
    # d p_t / d logit = sign * p_t * (1 - p_t)
    gradient = sign * alpha_t * modulation * (gamma * p_t * log_p_t - (1.0 - p_t))

    return loss, gradient


def focal_loss_gradient(logit: float, y: int, alpha_t: float, gamma: float) -> float:
    """Derivative of the focal loss with respect to the pre-sigmoid logit."""
    _, gradient = _focal_loss_and_gradient(np.array([logit]), np.array([y]), np.array([alpha_t]), gamma)
    return float(gradient[0])


def fit_scorer(corpus: list[tuple[FeatureVector, InteractionLabel]], hyperparameters: ScorerHyperparameters,
               seed: int) -> tuple[ScorerModel, TrainingMetrics]:
    """Full-batch gradient descent on the mean focal loss. Deterministic for a given seed."""
    if not corpus:
        raise DegenerateCorpusError("training corpus is empty")

    features = np.array([vector.as_array() for vector, _ in corpus])
    targets = np.array([1 if label.positive else 0 for _, label in corpus])

    if targets.min() == targets.max():
        raise DegenerateCorpusError("training corpus contains a single class")

    mean = features.mean(axis=0)
    scale = features.std(axis=0)
    scale[scale < 1e-12] = 1.0
    standardized = (features - mean) / scale

    samples, input_dim = standardized.shape
    hidden_dim = hyperparameters.hidden_dim
    rng = np.random.default_rng(seed)

    hidden_weights = rng.normal(0.0, 1.0 / math.sqrt(input_dim), size=(input_dim, hidden_dim))
    hidden_bias = np.zeros(hidden_dim)
    output_weights = rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), size=hidden_dim)
    output_bias = 0.0

    alpha_t = np.where(targets == 1, hyperparameters.alpha, 1.0 - hyperparameters.alpha)
    learning_rate = hyperparameters.learning_rate
    loss_curve = []

    for _ in range(hyperparameters.epochs):
        hidden = np.tanh(standardized @ hidden_weights + hidden_bias)
        logits = hidden @ output_weights + output_bias
        loss, gradient = _focal_loss_and_gradient(logits, targets, alpha_t, hyperparameters.gamma)
        loss_curve.append(float(loss.mean()))

        gradient = gradient / samples
        hidden_gradient = np.outer(gradient, output_weights) * (1.0 - hidden ** 2)

        output_weights = output_weights - learning_rate * (hidden.T @ gradient)
        output_bias = output_bias - learning_rate * float(gradient.sum())
        hidden_weights = hidden_weights - learning_rate * (standardized.T @ hidden_gradient)
        hidden_bias = hidden_bias - learning_rate * hidden_gradient.sum(axis=0)

    model = ScorerModel(
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        hidden_weights=tuple(tuple(float(value) for value in row) for row in hidden_weights),
        hidden_bias=tuple(float(value) for value in hidden_bias),
        output_weights=tuple(float(value) for value in output_weights),
        output_bias=float(output_bias),
        feature_mean=tuple(float(value) for value in mean),
        feature_scale=tuple(float(value) for value in scale),
        hyperparameters=hyperparameters,
    )

    final_loss, _ = _focal_loss_and_gradient(model.logits(features), targets, alpha_t, hyperparameters.gamma)
    accuracy = float(np.mean((model.predict(features) >= 0.5) == (targets == 1)))

    metrics = TrainingMetrics(
        loss_curve=tuple(loss_curve),
        initial_loss=loss_curve[0],
        final_loss=float(final_loss.mean()),
        accuracy=accuracy,
        positives=int(targets.sum()),
        negatives=int(samples - targets.sum()),
    )

    return model, metrics


def training_examples(scenario: Scenario,
                      labels: list[InteractionLabel]) -> list[tuple[FeatureVector, InteractionLabel]]:
    """Labels paired with features from the history available at the episode start; SVs absent from it are skipped."""
    observation = slice_observation(scenario, scenario.snap(scenario.ego.first.t + scenario.history_horizon))
    examples = []

    for label in labels:
        if observation.has_agent(label.agent_id) \
                and len(observation.track(label.agent_id).states) >= MIN_HISTORY_STATES:
            examples.append((extract_features(observation, label.agent_id), label))

    return examples


def train_scorer(corpus: list[tuple[FeatureVector, InteractionLabel]], hyperparameters: ScorerHyperparameters,
                 seed: int) -> ScorerModel:
    model, _ = fit_scorer(corpus, hyperparameters, seed)
    return model


def select_opponent(scores: dict[str, float], mode: SelectionMode, temperature: float,
                    rng: np.random.Generator) -> str:
    """Argmax with lexicographic agent id tie-break, or a draw from softmax(scores / temperature)."""
    if not scores:
        raise NoOpponentError("no eligible surrounding vehicle to assign as opponent")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")

    agent_ids = sorted(scores)

    if mode == SelectionMode.ARGMAX:
        return min(agent_ids, key=lambda agent_id: (-scores[agent_id], agent_id))

    logits = np.array([scores[agent_id] for agent_id in agent_ids]) / temperature
    weights = np.exp(logits - logits.max())

    return agent_ids[int(rng.choice(len(agent_ids), p=weights / weights.sum()))]


def score_and_select(observation: Scenario, model: ScorerModel, mode: SelectionMode, temperature: float,
                     seed: int) -> AdversarialScoreSet:
    """Scores every SV present at the current time with enough history and picks the opponent."""
    now = current_time(observation)
    eligible = sorted(
        track.agent_id for track in observation.surrounding_tracks
        if len(track.states) >= MIN_HISTORY_STATES and abs(track.last.t - now) <= GRID_TOLERANCE
    )
    if not eligible:
        raise NoOpponentError(f"scenario {observation.scenario_id} has no SV present at t={now} with at least "
                              f"{MIN_HISTORY_STATES} history states")

    features = np.array([extract_features(observation, agent_id).as_array() for agent_id in eligible])
    scores = {agent_id: float(score) for agent_id, score in zip(eligible, model.predict(features))}

    selected = select_opponent(scores, mode, temperature, np.random.default_rng(seed))

    return AdversarialScoreSet(scores=scores, selected=selected)

