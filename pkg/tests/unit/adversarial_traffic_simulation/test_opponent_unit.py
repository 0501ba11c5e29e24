import math
from unittest import TestCase

import numpy as np
from scipy.stats import chisquare

from adversarial_traffic_simulation.configuration import ScorerHyperparameters, SelectionMode
from adversarial_traffic_simulation.errors import InsufficientDataError, DegenerateCorpusError, NoOpponentError
from adversarial_traffic_simulation.model import InteractionLabel, ScorerModel, FEATURE_NAMES, FeatureVector
from adversarial_traffic_simulation.opponent import generate_labels, extract_features, focal_loss, \
    focal_loss_gradient, fit_scorer, training_examples, select_opponent, score_and_select, train_scorer
from adversarial_traffic_simulation.scenario import slice_observation, truncate
from adversarial_traffic_simulation.synthetic import fixture_corpus, lead_vehicle_scene, scene, \
    constant_velocity_track, rigidly_moved, EGO_ID, LANE_WIDTH, FAR_ROAD_Y


def _nearest_vehicle_scorer() -> ScorerModel:
    distance = FEATURE_NAMES.index('distance')
    return ScorerModel(
        input_dim=len(FEATURE_NAMES),
        hidden_dim=1,
        hidden_weights=tuple((-1.0 if i == distance else 0.0,) for i in range(len(FEATURE_NAMES))),
        hidden_bias=(0.0,),
        output_weights=(1.0,),
        output_bias=0.0,
        feature_mean=(0.0,) * len(FEATURE_NAMES),
        feature_scale=tuple(100.0 if i == distance else 1.0 for i in range(len(FEATURE_NAMES))),
        hyperparameters=ScorerHyperparameters(),
    )


def _features(value: float) -> FeatureVector:
    return FeatureVector(**{name: value for name in FEATURE_NAMES})


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


class TestGenerateLabels(TestCase):
    def test_should_label_interacting_vehicles_positive_and_background_negative(self):
        # Given
        corpus = fixture_corpus(5)

        # When
        labels = {scenario.scenario_id: {label.agent_id: label.positive for label in generate_labels(scenario)}
                  for scenario in corpus}

        # Then
        self.assertEqual(labels['fixture-000'], {'adjacent': True, 'far': False, 'oncoming': False})
        self.assertEqual(labels['fixture-001'], {'far': False, 'lead': True, 'oncoming': False})
        self.assertEqual(labels['fixture-002'], {'far': False, 'follower': True, 'oncoming': False})
        self.assertEqual(labels['fixture-003'], {'adjacent': True, 'crossing': False, 'far': False,
                                                 'oncoming': False})

    def test_should_return_labels_sorted_by_agent_id(self):
        # When
        labels = generate_labels(lead_vehicle_scene())

        # Then
        self.assertEqual([label.agent_id for label in labels], ['far', 'lead', 'oncoming'])
        self.assertTrue(all(label.scenario_id == 'lead-vehicle' for label in labels))

    def test_should_not_change_under_rigid_motion_of_the_scene(self):
        for scenario in fixture_corpus(5):
            for angle, shift in ((0.7, (123.4, -56.7)), (-2.5, (-1000.0, 250.0)), (math.pi, (0.0, 0.0))):
                with self.subTest(scenario=scenario.scenario_id, angle=angle):
                    # When
                    moved = generate_labels(rigidly_moved(scenario, angle, shift))

                    # Then
                    self.assertEqual(moved, generate_labels(scenario))

    def test_should_raise_insufficient_data_error_without_logged_future(self):
        with self.assertRaises(InsufficientDataError):
            generate_labels(truncate(lead_vehicle_scene(), 1.0))


class TestExtractFeatures(TestCase):
    def test_should_describe_lead_vehicle_in_ego_frame(self):
        # Given
        observation = slice_observation(lead_vehicle_scene(gap=20.0), 1.0)

        # When
        features = extract_features(observation, 'lead')

        # Then: the lead is 0.5 m/s faster, so it gains 0.5 m per second
        self.assertAlmostEqual(features.longitudinal, 20.5, delta=1e-6)
        self.assertAlmostEqual(features.lateral, 0.0, delta=1e-9)
        self.assertAlmostEqual(features.relative_speed, 0.5, delta=1e-9)
        self.assertAlmostEqual(features.closing_speed, -0.5, delta=1e-9)
        self.assertAlmostEqual(features.distance, 20.5, delta=1e-6)
        self.assertEqual(features.same_lane, 1.0)
        self.assertEqual(features.time_to_closest_approach, 0.0)

    def test_should_mark_far_road_vehicle_as_other_lane(self):
        # Given
        observation = slice_observation(lead_vehicle_scene(), 1.0)

        # When
        features = extract_features(observation, 'far')

        # Then
        self.assertEqual(features.same_lane, 0.0)
        self.assertAlmostEqual(features.lateral, FAR_ROAD_Y, delta=1e-9)

    def test_should_raise_insufficient_data_error_for_single_state_history(self):
        # Given
        scenario = scene('single', [constant_velocity_track(EGO_ID, 0.0, 0.0, 0.0, 10.0),
                                    constant_velocity_track('new', 30.0, 0.0, 0.0, 10.0, t_start=1.0)])
        observation = slice_observation(scenario, 1.0)

        # When / Then
        with self.assertRaises(InsufficientDataError):
            extract_features(observation, 'new')


class TestFocalLoss(TestCase):
    def test_should_match_analytic_value(self):
        self.assertAlmostEqual(focal_loss(0.5, 1, 0.25, 2.0), 0.25 * 0.25 * math.log(2), delta=1e-12)

    def test_should_equal_cross_entropy_without_focusing(self):
        for p in (0.01, 0.3, 0.5, 0.9, 0.999):
            self.assertAlmostEqual(focal_loss(p, 1, 1.0, 0.0), -math.log(p), delta=1e-12)
            self.assertAlmostEqual(focal_loss(p, 0, 1.0, 0.0), -math.log(1 - p), delta=1e-12)

    def test_should_clamp_probability(self):
        self.assertAlmostEqual(focal_loss(0.0, 1, 1.0, 0.0), -math.log(1e-7), delta=1e-9)

    def test_should_match_finite_differences(self):
        # Given
        rng = np.random.default_rng(3)
        step = 1e-5

        for _ in range(1000):
            logit = float(rng.uniform(-4.0, 4.0))
            y = int(rng.integers(0, 2))
            alpha_t = float(rng.uniform(0.05, 0.95))
            gamma = float(rng.uniform(0.0, 5.0))

            # When
            gradient = focal_loss_gradient(logit, y, alpha_t, gamma)
            numeric = (focal_loss(_sigmoid(logit + step), y, alpha_t, gamma)
                       - focal_loss(_sigmoid(logit - step), y, alpha_t, gamma)) / (2 * step)

            # Then
            self.assertLessEqual(abs(gradient - numeric), 1e-6 * abs(gradient) + 1e-9,
                                 f"logit={logit} y={y} alpha={alpha_t} gamma={gamma}")

    def test_should_raise_value_error_for_invalid_label(self):
        with self.assertRaises(ValueError):
            focal_loss(0.5, 2, 0.25, 2.0)

    def test_should_raise_value_error_for_negative_gamma(self):
        with self.assertRaises(ValueError):
            focal_loss(0.5, 1, 0.25, -1.0)


class TestFitScorer(TestCase):
    def _fixture_examples(self):
        examples = []
        for scenario in fixture_corpus(20):
            examples.extend(training_examples(scenario, generate_labels(scenario)))
        return examples

    def test_should_separate_fixture_corpus(self):
        # Given
        examples = self._fixture_examples()

        # When
        model, metrics = fit_scorer(examples, ScorerHyperparameters(), seed=0)

        # Then
        self.assertGreaterEqual(metrics.accuracy, 0.95)
        self.assertLess(metrics.final_loss, metrics.initial_loss)
        self.assertEqual(len(metrics.loss_curve), ScorerHyperparameters().epochs)
        self.assertEqual(metrics.positives + metrics.negatives, len(examples))
        self.assertEqual(model.input_dim, len(FEATURE_NAMES))

    def test_should_give_lead_vehicle_the_highest_score(self):
        # Given
        model = train_scorer(self._fixture_examples(), ScorerHyperparameters(), seed=0)
        observation = slice_observation(lead_vehicle_scene(), 1.0)

        # When
        scores = score_and_select(observation, model, SelectionMode.ARGMAX, 1.0, seed=0)

        # Then
        self.assertEqual(scores.selected, 'lead')
        self.assertEqual(max(scores.scores, key=scores.scores.get), 'lead')

    def test_should_be_deterministic_for_a_seed(self):
        # Given
        examples = self._fixture_examples()[:30]
        hyperparameters = ScorerHyperparameters(epochs=50)

        # When
        first, _ = fit_scorer(examples, hyperparameters, seed=5)
        second, _ = fit_scorer(examples, hyperparameters, seed=5)

        # Then
        self.assertEqual(first, second)

    def test_should_raise_degenerate_corpus_error_when_empty(self):
        with self.assertRaises(DegenerateCorpusError):
            fit_scorer([], ScorerHyperparameters(), seed=0)

    def test_should_raise_degenerate_corpus_error_for_single_class(self):
        # Given
        corpus = [(_features(float(i)), InteractionLabel(agent_id=str(i), positive=True)) for i in range(5)]

        # When / Then
        with self.assertRaises(DegenerateCorpusError):
            fit_scorer(corpus, ScorerHyperparameters(), seed=0)


class TestSelectOpponent(TestCase):
    def test_should_break_argmax_ties_by_agent_id(self):
        # When
        selected = select_opponent({'b': 0.9, 'a': 0.9, 'c': 0.1}, SelectionMode.ARGMAX, 1.0,
                                   np.random.default_rng(0))

        # Then
        self.assertEqual(selected, 'a')

    def test_should_keep_argmax_choice_under_increasing_transform_of_scores(self):
        # Given
        rng = np.random.default_rng(12)
        transforms = (lambda s: 2.0 * s + 5.0, np.exp, lambda s: s ** 3, np.arctan)

        for _ in range(100):
            scores = {f"sv-{i}": float(score) for i, score in enumerate(rng.uniform(-3.0, 3.0, rng.integers(1, 8)))}
            expected = select_opponent(scores, SelectionMode.ARGMAX, 1.0, np.random.default_rng(0))

            for transform in transforms:
                # When
                transformed = {agent_id: float(transform(score)) for agent_id, score in scores.items()}

                # Then
                self.assertEqual(select_opponent(transformed, SelectionMode.ARGMAX, 1.0, np.random.default_rng(0)),
                                 expected)

    def test_should_sample_according_to_softmax(self):
        # Given
        scores = {'a': 0.1, 'b': 0.5, 'c': 0.9}
        temperature = 0.5
        rng = np.random.default_rng(11)
        draws = 20000

        # When
        counts = {agent_id: 0 for agent_id in scores}
        for _ in range(draws):
            counts[select_opponent(scores, SelectionMode.SAMPLE, temperature, rng)] += 1

        # Then
        weights = np.exp(np.array([scores[agent_id] for agent_id in sorted(scores)]) / temperature)
        expected = draws * weights / weights.sum()
        result = chisquare([counts[agent_id] for agent_id in sorted(scores)], expected)
        self.assertGreater(result.pvalue, 1e-3)

    def test_should_raise_no_opponent_error_without_scores(self):
        with self.assertRaises(NoOpponentError):
            select_opponent({}, SelectionMode.ARGMAX, 1.0, np.random.default_rng(0))

    def test_should_raise_value_error_for_non_positive_temperature(self):
        with self.assertRaises(ValueError):
            select_opponent({'a': 1.0}, SelectionMode.SAMPLE, 0.0, np.random.default_rng(0))


class TestScoreAndSelect(TestCase):
    def test_should_pick_nearest_vehicle_with_distance_scorer(self):
        # Given
        observation = slice_observation(lead_vehicle_scene(), 1.0)

        # When
        scores = score_and_select(observation, _nearest_vehicle_scorer(), SelectionMode.ARGMAX, 1.0, seed=0)

        # Then
        self.assertEqual(scores.selected, 'lead')
        self.assertEqual(set(scores.scores), {'lead', 'far', 'oncoming'})
        self.assertGreater(scores.scores['lead'], scores.scores['far'])

    def test_should_keep_selection_when_scorer_output_is_rescaled(self):
        # Given
        observation = slice_observation(fixture_corpus(5)[3], 1.0)
        scorer = _nearest_vehicle_scorer()
        steeper = scorer.model_copy(update={'output_weights': (3.0,), 'output_bias': 0.5})

        # When
        original = score_and_select(observation, scorer, SelectionMode.ARGMAX, 1.0, seed=0)
        rescaled = score_and_select(observation, steeper, SelectionMode.ARGMAX, 1.0, seed=0)

        # Then
        self.assertEqual(rescaled.selected, original.selected)
        order = sorted(original.scores, key=original.scores.get)
        self.assertEqual(sorted(rescaled.scores, key=rescaled.scores.get), order)

    def test_should_skip_vehicles_absent_at_current_time_or_with_single_state(self):
        # Given
        scenario = scene('eligibility', [
            constant_velocity_track(EGO_ID, 0.0, 0.0, 0.0, 10.0),
            constant_velocity_track('gone', 10.0, LANE_WIDTH, 0.0, 10.0, t_end=0.5),
            constant_velocity_track('new', 10.0, 0.0, 0.0, 10.0, t_start=1.0),
            constant_velocity_track('present', 60.0, LANE_WIDTH, 0.0, 10.0),
        ])

        # When
        scores = score_and_select(slice_observation(scenario, 1.0), _nearest_vehicle_scorer(), SelectionMode.ARGMAX,
                                  1.0, seed=0)

        # Then
        self.assertEqual(scores.scores.keys(), {'present'})
        self.assertEqual(scores.selected, 'present')

    def test_should_raise_no_opponent_error_when_nobody_is_eligible(self):
        # Given
        scenario = scene('alone', [constant_velocity_track(EGO_ID, 0.0, 0.0, 0.0, 10.0),
                                   constant_velocity_track('new', 10.0, 0.0, 0.0, 10.0, t_start=1.0)])

        # When / Then
        with self.assertRaises(NoOpponentError):
            score_and_select(slice_observation(scenario, 1.0), _nearest_vehicle_scorer(), SelectionMode.ARGMAX,
                             1.0, seed=0)
