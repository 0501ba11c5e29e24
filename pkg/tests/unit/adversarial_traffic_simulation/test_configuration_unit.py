from unittest import TestCase

from adversarial_traffic_simulation.configuration import SimConfig, SimulationMode, HistogramSpec, PredictorConfig
from adversarial_traffic_simulation.errors import ConfigurationError


class TestSimConfig(TestCase):
    def test_should_derive_update_cycle_from_mode(self):
        self.assertEqual(SimConfig(mode=SimulationMode.S1).update_cycle, 1.0)
        self.assertEqual(SimConfig(mode=SimulationMode.S2).update_cycle, 2.0)
        self.assertEqual(SimConfig(mode=SimulationMode.S4).update_cycle, 4.0)
        self.assertIsNone(SimConfig(mode=SimulationMode.G).update_cycle)

    def test_should_raise_configuration_error_when_cycle_contradicts_mode(self):
        with self.assertRaises(ConfigurationError):
            SimConfig(mode=SimulationMode.S1, update_cycle=2.0)

    def test_should_raise_configuration_error_when_plan_once_mode_has_finite_cycle(self):
        with self.assertRaises(ConfigurationError):
            SimConfig(mode=SimulationMode.G, update_cycle=1.0)

    def test_should_accept_infinite_cycle_for_plan_once_mode(self):
        self.assertIsNone(SimConfig(mode=SimulationMode.G, update_cycle=float('inf')).update_cycle)

    def test_should_raise_configuration_error_when_custom_mode_has_no_cycle(self):
        with self.assertRaises(ConfigurationError):
            SimConfig(mode=SimulationMode.CUSTOM)

    def test_should_accept_mode_given_as_string(self):
        # Given / When
        config = SimConfig.model_validate({'mode': 's4'})

        # Then
        self.assertEqual(config.mode, SimulationMode.S4)
        self.assertEqual(config.update_cycle, 4.0)

    def test_should_convert_update_cycle_into_steps(self):
        # Given
        config = SimConfig(mode=SimulationMode.CUSTOM, update_cycle=0.5)

        # When / Then
        self.assertEqual(config.replan_interval_steps(0.1), 5)
        self.assertEqual(SimConfig(mode=SimulationMode.CUSTOM, update_cycle=0.01).replan_interval_steps(0.1), 1)
        self.assertIsNone(SimConfig(mode=SimulationMode.G).replan_interval_steps(0.1))

    def test_should_use_documented_defaults(self):
        # Given / When
        config = SimConfig()

        # Then
        self.assertEqual(config.n1, 6)
        self.assertEqual(config.n2, 6)
        self.assertEqual(config.predictor.reaction_sensitivity, 2.0)
        self.assertEqual(config.temperature, 0.1)


class TestPredictorConfig(TestCase):
    def test_should_copy_with_other_hypothesis_count(self):
        # Given
        config = PredictorConfig(reaction_sensitivity=5.0)

        # When
        copy = config.with_hypotheses(3)

        # Then
        self.assertEqual(copy.n_hypotheses, 3)
        self.assertEqual(copy.reaction_sensitivity, 5.0)
        self.assertEqual(config.n_hypotheses, 6)


class TestHistogramSpec(TestCase):
    def test_should_raise_configuration_error_when_range_is_empty(self):
        with self.assertRaises(ConfigurationError):
            HistogramSpec(lower=1.0, upper=1.0)
