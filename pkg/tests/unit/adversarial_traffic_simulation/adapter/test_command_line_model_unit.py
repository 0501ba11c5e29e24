import json
import tempfile
from pathlib import Path
from unittest import TestCase

from adversarial_traffic_simulation.adapter.command_line_model import CommandLineArguments, Command, log_level
from adversarial_traffic_simulation.configuration import SimulationMode, PlannerKind, OpponentPolicy
from adversarial_traffic_simulation.errors import ConfigurationError


class TestLogLevel(TestCase):
    def test_should_read_level_from_environment(self):
        self.assertEqual(log_level({'ADVSIM_LOG': 'debug'}), 'DEBUG')

    def test_should_fall_back_to_info_for_unknown_level(self):
        self.assertEqual(log_level({'ADVSIM_LOG': 'chatty'}), 'INFO')
        self.assertEqual(log_level({}), 'INFO')


class TestCommandLineArguments(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.config_file = Path(self.directory.name) / 'config.json'

    def tearDown(self):
        self.directory.cleanup()

    def _config(self, data) -> Path:
        self.config_file.write_text(json.dumps(data), encoding='utf-8')
        return self.config_file

    def test_should_use_defaults_without_flags_or_file(self):
        # When
        run = CommandLineArguments(command=Command.GENERATE).to_run_config()

        # Then
        self.assertEqual(run.sim.mode, SimulationMode.S1)
        self.assertEqual(run.sim.update_cycle, 1.0)
        self.assertEqual(run.sim.planner.kind, PlannerKind.IDM)
        self.assertEqual(run.jobs, 1)

    def test_should_let_flags_override_file_override_defaults(self):
        # Given
        config = self._config({'sim': {'seed': 3, 'n1': 4, 'predictor': {'reaction_sensitivity': 1.0}},
                               'jobs': 2})

        # When
        run = CommandLineArguments.model_validate({'command': 'generate', 'config': config, 'seed': 9,
                                                   'lambda': 5.0}).to_run_config()

        # Then
        self.assertEqual(run.sim.seed, 9)
        self.assertEqual(run.sim.n1, 4)
        self.assertEqual(run.sim.predictor.reaction_sensitivity, 5.0)
        self.assertEqual(run.jobs, 2)

    def test_should_replace_file_update_cycle_when_mode_flag_is_given(self):
        # Given
        config = self._config({'sim': {'mode': 's2', 'update_cycle': 2.0}})

        # When
        run = CommandLineArguments(command=Command.GENERATE, config=config, mode=SimulationMode.G).to_run_config()

        # Then
        self.assertEqual(run.sim.mode, SimulationMode.G)
        self.assertIsNone(run.sim.update_cycle)

    def test_should_accept_custom_update_cycle(self):
        # When
        run = CommandLineArguments(command=Command.GENERATE, mode=SimulationMode.CUSTOM,
                                   update_cycle=0.5).to_run_config()

        # Then
        self.assertEqual(run.sim.replan_interval_steps(0.1), 5)

    def test_should_replay_opponent_log_for_replay_command(self):
        # When
        run = CommandLineArguments(command=Command.REPLAY, planner=PlannerKind.REPLAY).to_run_config()

        # Then
        self.assertEqual(run.sim.opponent_policy, OpponentPolicy.REPLAY)
        self.assertEqual(run.sim.planner.kind, PlannerKind.REPLAY)

    def test_should_select_random_search_policy_from_flag(self):
        # When
        run = CommandLineArguments(command=Command.GENERATE, policy=OpponentPolicy.RANDOM_SEARCH).to_run_config()

        # Then
        self.assertEqual(run.sim.opponent_policy, OpponentPolicy.RANDOM_SEARCH)
        self.assertEqual(run.sim.search.samples, 64)

    def test_should_raise_configuration_error_for_config_file_that_is_not_utf8(self):
        # Given
        self.config_file.write_bytes(b'{"sim": "\xff"}')

        # When / Then
        with self.assertRaises(ConfigurationError):
            CommandLineArguments(command=Command.GENERATE, config=self.config_file).to_run_config()

    def test_should_raise_configuration_error_for_missing_config_file(self):
        with self.assertRaises(ConfigurationError):
            CommandLineArguments(command=Command.GENERATE, config=self.config_file).to_run_config()

    def test_should_raise_configuration_error_for_invalid_json(self):
        # Given
        self.config_file.write_text('{sim', encoding='utf-8')

        # When / Then
        with self.assertRaises(ConfigurationError):
            CommandLineArguments(command=Command.GENERATE, config=self.config_file).to_run_config()

    def test_should_raise_configuration_error_for_out_of_range_value(self):
        with self.assertRaises(ConfigurationError):
            CommandLineArguments(command=Command.GENERATE, n1=0).to_run_config()

    def test_should_raise_configuration_error_for_inconsistent_mode_and_cycle(self):
        with self.assertRaises(ConfigurationError):
            CommandLineArguments(command=Command.GENERATE, mode=SimulationMode.S4, update_cycle=1.0).to_run_config()
