import tempfile
from pathlib import Path
from unittest import TestCase
from unittest.mock import Mock

from aws_lambda_powertools import Logger

from adversarial_traffic_simulation.adapter.svg_plotter import SvgPlotter
from adversarial_traffic_simulation.model import EpisodeResult, EpisodeStatus, TerminationReason, CollisionReport
from adversarial_traffic_simulation.synthetic import lead_vehicle_scene, EGO_ID


class TestSvgPlotter(TestCase):
    def test_should_write_same_svg_for_same_episode(self):
        # Given
        log = lead_vehicle_scene()
        ego = log.ego.with_states(log.ego.between(1.0, 2.5))
        result = EpisodeResult(scenario_id=log.scenario_id, status=EpisodeStatus.COMPLETED,
                               termination=TerminationReason.COLLISION, seed=0, start_time=1.0, opponent_id='lead',
                               collision=CollisionReport(occurred=True, time=2.5, relative_speed=1.0, agent_id='lead',
                                                         with_opponent=True),
                               ego_track=ego, opponent_track=log.track('lead').with_states(
                                   log.track('lead').between(1.0, 2.5)))
        plotter = SvgPlotter(Mock(spec=Logger))

        with tempfile.TemporaryDirectory() as directory:
            first = Path(directory) / 'plots' / 'first.svg'
            second = Path(directory) / 'plots' / 'second.svg'

            # When
            plotter.plot_episode(result, log, first)
            plotter.plot_episode(result, log, second)

            # Then
            content = first.read_text(encoding='utf-8')
            self.assertTrue(content.lstrip().startswith('<?xml'))
            self.assertIn('<svg', content)
            self.assertEqual(content, second.read_text(encoding='utf-8'))
        self.assertEqual(result.ego_track.agent_id, EGO_ID)
