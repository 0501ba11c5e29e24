from pathlib import Path

import matplotlib
import numpy as np
from aws_lambda_powertools import Logger
from matplotlib.figure import Figure

from adversarial_traffic_simulation.metrics import logged_counterpart
from adversarial_traffic_simulation.model import EpisodeResult, Scenario

PLOT_MARGIN = 15.0
HASH_SALT = 'advsim'


class SvgPlotter:
    """Overhead view of one episode: lanes, logged and simulated ego and opponent paths, the collision point."""

    def __init__(self, logger: Logger):
        self.logger = logger

    def plot_episode(self, result: EpisodeResult, scenario: Scenario, path: Path):
        figure = Figure(figsize=(10, 4))
        axes = figure.add_subplot()

        paths = []
        logged_ego = scenario.ego.between(result.start_time, scenario.ego.last.t)
        if logged_ego:
            paths.append(('logged ego', np.array([[pose.x, pose.y] for pose in logged_ego]), 'tab:blue', '--'))
        if result.ego_track is not None:
            paths.append(('simulated ego', result.ego_track.positions, 'tab:blue', '-'))

        logged_opponent = logged_counterpart(result, scenario)
        if logged_opponent is not None:
            paths.append((f"logged opponent {result.opponent_id}", logged_opponent.positions, 'tab:red', '--'))
        if result.opponent_track is not None:
            paths.append((f"simulated opponent {result.opponent_id}", result.opponent_track.positions, 'tab:red', '-'))

        for lane in scenario.map.lane_arrays:
            axes.plot(lane[:, 0], lane[:, 1], color='lightgray', linewidth=0.8, zorder=0)

        for label, points, color, style in paths:
            axes.plot(points[:, 0], points[:, 1], color=color, linestyle=style, label=label)

        if result.collision.occurred and result.ego_track is not None:
            contact = result.ego_track.last
            axes.scatter([contact.x], [contact.y], marker='x', color='black', s=60, zorder=3, label='collision')

        if paths:
            points = np.concatenate([points for _, points, _, _ in paths])
            axes.set_xlim(points[:, 0].min() - PLOT_MARGIN, points[:, 0].max() + PLOT_MARGIN)
            axes.set_ylim(points[:, 1].min() - PLOT_MARGIN, points[:, 1].max() + PLOT_MARGIN)

        axes.set_aspect('equal', adjustable='datalim')
        axes.set_xlabel('x [m]')
        axes.set_ylabel('y [m]')
        axes.set_title(f"{result.scenario_id}: {result.termination.value}")
        axes.legend(loc='upper left', fontsize='small')

        path.parent.mkdir(parents=True, exist_ok=True)
        with matplotlib.rc_context({'svg.hashsalt': HASH_SALT}):
            figure.savefig(path, format='svg', metadata={'Date': None})

        self.logger.debug(f"plot written to {path}")
