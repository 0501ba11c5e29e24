"""
Kinematic bicycle rollouts for the random search baseline.

The state is the centre of gravity with body heading theta and slip angle beta = atan(lr * tan(delta) / L). Controls
are piecewise constant: the plan is cut into control_points equal segments, each with its own acceleration and steering
angle. Speed never drops below zero.
"""
from typing import NamedTuple

import numpy as np

from adversarial_traffic_simulation.configuration import RandomSearchConfig
from adversarial_traffic_simulation.model import Pose, TrajectoryHypothesis, grid_time

RANDOM_SEARCH = 'random_search'


class BicycleControls(NamedTuple):
    accelerations: np.ndarray
    """(samples, control_points) m/s^2"""
    steering: np.ndarray
    """(samples, control_points) rad"""


class BicycleRollout(NamedTuple):
    times: np.ndarray
    """(steps,) grid times after each step"""
    positions: np.ndarray
    """(samples, steps, 2)"""
    headings: np.ndarray
    """(samples, steps)"""
    speeds: np.ndarray
    """(samples, steps)"""

    def hypothesis(self, index: int, agent_id: str) -> TrajectoryHypothesis:
        poses = tuple(
            Pose(t=float(t), x=float(position[0]), y=float(position[1]), heading=float(heading), speed=float(speed))
            for t, position, heading, speed in zip(self.times, self.positions[index], self.headings[index],
                                                   self.speeds[index])
        )
        return TrajectoryHypothesis(poses=poses, probability=1.0 / len(self.positions), agent_id=agent_id,
                                    label=RANDOM_SEARCH)


def sample_controls(config: RandomSearchConfig, rng: np.random.Generator) -> BicycleControls:
    shape = (config.samples, config.control_points)

    return BicycleControls(accelerations=rng.uniform(-config.max_decel, config.max_accel, size=shape),
                           steering=rng.uniform(-config.max_steering, config.max_steering, size=shape))


def rollout(start: Pose, controls: BicycleControls, dt: float, steps: int,
            config: RandomSearchConfig) -> BicycleRollout:
    samples, control_points = controls.accelerations.shape
    wheelbase = config.wheelbase
    rear = config.rear_axle_ratio * wheelbase

    x = np.full(samples, start.x)
    y = np.full(samples, start.y)
    theta = np.full(samples, start.heading)
    speed = np.full(samples, start.speed)

    positions = np.empty((samples, steps, 2))
    headings = np.empty((samples, steps))
    speeds = np.empty((samples, steps))

    segments = np.minimum(np.arange(steps) * control_points // steps, control_points - 1)

    for k, segment in enumerate(segments):
        acceleration = controls.accelerations[:, segment]
        delta = controls.steering[:, segment]
        beta = np.arctan(rear * np.tan(delta) / wheelbase)

        x = x + speed * np.cos(theta + beta) * dt
        y = y + speed * np.sin(theta + beta) * dt
        theta = theta + speed * np.cos(beta) * np.tan(delta) / wheelbase * dt
        speed = np.maximum(0.0, speed + acceleration * dt)

        positions[:, k, 0] = x
        positions[:, k, 1] = y
        headings[:, k] = theta
        speeds[:, k] = speed

    first = round(start.t / dt)
    times = np.array([grid_time(first + k, dt) for k in range(1, steps + 1)])

    return BicycleRollout(times=times, positions=positions, headings=headings, speeds=speeds)
