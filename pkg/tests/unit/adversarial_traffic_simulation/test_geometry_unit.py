import math
from unittest import TestCase

import numpy as np

from adversarial_traffic_simulation.errors import GridMismatchError, DegeneratePolylineError
from adversarial_traffic_simulation.geometry import boxes_overlap, boxes_intersect, box_corners, \
    trajectory_collision, align_times, point_to_polyline_distance, points_to_polyline_distances, \
    project_onto_polyline, interpolate_polyline, heading_difference
from adversarial_traffic_simulation.model import OrientedBox, Pose, TrajectoryHypothesis

SAMPLING = 1e-3
TOLERANCE_BAND = 2e-3


def _inside(points: np.ndarray, center, heading: float, length: float, width: float) -> np.ndarray:
    offset = points - np.asarray(center)
    forward = offset @ np.array([math.cos(heading), math.sin(heading)])
    left = offset @ np.array([-math.sin(heading), math.cos(heading)])
    return (np.abs(forward) <= length / 2) & (np.abs(left) <= width / 2)


def _boundary(center, heading: float, length: float, width: float) -> np.ndarray:
    corners = box_corners(center, heading, length, width)
    samples = []
    for start, end in zip(corners, np.roll(corners, -1, axis=0)):
        count = int(math.ceil(np.linalg.norm(end - start) / SAMPLING)) + 1
        samples.append(np.linspace(start, end, count))
    return np.concatenate(samples)


def _sampled_overlap(a: tuple, b: tuple) -> bool:
    """Two convex boxes intersect iff a boundary point of one lies in the other."""
    return bool(np.any(_inside(_boundary(*a), *b)) or np.any(_inside(_boundary(*b), *a)))


def _margin(a: tuple, b: tuple) -> float:
    """Smallest projection overlap over the edge normals; positive is penetration, negative a lower clearance bound."""
    margins = []
    for heading in (a[1], a[1] + math.pi / 2, b[1], b[1] + math.pi / 2):
        axis = np.array([math.cos(heading), math.sin(heading)])
        radii = 0.0
        for _, box_heading, length, width in (a, b):
            radii += length / 2 * abs(math.cos(box_heading - heading)) + width / 2 * abs(math.sin(box_heading - heading))
        margins.append(radii - abs(float((np.asarray(b[0]) - np.asarray(a[0])) @ axis)))
    return min(margins)


def _box(center, heading: float, length: float, width: float) -> OrientedBox:
    return OrientedBox(center=center, heading=heading, length=length, width=width)


def _moved(box: tuple, angle: float, shift) -> tuple:
    (x, y), heading, length, width = box
    c, s = math.cos(angle), math.sin(angle)
    return (c * x - s * y + shift[0], s * x + c * y + shift[1]), heading + angle, length, width


def _hypothesis(poses) -> TrajectoryHypothesis:
    return TrajectoryHypothesis(poses=tuple(poses), probability=1.0)


def _straight(x0: float, heading: float, speed: float, times) -> TrajectoryHypothesis:
    return _hypothesis(Pose(t=t, x=x0 + speed * math.cos(heading) * t, y=0.0, heading=heading, speed=speed)
                       for t in times)


class TestBoxesOverlap(TestCase):
    def test_should_agree_with_dense_sampling_on_random_boxes(self):
        # Given
        rng = np.random.default_rng(7)
        pairs = []
        for _ in range(10000):
            a = (tuple(rng.uniform(-1.0, 1.0, 2)), float(rng.uniform(-math.pi, math.pi)),
                 float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.3, 2.0)))
            b = (tuple(rng.uniform(-3.5, 3.5, 2)), float(rng.uniform(-math.pi, math.pi)),
                 float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.3, 2.0)))
            pairs.append((a, b))

        # When
        single = [boxes_intersect(OrientedBox(center=a[0], heading=a[1], length=a[2], width=a[3]),
                                  OrientedBox(center=b[0], heading=b[1], length=b[2], width=b[3]))
                  for a, b in pairs]

        # Then
        checked = 0
        for (a, b), result in zip(pairs, single):
            if abs(_margin(a, b)) <= TOLERANCE_BAND:
                continue
            checked += 1
            self.assertEqual(result, _sampled_overlap(a, b), f"{a} vs {b}")
        self.assertGreater(checked, 9900)

    def test_should_count_touching_boxes_as_overlapping(self):
        # Given
        a = OrientedBox(center=(0.0, 0.0), heading=0.0, length=4.8, width=2.0)
        b = OrientedBox(center=(4.8, 0.0), heading=0.0, length=4.8, width=2.0)

        # When / Then
        self.assertTrue(boxes_intersect(a, b))

    def test_should_separate_boxes_with_gap(self):
        # Given
        a = OrientedBox(center=(0.0, 0.0), heading=0.0, length=4.8, width=2.0)
        b = OrientedBox(center=(0.0, 2.01), heading=0.0, length=4.8, width=2.0)

        # When / Then
        self.assertFalse(boxes_intersect(a, b))

    def test_should_detect_rotated_corner_overlap(self):
        # Given
        a = OrientedBox(center=(0.0, 0.0), heading=0.0, length=2.0, width=2.0)
        corner_in = OrientedBox(center=(1.0 + math.sqrt(2) - 0.1, 0.0), heading=math.pi / 4, length=2.0, width=2.0)
        corner_out = OrientedBox(center=(1.0 + math.sqrt(2) + 0.1, 0.0), heading=math.pi / 4, length=2.0, width=2.0)

        # When / Then
        self.assertTrue(boxes_intersect(a, corner_in))
        self.assertFalse(boxes_intersect(a, corner_out))

    def test_should_broadcast_pairwise(self):
        # Given
        centers_a = np.array([[0.0, 0.0], [100.0, 0.0]])
        centers_b = np.array([[1.0, 0.0], [50.0, 0.0], [99.0, 0.0]])

        # When
        overlap = boxes_overlap(centers_a[:, None], np.zeros((2, 1)), (4.0, 2.0),
                                centers_b[None, :], np.zeros((1, 3)), (4.0, 2.0))

        # Then
        self.assertEqual(overlap.tolist(), [[True, False, False], [False, False, True]])

    def test_should_be_symmetric_and_invariant_under_rigid_motion(self):
        # Given
        rng = np.random.default_rng(11)
        checked = 0

        for _ in range(2000):
            a = (tuple(rng.uniform(-1.0, 1.0, 2)), float(rng.uniform(-math.pi, math.pi)),
                 float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.3, 2.0)))
            b = (tuple(rng.uniform(-3.5, 3.5, 2)), float(rng.uniform(-math.pi, math.pi)),
                 float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.3, 2.0)))
            if abs(_margin(a, b)) <= 1e-6:
                continue
            angle = float(rng.uniform(-math.pi, math.pi))
            shift = rng.uniform(-1000.0, 1000.0, 2)

            # When
            expected = boxes_intersect(_box(*a), _box(*b))

            # Then
            self.assertEqual(boxes_intersect(_box(*b), _box(*a)), expected)
            self.assertEqual(boxes_intersect(_box(*_moved(a, angle, shift)), _box(*_moved(b, angle, shift))),
                             expected)
            checked += 1

        self.assertGreater(checked, 1900)


class TestTrajectoryCollision(TestCase):
    def test_should_report_first_overlapping_timestamp_and_relative_speed(self):
        # Given
        times = [round(0.1 * k, 9) for k in range(1, 51)]
        ego = _straight(0.0, 0.0, 10.0, times)
        oncoming = _straight(50.0, math.pi, 10.0, times)

        # When
        report = trajectory_collision(ego, oncoming, (4.8, 2.0), (4.8, 2.0))

        # Then: centres 50 - 20 t apart, contact once the gap is at most 4.8 m
        self.assertTrue(report.occurred)
        self.assertAlmostEqual(report.time, 2.3, delta=1e-9)
        self.assertAlmostEqual(report.relative_speed, 20.0, delta=1e-9)

    def test_should_report_right_angle_crossing_at_meeting_time(self):
        # Given
        times = [round(0.1 * k, 9) for k in range(1, 51)]
        eastbound = _hypothesis(Pose(t=t, x=5.0 * (t - 3.0), y=0.0, heading=0.0, speed=5.0) for t in times)
        northbound = _hypothesis(Pose(t=t, x=0.0, y=5.0 * (t - 3.0), heading=math.pi / 2, speed=5.0) for t in times)

        # When
        report = trajectory_collision(eastbound, northbound, (0.4, 0.4), (0.4, 0.4))

        # Then
        self.assertTrue(report.occurred)
        self.assertAlmostEqual(report.time, 3.0, delta=1e-9)
        self.assertAlmostEqual(report.relative_speed, math.sqrt(50.0), delta=1e-9)

    def test_should_report_no_collision_for_parallel_lanes(self):
        # Given
        times = [round(0.1 * k, 9) for k in range(1, 21)]
        ego = _straight(0.0, 0.0, 10.0, times)
        neighbour = _hypothesis(Pose(t=t, x=10.0 * t, y=3.5, heading=0.0, speed=10.0) for t in times)

        # When
        report = trajectory_collision(ego, neighbour, (4.8, 2.0), (4.8, 2.0))

        # Then
        self.assertFalse(report.occurred)
        self.assertIsNone(report.time)

    def test_should_compare_common_time_range_only(self):
        # Given
        ego = _straight(0.0, 0.0, 0.0, [0.1, 0.2, 0.3])
        late = _straight(0.0, 0.0, 0.0, [0.3, 0.4])

        # When
        report = trajectory_collision(ego, late, (4.8, 2.0), (4.8, 2.0))

        # Then
        self.assertEqual(report.time, 0.3)

    def test_should_raise_grid_mismatch_error_when_grids_differ(self):
        # Given
        ego = _straight(0.0, 0.0, 1.0, [0.1, 0.2, 0.3])
        shifted = _straight(0.0, 0.0, 1.0, [0.15, 0.25])

        # When / Then
        with self.assertRaises(GridMismatchError):
            trajectory_collision(ego, shifted, (4.8, 2.0), (4.8, 2.0))

    def test_should_raise_grid_mismatch_error_without_common_range(self):
        with self.assertRaises(GridMismatchError):
            align_times(np.array([0.1, 0.2]), np.array([0.5, 0.6]))


class TestPolylines(TestCase):
    def test_should_measure_distance_to_nearest_segment(self):
        # Given
        line = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]

        # When / Then
        self.assertAlmostEqual(point_to_polyline_distance((5.0, 3.0), line), 3.0, delta=1e-12)
        self.assertAlmostEqual(point_to_polyline_distance((12.0, 5.0), line), 2.0, delta=1e-12)
        self.assertAlmostEqual(point_to_polyline_distance((-3.0, -4.0), line), 5.0, delta=1e-12)

    def test_should_tolerate_zero_length_segments(self):
        # Given
        line = [(0.0, 0.0), (0.0, 0.0), (10.0, 0.0)]

        # When
        distances = points_to_polyline_distances([(5.0, 1.0), (-1.0, 0.0)], line)

        # Then
        self.assertAlmostEqual(distances[0], 1.0, delta=1e-12)
        self.assertAlmostEqual(distances[1], 1.0, delta=1e-12)

    def test_should_project_with_signed_lateral_offset(self):
        # Given
        line = [(0.0, 0.0), (10.0, 0.0)]

        # When
        left = project_onto_polyline((4.0, 2.0), line)
        right = project_onto_polyline((4.0, -2.0), line)

        # Then
        self.assertAlmostEqual(left.arc_length, 4.0, delta=1e-12)
        self.assertAlmostEqual(left.lateral, 2.0, delta=1e-12)
        self.assertAlmostEqual(right.lateral, -2.0, delta=1e-12)
        self.assertAlmostEqual(left.heading, 0.0, delta=1e-12)

    def test_should_raise_degenerate_polyline_error_when_projecting_onto_point(self):
        with self.assertRaises(DegeneratePolylineError):
            project_onto_polyline((0.0, 0.0), [(1.0, 1.0)])

    def test_should_interpolate_and_extend_beyond_end(self):
        # Given
        line = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]

        # When
        inner, inner_heading = interpolate_polyline(line, 15.0)
        beyond, _ = interpolate_polyline(line, 25.0)

        # Then
        self.assertTrue(np.allclose(inner, [10.0, 5.0]))
        self.assertAlmostEqual(inner_heading, math.pi / 2, delta=1e-12)
        self.assertTrue(np.allclose(beyond, [10.0, 15.0]))

    def test_should_wrap_heading_difference(self):
        self.assertAlmostEqual(float(heading_difference(math.pi - 0.1, -math.pi + 0.1)), -0.2, delta=1e-12)
        self.assertAlmostEqual(float(heading_difference(0.3, 0.1)), 0.2, delta=1e-12)
