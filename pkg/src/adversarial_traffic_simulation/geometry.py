"""
Planar geometry shared by label generation, prediction, the collision judgment and the trajectory metrics.

Boxes are tested with the separating axis theorem over the four edge normals of two rectangles. Touching boundaries
count as overlap. Collisions are only checked at grid timestamps.
"""
import math
from typing import NamedTuple

import numpy as np

from adversarial_traffic_simulation.errors import GridMismatchError, DegeneratePolylineError
from adversarial_traffic_simulation.model import OrientedBox, CollisionReport, TrajectoryHypothesis, GRID_TOLERANCE

Extent = tuple[float, float]


def box_corners(center, heading: float, length: float, width: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    rotation = np.array([[c, -s], [s, c]])
    half_size = np.array([[length / 2, width / 2],
                          [length / 2, -width / 2],
                          [-length / 2, -width / 2],
                          [-length / 2, width / 2]])

    return (rotation @ half_size.T).T + np.asarray(center, dtype=float)


def boxes_overlap(centers_a, headings_a, extent_a: Extent, centers_b, headings_b, extent_b: Extent) -> np.ndarray:
    """
    Vectorised separating axis test. Centers have shape (..., 2), headings (...); both sides broadcast against each
    other, so pairwise tests over two sequences can use centers_a[:, None] against centers_b[None, :].
    """
    centers_a = np.asarray(centers_a, dtype=float)
    centers_b = np.asarray(centers_b, dtype=float)
    headings_a = np.asarray(headings_a, dtype=float)
    headings_b = np.asarray(headings_b, dtype=float)

    half_length_a, half_width_a = extent_a[0] / 2, extent_a[1] / 2
    half_length_b, half_width_b = extent_b[0] / 2, extent_b[1] / 2

    forward_a = np.stack([np.cos(headings_a), np.sin(headings_a)], axis=-1)
    left_a = np.stack([-np.sin(headings_a), np.cos(headings_a)], axis=-1)
    forward_b = np.stack([np.cos(headings_b), np.sin(headings_b)], axis=-1)
    left_b = np.stack([-np.sin(headings_b), np.cos(headings_b)], axis=-1)

    offset = centers_b - centers_a
    overlap = np.ones(np.broadcast_shapes(offset.shape[:-1], forward_a.shape[:-1], forward_b.shape[:-1]), dtype=bool)

    for axis in (forward_a, left_a, forward_b, left_b):
        distance = np.abs(np.sum(offset * axis, axis=-1))
        radius_a = half_length_a * np.abs(np.sum(forward_a * axis, axis=-1)) \
            + half_width_a * np.abs(np.sum(left_a * axis, axis=-1))
        radius_b = half_length_b * np.abs(np.sum(forward_b * axis, axis=-1)) \
            + half_width_b * np.abs(np.sum(left_b * axis, axis=-1))
        overlap &= distance <= radius_a + radius_b

    return overlap


def boxes_intersect(a: OrientedBox, b: OrientedBox) -> bool:
    return bool(boxes_overlap(a.center, a.heading, (a.length, a.width), b.center, b.heading, (b.length, b.width)))


def align_times(times_a: np.ndarray, times_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index masks selecting the common time range of two sequences; raises if the grids disagree inside it."""
    start = max(times_a[0], times_b[0])
    end = min(times_a[-1], times_b[-1])

    if end < start - GRID_TOLERANCE:
        raise GridMismatchError(f"no common time range: [{times_a[0]}, {times_a[-1]}] vs [{times_b[0]}, {times_b[-1]}]")

    mask_a = (times_a >= start - GRID_TOLERANCE) & (times_a <= end + GRID_TOLERANCE)
    mask_b = (times_b >= start - GRID_TOLERANCE) & (times_b <= end + GRID_TOLERANCE)

    if mask_a.sum() != mask_b.sum() or not np.allclose(times_a[mask_a], times_b[mask_b], rtol=0, atol=GRID_TOLERANCE):
        raise GridMismatchError(f"time grids differ within the common range [{start}, {end}]")

    return mask_a, mask_b


def overlap_mask(times_a, positions_a, headings_a, extent_a: Extent,
                 times_b, positions_b, headings_b, extent_b: Extent) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    :return: common timestamps, overlap flag per common timestamp, and the matching indices into a and b
    """
    mask_a, mask_b = align_times(np.asarray(times_a), np.asarray(times_b))
    index_a = np.flatnonzero(mask_a)
    index_b = np.flatnonzero(mask_b)

    overlap = boxes_overlap(np.asarray(positions_a)[index_a], np.asarray(headings_a)[index_a], extent_a,
                            np.asarray(positions_b)[index_b], np.asarray(headings_b)[index_b], extent_b)

    return np.asarray(times_a)[index_a], overlap, np.stack([index_a, index_b], axis=-1)


def trajectory_collision(y_a: TrajectoryHypothesis, y_b: TrajectoryHypothesis, box_a: Extent,
                         box_b: Extent) -> CollisionReport:
    times, overlap, indices = overlap_mask(y_a.times, y_a.positions, y_a.headings, box_a,
                                           y_b.times, y_b.positions, y_b.headings, box_b)

    if not overlap.any():
        return CollisionReport.none()

    first = int(np.argmax(overlap))
    pose_a = y_a.poses[indices[first, 0]]
    pose_b = y_b.poses[indices[first, 1]]

    return CollisionReport(occurred=True, time=float(times[first]),
                           relative_speed=float(np.linalg.norm(pose_a.velocity - pose_b.velocity)))


def points_to_polyline_distances(points, line) -> np.ndarray:
    """Exact Euclidean distance from every point to the nearest segment; zero-length segments act as points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    line = np.atleast_2d(np.asarray(line, dtype=float))

    if len(line) == 1:
        return np.linalg.norm(points - line[0], axis=-1)

    start = line[:-1]
    segment = line[1:] - start
    squared_length = np.sum(segment * segment, axis=-1)

    relative = points[:, None, :] - start[None, :, :]
    projection = np.sum(relative * segment[None, :, :], axis=-1)
    fraction = np.divide(projection, squared_length, out=np.zeros_like(projection), where=squared_length > 0)
    fraction = np.clip(fraction, 0.0, 1.0)

    closest = start[None, :, :] + fraction[..., None] * segment[None, :, :]

    return np.min(np.linalg.norm(points[:, None, :] - closest, axis=-1), axis=1)


def point_to_polyline_distance(point, line) -> float:
    return float(points_to_polyline_distances(np.asarray(point, dtype=float)[None, :], line)[0])


class PolylineProjection(NamedTuple):
    arc_length: float
    """distance along the polyline to the foot point"""
    lateral: float
    """signed offset, positive to the left of the polyline direction"""
    distance: float
    heading: float
    """tangent heading at the foot point"""


def arc_lengths(line) -> np.ndarray:
    line = np.asarray(line, dtype=float)
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(line, axis=0), axis=-1))])


def project_onto_polyline(point, line) -> PolylineProjection:
    line = np.asarray(line, dtype=float)
    point = np.asarray(point, dtype=float)

    if len(line) < 2:
        raise DegeneratePolylineError("projection needs a polyline with at least 2 points")

    start = line[:-1]
    segment = line[1:] - start
    squared_length = np.sum(segment * segment, axis=-1)
    projection = np.sum((point - start) * segment, axis=-1)
    fraction = np.clip(np.divide(projection, squared_length, out=np.zeros_like(projection),
                                 where=squared_length > 0), 0.0, 1.0)
    closest = start + fraction[:, None] * segment
    distances = np.linalg.norm(point - closest, axis=-1)

    index = int(np.argmin(distances))
    direction = segment[index]
    cross = direction[0] * (point[1] - closest[index, 1]) - direction[1] * (point[0] - closest[index, 0])
    sign = 1.0 if cross >= 0 else -1.0

    return PolylineProjection(
        arc_length=float(arc_lengths(line)[index] + fraction[index] * math.sqrt(squared_length[index])),
        lateral=sign * float(distances[index]),
        distance=float(distances[index]),
        heading=math.atan2(direction[1], direction[0]),
    )


def interpolate_polyline(line, arc_length: float) -> tuple[np.ndarray, float]:
    """Point and tangent heading at the given arc length; the last segment is extended beyond the end."""
    line = np.asarray(line, dtype=float)
    lengths = arc_lengths(line)
    index = int(np.clip(np.searchsorted(lengths, arc_length, side='right') - 1, 0, len(line) - 2))

    direction = line[index + 1] - line[index]
    segment_length = lengths[index + 1] - lengths[index]
    heading = math.atan2(direction[1], direction[0])

    if segment_length <= 0:
        return line[index].copy(), heading

    return line[index] + direction * (arc_length - lengths[index]) / segment_length, heading


def heading_difference(a, b):
    """Signed difference a - b wrapped to [-pi, pi)."""
    return (np.asarray(a) - np.asarray(b) + np.pi) % (2 * np.pi) - np.pi
