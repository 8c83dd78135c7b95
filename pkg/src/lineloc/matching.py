"""Associate projected 3D map lines with detected 2D lines.

A 3D map segment is projected at the prior pose and compared with every
detected line through three similarity scores: mean sampled point-to-line
distance, acute angle, and along-line overlap. Pairs that satisfy all
three thresholds compete greedily by ascending mean distance, so each map
line and each detected line appears in at most one correspondence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DegenerateSegmentError
from .geometry import CameraIntrinsics, Line2D, LineSegment3D, Pose, line_from_endpoints, project


@dataclass(frozen=True)
class MatchThresholds:
    """Acceptance thresholds for candidate line pairs.

    All defaults are tuned for a mildly perturbed prior pose: mean
    distance 10 px, angle 5 degrees, overlap 0.5, 10 sample points.
    Projected segments shorter than ``min_projected_px`` are discarded
    before scoring because sub-pixel segments make the overlap ratio
    unstable.
    """

    mean_distance_max: float = 10.0
    angle_max: float = math.radians(5.0)
    overlap_min: float = 0.5
    sample_count: int = 10
    min_projected_px: float = 5.0

    def __post_init__(self):
        if self.mean_distance_max <= 0 or self.angle_max <= 0:
            raise ValueError("distance and angle thresholds must be positive")
        if not 0.0 < self.overlap_min <= 1.0:
            raise ValueError("overlap_min must be in (0, 1]")
        if self.sample_count < 2:
            raise ValueError("sample_count must be at least 2")


@dataclass(frozen=True, eq=False)
class Correspondence:
    """A matched (3D map segment, detected 2D line) pair."""

    map_line_id: int
    detected_line: Line2D
    projected_line: Line2D
    map_segment: LineSegment3D
    distance: float  # mean sampled distance, px
    angle: float  # rad, in [0, pi/2]
    overlap: float  # fraction in [0, 1]
    detected_index: int = -1

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError("distance must be non-negative")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError("overlap must be in [0, 1]")
        if not 0.0 <= self.angle <= math.pi / 2 + 1e-12:
            raise ValueError("angle must be in [0, pi/2]")


def sampled_distance(source: Line2D, target: Line2D, n: int) -> float:
    """Sum of distances from ``n`` evenly spaced source-segment points to ``target``.

    The samples include both endpoints of the source segment.
    """
    if n < 2:
        raise ValueError("need at least two sample points")
    ts = np.linspace(0.0, 1.0, n)
    pts = source.p_start + ts[:, None] * (source.p_end - source.p_start)
    return float(np.sum(np.abs(pts @ target.normal + target.c)))


def angle_between(l1: Line2D, l2: Line2D) -> float:
    """Acute angle between two lines, in [0, pi/2]."""
    dot = abs(float(np.dot(l1.direction, l2.direction)))
    return math.acos(min(dot, 1.0))


def overlap_ratio(projected: Line2D, detected: Line2D) -> float:
    """Fraction of the projected segment covered by the detected segment.

    The detected endpoints are projected orthogonally onto the projected
    line; the overlap is the intersection of that interval with the
    projected segment's own interval, normalized by the projected length
    and clamped to [0, 1].
    """
    axis = projected.p_end - projected.p_start
    length = float(np.linalg.norm(axis))
    axis = axis / length
    s = (np.vstack([detected.p_start, detected.p_end]) - projected.p_start) @ axis
    lo, hi = float(min(s)), float(max(s))
    intersection = min(hi, length) - max(lo, 0.0)
    return float(np.clip(intersection / length, 0.0, 1.0))


def match_lines(
    map_lines: list[LineSegment3D],
    detected: list[Line2D],
    pose_wc: Pose,
    k: CameraIntrinsics,
    thresholds: MatchThresholds | None = None,
) -> list[Correspondence]:
    """Match map segments to detected lines at the prior pose.

    Map lines with an endpoint behind the camera and projections shorter
    than the minimum length are skipped. Among the candidate pairs that
    satisfy every threshold, assignment is greedy by ascending mean
    distance and is one-to-one in both directions. Returns an empty list
    when nothing matches.
    """
    th = thresholds or MatchThresholds()
    candidates = []
    for segment in map_lines:
        try:
            q1 = project(pose_wc, k, segment.p_start)
            q2 = project(pose_wc, k, segment.p_end)
        except BehindCameraError:
            continue
        if np.hypot(*(q2 - q1)) < th.min_projected_px:
            continue
        try:
            projected = line_from_endpoints(q1, q2)
        except DegenerateSegmentError:
            continue
        for index, line in enumerate(detected):
            angle = angle_between(projected, line)
            if angle > th.angle_max:
                continue
            mean_distance = sampled_distance(projected, line, th.sample_count) / th.sample_count
            if mean_distance > th.mean_distance_max:
                continue
            overlap = overlap_ratio(projected, line)
            if overlap < th.overlap_min:
                continue
            candidates.append((mean_distance, segment.id, index, projected, segment, angle, overlap))

    candidates.sort(key=lambda item: (item[0], item[1], item[2]))
    used_map: set[int] = set()
    used_detected: set[int] = set()
    matches = []
    for mean_distance, map_id, index, projected, segment, angle, overlap in candidates:
        if map_id in used_map or index in used_detected:
            continue
        used_map.add(map_id)
        used_detected.add(index)
        matches.append(
            Correspondence(
                map_line_id=map_id,
                detected_line=detected[index],
                projected_line=projected,
                map_segment=segment,
                distance=mean_distance,
                angle=angle,
                overlap=overlap,
                detected_index=index,
            )
        )
    return matches
