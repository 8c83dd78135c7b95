"""Shared scene builders for the test suite."""

import numpy as np

from lineloc.geometry import (
    CameraIntrinsics,
    LineSegment3D,
    Pose,
    line_from_endpoints,
    project,
)
from lineloc.matching import Correspondence

UNIT_CAMERA = CameraIntrinsics(1.0, 1.0, 0.0, 0.0, 2000.0, 2000.0)
WVGA_CAMERA = CameraIntrinsics(535.0, 535.0, 376.0, 240.0, 752.0, 480.0)


def toy_correspondences(
    n_lines,
    k=WVGA_CAMERA,
    pose=None,
    noise_px=0.0,
    bias_ids=(),
    bias_px=0.0,
    seed=0,
):
    """Random segments in front of the camera with exact-label correspondences.

    Detections are the projections of the segment endpoints at ``pose``,
    optionally with endpoint noise and a per-line normal-direction bias.
    """
    rng = np.random.default_rng(seed)
    pose = pose or Pose.identity()
    inverse = pose.inverse()
    matches = []
    for i in range(n_lines):
        center_cam = np.array(
            [rng.uniform(-2.5, 2.5), rng.uniform(-1.5, 1.5), rng.uniform(4.0, 9.0)]
        )
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        segment = LineSegment3D(
            i,
            inverse.transform(center_cam - direction),
            inverse.transform(center_cam + direction),
        )
        q1 = project(pose, k, segment.p_start)
        q2 = project(pose, k, segment.p_end)
        if noise_px > 0:
            q1 = q1 + rng.normal(0.0, noise_px, 2)
            q2 = q2 + rng.normal(0.0, noise_px, 2)
        if i in bias_ids:
            d = q2 - q1
            normal = np.array([-d[1], d[0]]) / np.hypot(d[0], d[1])
            shift = bias_px * normal
            q1, q2 = q1 + shift, q2 + shift
        detected = line_from_endpoints(q1, q2)
        matches.append(
            Correspondence(
                map_line_id=i,
                detected_line=detected,
                projected_line=detected,
                map_segment=segment,
                distance=0.0,
                angle=0.0,
                overlap=1.0,
                detected_index=i,
            )
        )
    return matches


def random_intrinsics(rng) -> CameraIntrinsics:
    fx = rng.uniform(200.0, 800.0)
    fy = rng.uniform(200.0, 800.0)
    return CameraIntrinsics(fx, fy, rng.uniform(300.0, 450.0), rng.uniform(180.0, 300.0), 752.0, 480.0)


def random_configuration(rng, min_depth=0.5):
    """One random (pose, intrinsics, 3D segment, detected line) setup.

    The segment is drawn in the camera frame with depth above
    ``min_depth`` and mapped back to the world, so it always projects.
    """
    k = random_intrinsics(rng)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    pose = Pose(q, rng.uniform(-3.0, 3.0, size=3))
    inverse = pose.inverse()
    center_cam = np.array(
        [rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0), rng.uniform(min_depth + 1.2, 15.0)]
    )
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    half = rng.uniform(0.2, 1.0)
    if center_cam[2] - half * abs(direction[2]) < min_depth:
        direction[2] = 0.0
        direction /= np.linalg.norm(direction)
    segment = LineSegment3D(
        0,
        inverse.transform(center_cam - half * direction),
        inverse.transform(center_cam + half * direction),
    )
    p1 = rng.uniform([0.0, 0.0], [752.0, 480.0])
    angle = rng.uniform(0.0, 2 * np.pi)
    p2 = p1 + rng.uniform(20.0, 300.0) * np.array([np.cos(angle), np.sin(angle)])
    detected = line_from_endpoints(p1, p2)
    correspondence = Correspondence(
        map_line_id=0,
        detected_line=detected,
        projected_line=detected,
        map_segment=segment,
        distance=0.0,
        angle=0.0,
        overlap=1.0,
    )
    return pose, k, correspondence
