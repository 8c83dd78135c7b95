"""Synthetic worlds, trajectories, and corrupted observations.

Everything here is deterministic given (config, seed): maps, poses, pixel
noise, fault injection, and the perturbed initial guesses. That makes
every statistical claim of the solver and the integrity monitor testable
without sensors, with exact bookkeeping of which observations were
corrupted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoVisibleLinesError
from .geometry import (
    DEPTH_EPSILON,
    CameraIntrinsics,
    Line2D,
    LineSegment3D,
    Pose,
    Twist,
    apply_left_perturbation,
    line_from_endpoints,
)
from .matching import Correspondence

DEFAULT_CAMERA = CameraIntrinsics(
    fx=535.0, fy=535.0, cx=376.0, cy=240.0, image_width=752.0, image_height=480.0
)
"""WVGA sensor with a ~70 degree horizontal field of view."""

MIN_PROJECTED_PX = 5.0


@dataclass(frozen=True)
class SceneConfig:
    """Bounding-box world of line segments.

    ``orientation_mix`` gives the fractions of axis-aligned segments
    (placed on the faces of the box) and free-direction segments
    (scattered through the interior); the two must sum to one.
    """

    line_count: int = 40
    extent: float = 5.0
    orientation_mix: tuple[float, float] = (0.7, 0.3)
    seed: int = 0

    def __post_init__(self):
        if self.line_count < 1:
            raise ValueError("line_count must be at least 1")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        mix = self.orientation_mix
        if len(mix) != 2 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-9:
            raise ValueError("orientation_mix fractions must be non-negative and sum to 1")


@dataclass(frozen=True)
class NoiseModel:
    """Corruption applied when rendering a frame.

    ``outlier_mode='offset'`` translates both endpoints of a detection by
    the same ``outlier_bias_px`` vector along the line normal (random
    sign), keeping the fault consistent across the endpoint pair. The
    normal is the only displacement direction a point-to-line residual
    can observe, so the magnitude equals the injected measurement bias.
    ``outlier_mode='mismatch'`` swaps a detection's geometry for the
    rendering of the nearest other visible line, emulating a wrong
    association.
    """

    sigma_px: float = 0.0
    outlier_count: int = 0
    outlier_bias_px: float = 0.0
    outlier_mode: str = "offset"
    guess_sigma_t: float = 0.0
    guess_sigma_r: float = 0.0

    def __post_init__(self):
        numeric = (
            self.sigma_px,
            self.outlier_count,
            self.outlier_bias_px,
            self.guess_sigma_t,
            self.guess_sigma_r,
        )
        if any(v < 0 for v in numeric):
            raise ValueError("noise parameters must be non-negative")
        if self.outlier_mode not in ("offset", "mismatch"):
            raise ValueError("outlier_mode must be 'offset' or 'mismatch'")


@dataclass(frozen=True)
class DetectedLine:
    """A rendered 2D detection together with its ground-truth source id."""

    map_line_id: int
    line: Line2D


@dataclass
class SimFrame:
    timestamp: float
    true_pose: Pose
    initial_guess: Pose
    detections: list[DetectedLine]
    injected_outlier_ids: frozenset[int] = frozenset()

    @property
    def ground_truth_matches(self) -> dict[int, int]:
        """Detection index to source map-line id."""
        return {i: d.map_line_id for i, d in enumerate(self.detections)}


@dataclass(frozen=True)
class TrajectoryParams:
    """Parameters shared by the trajectory kinds.

    ``circle`` orbits ``center`` at ``radius``/``height`` looking at
    ``look_at``; ``waypoints`` interpolates positions linearly through the
    given list (one waypoint holds a constant pose).
    """

    n_steps: int = 100
    dt: float = 0.05
    start_time: float = 0.0
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 12.0
    height: float = 2.0
    waypoints: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def generate_map(cfg: SceneConfig) -> list[LineSegment3D]:
    """Deterministic box world: wall-mounted axis-aligned segments plus
    free-direction segments in the interior."""
    rng = np.random.default_rng(cfg.seed)
    e = cfg.extent
    n_axis = round(cfg.line_count * cfg.orientation_mix[0])
    segments: list[LineSegment3D] = []
    for i in range(cfg.line_count):
        if i < n_axis:
            face_axis = int(rng.integers(3))
            face_sign = 1.0 if rng.random() < 0.5 else -1.0
            in_face = [ax for ax in range(3) if ax != face_axis]
            direction_axis = in_face[int(rng.integers(2))]
            other_axis = in_face[0] if direction_axis == in_face[1] else in_face[1]
            length = rng.uniform(0.4, 0.9) * e
            center = np.zeros(3)
            center[face_axis] = face_sign * e
            center[other_axis] = rng.uniform(-0.9 * e, 0.9 * e)
            center[direction_axis] = rng.uniform(-e + length / 2, e - length / 2)
            offset = np.zeros(3)
            offset[direction_axis] = length / 2
            segments.append(LineSegment3D(i, center - offset, center + offset))
        else:
            center = rng.uniform(-0.8 * e, 0.8 * e, size=3)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            half = 0.5 * rng.uniform(0.3, 0.8) * e
            segments.append(LineSegment3D(i, center - half * direction, center + half * direction))
    return segments


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """World-to-camera pose with +z along the view ray and image y pointing
    against the world up direction."""
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    norm = np.linalg.norm(z)
    if norm < 1e-12:
        raise ValueError("eye and target coincide")
    z = z / norm
    up = np.asarray(up, dtype=float)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:  # looking along up; pick any horizontal right
        x = np.cross(z, np.array([1.0, 0.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    rotation = np.vstack([x, y, z])
    return Pose.from_rt(rotation, -rotation @ eye)


def generate_trajectory(kind: str, params: TrajectoryParams) -> list[tuple[float, Pose]]:
    """Timestamped smooth pose sequence that keeps the scene in view."""
    times = params.start_time + params.dt * np.arange(params.n_steps)
    center = np.asarray(params.center, dtype=float)
    if kind == "circle":
        angles = 2.0 * math.pi * np.arange(params.n_steps) / params.n_steps
        positions = center + np.stack(
            [
                params.radius * np.cos(angles),
                params.radius * np.sin(angles),
                np.full(params.n_steps, params.height),
            ],
            axis=1,
        )
    elif kind == "waypoints":
        if not params.waypoints:
            raise ValueError("waypoints trajectory needs at least one waypoint")
        waypoints = np.asarray(params.waypoints, dtype=float).reshape(-1, 3)
        if len(waypoints) == 1 or params.n_steps == 1:
            positions = np.repeat(waypoints[:1], params.n_steps, axis=0)
        else:
            s = np.linspace(0.0, len(waypoints) - 1.0, params.n_steps)
            idx = np.minimum(s.astype(int), len(waypoints) - 2)
            frac = (s - idx)[:, None]
            positions = waypoints[idx] * (1 - frac) + waypoints[idx + 1] * frac
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    return [(float(t), look_at_pose(p, params.look_at)) for t, p in zip(times, positions)]


def _segment_in_image(q1: np.ndarray, q2: np.ndarray, k: CameraIntrinsics) -> bool:
    """Liang-Barsky test: does the pixel segment intersect the image rect."""
    t0, t1 = 0.0, 1.0
    d = q2 - q1
    for p, q in (
        (-d[0], q1[0] - 0.0),
        (d[0], k.image_width - q1[0]),
        (-d[1], q1[1] - 0.0),
        (d[1], k.image_height - q1[1]),
    ):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return False
    return True


def _visible_projections(
    map_lines: list[LineSegment3D], true_pose: Pose, k: CameraIntrinsics
) -> list[tuple[int, np.ndarray, np.ndarray]]:
    rotation = true_pose.rotation_matrix
    visible = []
    for seg in map_lines:
        p_cam = seg.endpoints @ rotation.T + true_pose.translation
        if np.any(p_cam[:, 2] <= DEPTH_EPSILON):
            continue
        pixels = np.column_stack(
            [
                k.fx * p_cam[:, 0] / p_cam[:, 2] + k.cx,
                k.fy * p_cam[:, 1] / p_cam[:, 2] + k.cy,
            ]
        )
        q1, q2 = pixels[0], pixels[1]
        if np.hypot(*(q2 - q1)) < MIN_PROJECTED_PX:
            continue
        if not _segment_in_image(q1, q2, k):
            continue
        visible.append((seg.id, q1, q2))
    return visible


def render_frame(
    map_lines: list[LineSegment3D],
    true_pose: Pose,
    k: CameraIntrinsics,
    noise: NoiseModel,
    seed,
    timestamp: float = 0.0,
) -> SimFrame:
    """Render the detections of one frame with noise and injected faults.

    A map line is visible when both endpoints are in front of the camera,
    the projection is at least 5 px long, and the segment crosses the
    image bounds. Gaussian pixel noise is applied per endpoint before the
    detection line is refit; fault injection happens afterwards and is
    recorded exactly in ``injected_outlier_ids``.
    """
    rng = np.random.default_rng(seed)
    visible = _visible_projections(map_lines, true_pose, k)
    if not visible:
        raise NoVisibleLinesError("no map line survives the visibility cull")

    endpoint_noise = rng.normal(0.0, 1.0, size=(len(visible), 2, 2)) * noise.sigma_px
    rendered: list[tuple[int, np.ndarray, np.ndarray]] = [
        (line_id, q1 + dn[0], q2 + dn[1])
        for (line_id, q1, q2), dn in zip(visible, endpoint_noise)
    ]

    injected: set[int] = set()
    if noise.outlier_count > 0:
        n_outliers = min(noise.outlier_count, len(rendered))
        chosen = rng.choice(len(rendered), size=n_outliers, replace=False)
        for idx in chosen:
            line_id, q1, q2 = rendered[idx]
            if noise.outlier_mode == "offset":
                d = q2 - q1
                normal = np.array([-d[1], d[0]]) / np.hypot(d[0], d[1])
                sign = 1.0 if rng.random() < 0.5 else -1.0
                shift = sign * noise.outlier_bias_px * normal
                rendered[idx] = (line_id, q1 + shift, q2 + shift)
                injected.add(line_id)
            else:  # mismatch: take the geometry of the nearest other line
                mid = 0.5 * (q1 + q2)
                others = [
                    (np.linalg.norm(0.5 * (o1 + o2) - mid), j)
                    for j, (other_id, o1, o2) in enumerate(rendered)
                    if j != idx
                ]
                if not others:
                    continue
                _, j = min(others)
                _, o1, o2 = rendered[j]
                rendered[idx] = (line_id, o1.copy(), o2.copy())
                injected.add(line_id)

    detections = [
        DetectedLine(line_id, line_from_endpoints(q1, q2)) for line_id, q1, q2 in rendered
    ]

    guess = true_pose
    if noise.guess_sigma_t > 0 or noise.guess_sigma_r > 0:
        delta = Twist(
            rng.normal(0.0, 1.0, size=3) * noise.guess_sigma_t,
            rng.normal(0.0, 1.0, size=3) * noise.guess_sigma_r,
        )
        guess = apply_left_perturbation(true_pose, delta)

    return SimFrame(
        timestamp=timestamp,
        true_pose=true_pose,
        initial_guess=guess,
        detections=detections,
        injected_outlier_ids=frozenset(injected),
    )


def simulate_dataset(
    scene: SceneConfig,
    trajectory_kind: str,
    trajectory: TrajectoryParams,
    k: CameraIntrinsics,
    noise: NoiseModel,
    seed: int = 0,
) -> tuple[list[LineSegment3D], list[SimFrame]]:
    """Generate a map and render every trajectory pose with derived per-frame seeds."""
    map_lines = generate_map(scene)
    frames = [
        render_frame(map_lines, pose, k, noise, seed=[seed, index], timestamp=t)
        for index, (t, pose) in enumerate(generate_trajectory(trajectory_kind, trajectory))
    ]
    return map_lines, frames


def export_dataset(frames: list[SimFrame], map_lines: list[LineSegment3D], out_dir) -> dict:
    """Write map, frames, and ground-truth trajectory in the pipeline formats."""
    from . import io  # deferred: io imports the frame types from this module

    return io.export_dataset(frames, map_lines, out_dir)


def ground_truth_correspondences(
    map_lines: list[LineSegment3D], frame: SimFrame, k: CameraIntrinsics
) -> list[Correspondence]:
    """Build correspondences from the simulator's bookkeeping, bypassing matching.

    The projected side is rendered at the frame's initial guess; detections
    whose source line cannot be projected there are skipped.
    """
    by_id = {seg.id: seg for seg in map_lines}
    projections = {
        line_id: line_from_endpoints(q1, q2)
        for line_id, q1, q2 in _visible_projections(map_lines, frame.initial_guess, k)
    }
    matches = []
    for index, detection in enumerate(frame.detections):
        projected = projections.get(detection.map_line_id)
        if projected is None:
            continue
        matches.append(
            Correspondence(
                map_line_id=detection.map_line_id,
                detected_line=detection.line,
                projected_line=projected,
                map_segment=by_id[detection.map_line_id],
                distance=0.0,
                angle=0.0,
                overlap=1.0,
                detected_index=index,
            )
        )
    return matches
