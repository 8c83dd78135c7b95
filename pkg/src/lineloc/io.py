"""Dataset file formats: JSON line maps and frames, TUM text trajectories.

Formats
-------
Map (JSON)::

    {"lines": [{"id": 0, "start": [x, y, z], "end": [x, y, z]}, ...]}

Frames (JSON)::

    {"frames": [{"timestamp": t,
                 "initial_guess": {"t": [x, y, z], "q": [w, x, y, z]},
                 "lines": [{"id": 0, "p1": [u, v], "p2": [u, v]}, ...],
                 "injected_outliers": [ids...]},   # optional
                ...]}

Trajectory (TUM text): one ``timestamp tx ty tz qx qy qz qw`` line per
pose, giving the camera position and orientation *in the world frame* so
third-party trajectory tools apply directly. The in-memory convention of
this package is the inverse (world-to-camera); readers and writers
convert.

All floats are written with full ``repr`` precision, so a save/load round
trip reproduces every coordinate bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateSegmentError, InvariantViolation, ParseError
from .geometry import LineSegment3D, Pose, line_from_endpoints
from .simulator import DetectedLine, SimFrame


@dataclass
class FrameObservation:
    """One frame as loaded from disk (no ground truth attached)."""

    timestamp: float
    initial_guess: Pose
    detections: list[DetectedLine]
    injected_outlier_ids: frozenset[int] = frozenset()


def _context(path, detail: str) -> str:
    return f"{path}: {detail}"


def save_map(map_lines: list[LineSegment3D], path) -> Path:
    path = Path(path)
    payload = {
        "lines": [
            {"id": seg.id, "start": list(seg.p_start), "end": list(seg.p_end)}
            for seg in map_lines
        ]
    }
    path.write_text(json.dumps(payload, indent=1))
    return path


def load_map(path) -> list[LineSegment3D]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(_context(path, f"cannot read map: {exc}")) from exc
    records = payload.get("lines")
    if not isinstance(records, list):
        raise ParseError(_context(path, "missing 'lines' array"))
    if not records:
        raise InvariantViolation(_context(path, "map contains zero lines"))
    segments = []
    for index, record in enumerate(records):
        try:
            segments.append(
                LineSegment3D(int(record["id"]), record["start"], record["end"])
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(_context(path, f"line record {index} malformed: {exc}")) from exc
        except ValueError as exc:
            raise InvariantViolation(_context(path, f"line record {index}: {exc}")) from exc
    return segments


def _pose_to_json(pose: Pose) -> dict:
    return {"t": list(pose.translation), "q": list(pose.rotation)}


def _pose_from_json(record, path, where) -> Pose:
    try:
        q = record["q"]
        t = record["t"]
    except (KeyError, TypeError) as exc:
        raise ParseError(_context(path, f"{where}: missing pose fields: {exc}")) from exc
    try:
        return Pose(np.asarray(q, dtype=float), np.asarray(t, dtype=float))
    except ValueError as exc:
        raise InvariantViolation(_context(path, f"{where}: {exc}")) from exc


def save_frames(frames, path) -> Path:
    """Serialize frames (simulated or loaded) to the frames JSON format."""
    path = Path(path)
    payload = {
        "frames": [
            {
                "timestamp": frame.timestamp,
                "initial_guess": _pose_to_json(frame.initial_guess),
                "lines": [
                    {
                        "id": det.map_line_id,
                        "p1": list(det.line.p_start),
                        "p2": list(det.line.p_end),
                    }
                    for det in frame.detections
                ],
                "injected_outliers": sorted(frame.injected_outlier_ids),
            }
            for frame in frames
        ]
    }
    path.write_text(json.dumps(payload, indent=1))
    return path


def load_frames(path) -> list[FrameObservation]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(_context(path, f"cannot read frames: {exc}")) from exc
    records = payload.get("frames")
    if not isinstance(records, list):
        raise ParseError(_context(path, "missing 'frames' array"))
    frames = []
    for index, record in enumerate(records):
        where = f"frame {index}"
        try:
            timestamp = float(record["timestamp"])
            lines = record["lines"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(_context(path, f"{where} malformed: {exc}")) from exc
        guess = _pose_from_json(record.get("initial_guess"), path, where)
        detections = []
        for j, entry in enumerate(lines):
            try:
                detections.append(
                    DetectedLine(int(entry["id"]), line_from_endpoints(entry["p1"], entry["p2"]))
                )
            except (KeyError, TypeError) as exc:
                raise ParseError(
                    _context(path, f"{where} line {j} malformed: {exc}")
                ) from exc
            except (ValueError, DegenerateSegmentError) as exc:
                raise InvariantViolation(_context(path, f"{where} line {j}: {exc}")) from exc
        frames.append(
            FrameObservation(
                timestamp=timestamp,
                initial_guess=guess,
                detections=detections,
                injected_outlier_ids=frozenset(
                    int(i) for i in record.get("injected_outliers", [])
                ),
            )
        )
    return frames


def save_trajectory(poses: list[tuple[float, Pose]], path) -> Path:
    """Write timestamped world-to-camera poses as TUM camera-in-world lines."""
    path = Path(path)
    lines = []
    for timestamp, pose in poses:
        inv = pose.inverse()
        tx, ty, tz = inv.translation
        qw, qx, qy, qz = inv.rotation
        lines.append(
            " ".join(repr(float(v)) for v in (timestamp, tx, ty, tz, qx, qy, qz, qw))
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def load_trajectory(path) -> list[tuple[float, Pose]]:
    """Read a TUM trajectory back into timestamped world-to-camera poses."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(_context(path, f"cannot read trajectory: {exc}")) from exc
    poses = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 8:
            raise ParseError(
                _context(path, f"line {lineno}: expected 8 fields, got {len(fields)}")
            )
        try:
            timestamp, tx, ty, tz, qx, qy, qz, qw = (float(v) for v in fields)
        except ValueError as exc:
            raise ParseError(_context(path, f"line {lineno}: {exc}")) from exc
        try:
            camera_in_world = Pose(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))
        except ValueError as exc:
            raise InvariantViolation(_context(path, f"line {lineno}: {exc}")) from exc
        poses.append((timestamp, camera_in_world.inverse()))
    if not poses:
        raise ParseError(_context(path, "trajectory file holds no poses"))
    return poses


def export_dataset(frames: list[SimFrame], map_lines: list[LineSegment3D], out_dir) -> dict:
    """Write a simulated dataset in the pipeline's input formats.

    Produces ``map.json``, ``frames.json`` and ``ground_truth.tum`` in
    ``out_dir`` and returns their paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return {
        "map": save_map(map_lines, out_dir / "map.json"),
        "frames": save_frames(frames, out_dir / "frames.json"),
        "ground_truth": save_trajectory(
            [(frame.timestamp, frame.true_pose) for frame in frames],
            out_dir / "ground_truth.tum",
        ),
    }
