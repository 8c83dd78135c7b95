"""Batch runner: per frame match, solve, exclude faults, bound the error.

Every input frame produces exactly one :class:`FrameRecord`; frames that
fail matching or integrity checks are recorded with a status instead of
being dropped. Records serialize to ``frames.csv`` with a fixed,
documented column order (see :data:`CSV_COLUMNS`) and full-precision
floats, so reloading the file reproduces the in-memory records exactly.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    InsufficientObservationsError,
    IntegrityUnavailableError,
    NoOverlapError,
    ParseError,
    SingularNormalEquationsError,
)
from .estimator import SolverOptions
from .geometry import CameraIntrinsics, LineSegment3D, Pose, log_map
from .integrity import AXES, IntegrityConfig, bound_rate, icn, monitor_frame
from .io import FrameObservation, load_frames, load_map, load_trajectory
from .matching import MatchThresholds, match_lines

STATUS_OK = "ok"
STATUS_UNAVAILABLE = "unavailable"
STATUS_NO_MATCH = "no_match"

GT_ASSOCIATION_WINDOW = 0.010  # s

CSV_COLUMNS = (
    ["timestamp", "status", "n_detections", "n_matches", "n_excluded", "excluded_ids",
     "iterations", "converged", "final_cost", "wsse", "threshold", "dof", "icn",
     "tx", "ty", "tz", "qw", "qx", "qy", "qz"]
    + [f"err_{axis}" for axis in AXES]
    + [f"pl_{axis}" for axis in AXES]
    + [f"pb_{axis}" for axis in AXES]
    + [f"pn_{axis}" for axis in AXES]
    + [f"sigma3_{axis}" for axis in AXES]
    + ["pl_roll_deg", "pl_pitch_deg", "pl_yaw_deg"]
    + [f"worst_subset_{axis}" for axis in AXES]
    + ["note"]
)


@dataclass
class RunConfig:
    camera: CameraIntrinsics
    map_path: str | Path
    frames_path: str | Path
    output_dir: str | Path
    ground_truth_path: str | Path | None = None
    thresholds: MatchThresholds = field(default_factory=MatchThresholds)
    integrity: IntegrityConfig = field(default_factory=IntegrityConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    sigma_px: float = 2.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.sigma_px <= 0:
            raise ValueError("sigma_px must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class FrameRecord:
    """Per-frame pipeline outcome; blank fields encode what never ran."""

    timestamp: float
    status: str
    n_detections: int
    n_matches: int = 0
    excluded_ids: tuple[int, ...] = ()
    iterations: int | None = None
    converged: bool | None = None
    final_cost: float | None = None
    wsse: float | None = None
    threshold: float | None = None
    dof: int | None = None
    icn: float | None = None
    pose: Pose | None = None
    errors: np.ndarray | None = None  # (6,) vs ground truth, tangent space
    pl: np.ndarray | None = None  # (6,)
    pb: np.ndarray | None = None
    pn: np.ndarray | None = None
    sigma3: np.ndarray | None = None
    worst_subsets: tuple[tuple[int, ...], ...] | None = None
    note: str = ""


def pose_error(estimate: Pose, truth: Pose) -> np.ndarray:
    """Six-axis tangent-space error ``log(T_est @ T_true^-1)``.

    Components share the solver's state ordering: translation (m) then
    rotation (rad), so they compare directly against protection levels.
    """
    return log_map(estimate.compose(truth.inverse())).vector()


def process_frame(
    map_lines: list[LineSegment3D],
    frame: FrameObservation,
    camera: CameraIntrinsics,
    thresholds: MatchThresholds,
    sigma_px: float,
    integrity: IntegrityConfig,
    solver: SolverOptions,
) -> FrameRecord:
    """Run match -> solve -> fault exclusion -> protection level for one frame."""
    record = FrameRecord(
        timestamp=frame.timestamp,
        status=STATUS_UNAVAILABLE,
        n_detections=len(frame.detections),
    )
    detected = [d.line for d in frame.detections]
    matches = match_lines(map_lines, detected, frame.initial_guess, camera, thresholds)
    record.n_matches = len(matches)
    if len(matches) < integrity.min_lines:
        record.status = STATUS_NO_MATCH
        record.note = f"{len(matches)} matches below minimum {integrity.min_lines}"
        return record

    try:
        fde_report, pl_report = monitor_frame(
            matches, frame.initial_guess, camera, sigma_px, integrity, solver
        )
    except IntegrityUnavailableError as exc:
        record.note = str(exc)
        if exc.report is not None:
            _fill_fde(record, exc.report)
        return record
    except (SingularNormalEquationsError, InsufficientObservationsError) as exc:
        record.note = str(exc)
        return record

    record.status = STATUS_OK
    _fill_fde(record, fde_report)
    record.icn = pl_report.icn
    record.pl = pl_report.pl
    record.pb = pl_report.bias
    record.pn = pl_report.noise
    cov_sigma = pl_report.noise / integrity.k_sigma
    record.sigma3 = 3.0 * cov_sigma
    record.worst_subsets = tuple(pl_report.worst_subsets)
    return record


def _fill_fde(record: FrameRecord, report) -> None:
    record.excluded_ids = tuple(report.excluded_line_ids)
    record.iterations = report.solve.iterations
    record.converged = report.solve.converged
    record.final_cost = report.solve.final_cost
    last = report.rounds[-1]
    record.wsse = last.wsse
    record.threshold = last.threshold
    record.dof = last.dof
    record.pose = report.pose
    record.icn = icn(report.system)


_WORKER_STATE: dict = {}


def _worker_init(map_lines, camera, thresholds, sigma_px, integrity, solver):
    _WORKER_STATE["args"] = (map_lines, camera, thresholds, sigma_px, integrity, solver)


def _worker_process(frame):
    map_lines, camera, thresholds, sigma_px, integrity, solver = _WORKER_STATE["args"]
    return process_frame(map_lines, frame, camera, thresholds, sigma_px, integrity, solver)


def run_pipeline(cfg: RunConfig) -> list[FrameRecord]:
    """Process every frame of a dataset; output order follows input order."""
    map_lines = load_map(cfg.map_path)
    frames = load_frames(cfg.frames_path)
    args = (map_lines, cfg.camera, cfg.thresholds, cfg.sigma_px, cfg.integrity, cfg.solver)
    if cfg.workers > 1:
        chunksize = max(1, len(frames) // (cfg.workers * 4))
        with ProcessPoolExecutor(
            max_workers=cfg.workers, initializer=_worker_init, initargs=args
        ) as executor:
            records = list(executor.map(_worker_process, frames, chunksize=chunksize))
    else:
        records = [process_frame(map_lines, frame, *args[1:]) for frame in frames]

    if cfg.ground_truth_path is not None:
        attach_errors(records, load_trajectory(cfg.ground_truth_path))
    return records


def associate_timestamps(
    timestamps, ground_truth: list[tuple[float, Pose]], max_dt: float = GT_ASSOCIATION_WINDOW
) -> list[int | None]:
    """Nearest-neighbor index into the ground truth for each timestamp."""
    gt_times = np.array([t for t, _ in ground_truth])
    order = np.argsort(gt_times)
    sorted_times = gt_times[order]
    out: list[int | None] = []
    for t in timestamps:
        pos = int(np.searchsorted(sorted_times, t))
        best, best_dt = None, max_dt
        for candidate in (pos - 1, pos):
            if 0 <= candidate < len(sorted_times):
                dt = abs(sorted_times[candidate] - t)
                if dt <= best_dt:
                    best, best_dt = int(order[candidate]), dt
        out.append(best)
    return out


def attach_errors(
    records: list[FrameRecord], ground_truth: list[tuple[float, Pose]]
) -> None:
    """Fill per-axis tangent errors for records with an associated true pose."""
    indices = associate_timestamps([r.timestamp for r in records], ground_truth)
    for record, index in zip(records, indices):
        if record.pose is not None and index is not None:
            record.errors = pose_error(record.pose, ground_truth[index][1])


@dataclass
class EvaluationSummary:
    n_frames: int
    n_ok: int
    n_no_match: int
    n_unavailable: int
    availability: float
    n_evaluated: int
    ate_rmse: float | None
    pl_bound_rate: np.ndarray | None
    sigma3_bound_rate: np.ndarray | None
    mean_pl: np.ndarray | None
    aligned: bool = False

    def to_json(self) -> dict:
        def listify(a):
            return None if a is None else [float(v) for v in a]

        return {
            "n_frames": self.n_frames,
            "n_ok": self.n_ok,
            "n_no_match": self.n_no_match,
            "n_unavailable": self.n_unavailable,
            "availability": self.availability,
            "n_evaluated": self.n_evaluated,
            "ate_rmse": self.ate_rmse,
            "axes": list(AXES),
            "pl_bound_rate": listify(self.pl_bound_rate),
            "sigma3_bound_rate": listify(self.sigma3_bound_rate),
            "mean_pl": listify(self.mean_pl),
            "aligned": self.aligned,
        }


def _rigid_align(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Kabsch alignment of source points onto target (rotation + translation)."""
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    cov = (target - mu_t).T @ (source - mu_s)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    rot = u @ np.diag([1.0, 1.0, d]) @ vt
    return (source - mu_s) @ rot.T + mu_t


def evaluate(
    records: list[FrameRecord],
    ground_truth: list[tuple[float, Pose]],
    align: bool = False,
    max_dt: float = GT_ASSOCIATION_WINDOW,
) -> EvaluationSummary:
    """Absolute-trajectory accuracy and per-axis bound rates.

    Localization is absolute in the map frame, so the ATE is computed
    without alignment by default; ``align=True`` applies a rigid fit for
    cross-checking only. Bound rates cover frames with ``ok`` status and
    an associated true pose. Errors are always recomputed from the
    estimated poses so results from reloaded CSV records are identical.
    """
    indices = associate_timestamps([r.timestamp for r in records], ground_truth, max_dt)
    paired = [
        (record, ground_truth[index][1])
        for record, index in zip(records, indices)
        if record.pose is not None and index is not None
    ]
    if not paired:
        raise NoOverlapError("no record timestamp associates with the ground truth")

    est_centers = np.array([record.pose.camera_center() for record, _ in paired])
    gt_centers = np.array([truth.camera_center() for _, truth in paired])
    if align:
        est_centers = _rigid_align(est_centers, gt_centers)
    ate = float(np.sqrt(np.mean(np.sum((est_centers - gt_centers) ** 2, axis=1))))

    ok_pairs = [
        (record, truth) for record, truth in paired
        if record.status == STATUS_OK and record.pl is not None
    ]
    pl_rate = sigma3_rate = mean_pl = None
    if ok_pairs:
        errors = np.array([pose_error(record.pose, truth) for record, truth in ok_pairs])
        pls = np.array([record.pl for record, _ in ok_pairs])
        sigma3s = np.array([record.sigma3 for record, _ in ok_pairs])
        pl_rate = np.array([bound_rate(pls[:, i], errors[:, i]) for i in range(6)])
        sigma3_rate = np.array([bound_rate(sigma3s[:, i], errors[:, i]) for i in range(6)])
        mean_pl = pls.mean(axis=0)

    n_ok = sum(record.status == STATUS_OK for record in records)
    n_no_match = sum(record.status == STATUS_NO_MATCH for record in records)
    return EvaluationSummary(
        n_frames=len(records),
        n_ok=n_ok,
        n_no_match=n_no_match,
        n_unavailable=len(records) - n_ok - n_no_match,
        availability=n_ok / len(records) if records else 0.0,
        n_evaluated=len(paired),
        ate_rmse=ate,
        pl_bound_rate=pl_rate,
        sigma3_bound_rate=sigma3_rate,
        mean_pl=mean_pl,
        aligned=align,
    )


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _record_to_row(record: FrameRecord) -> list[str]:
    pose_fields = [None] * 7
    if record.pose is not None:
        pose_fields = list(record.pose.translation) + list(record.pose.rotation)
    vec = lambda a: list(a) if a is not None else [None] * 6
    pl_deg = (
        [float(np.degrees(v)) for v in record.pl[3:]] if record.pl is not None else [None] * 3
    )
    subsets = (
        ["|".join(str(i) for i in s) for s in record.worst_subsets]
        if record.worst_subsets is not None
        else [None] * 6
    )
    cells = (
        [record.timestamp, record.status, record.n_detections, record.n_matches,
         len(record.excluded_ids), "|".join(str(i) for i in record.excluded_ids),
         record.iterations, record.converged, record.final_cost, record.wsse,
         record.threshold, record.dof, record.icn]
        + pose_fields
        + vec(record.errors) + vec(record.pl) + vec(record.pb) + vec(record.pn)
        + vec(record.sigma3) + pl_deg + subsets + [record.note]
    )
    return [_fmt(c) for c in cells]


def _parse_float(cell: str):
    return None if cell == "" else float(cell)


def _parse_int(cell: str):
    return None if cell == "" else int(cell)


def _parse_vec(cells: list[str]):
    if all(c == "" for c in cells):
        return None
    return np.array([float(c) for c in cells])


def _row_to_record(row: dict) -> FrameRecord:
    pose = None
    if row["tx"] != "":
        pose = Pose(
            np.array([float(row[k]) for k in ("qw", "qx", "qy", "qz")]),
            np.array([float(row[k]) for k in ("tx", "ty", "tz")]),
        )
    excluded = tuple(int(i) for i in row["excluded_ids"].split("|") if i != "")
    subsets = None
    subset_cells = [row[f"worst_subset_{axis}"] for axis in AXES]
    if any(cell != "" for cell in subset_cells):
        subsets = tuple(
            tuple(int(i) for i in cell.split("|") if i != "") for cell in subset_cells
        )
    converged = None if row["converged"] == "" else row["converged"] == "1"
    record = FrameRecord(
        timestamp=float(row["timestamp"]),
        status=row["status"],
        n_detections=int(row["n_detections"]),
        n_matches=int(row["n_matches"]),
        excluded_ids=excluded,
        iterations=_parse_int(row["iterations"]),
        converged=converged,
        final_cost=_parse_float(row["final_cost"]),
        wsse=_parse_float(row["wsse"]),
        threshold=_parse_float(row["threshold"]),
        dof=_parse_int(row["dof"]),
        icn=_parse_float(row["icn"]),
        pose=pose,
        errors=_parse_vec([row[f"err_{axis}"] for axis in AXES]),
        pl=_parse_vec([row[f"pl_{axis}"] for axis in AXES]),
        pb=_parse_vec([row[f"pb_{axis}"] for axis in AXES]),
        pn=_parse_vec([row[f"pn_{axis}"] for axis in AXES]),
        sigma3=_parse_vec([row[f"sigma3_{axis}"] for axis in AXES]),
        worst_subsets=subsets,
        note=row["note"],
    )
    return record


def write_frames_csv(records: list[FrameRecord], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(_record_to_row(record))
    return path


def read_frames_csv(path) -> list[FrameRecord]:
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != list(CSV_COLUMNS):
            raise ParseError(f"{path}: header does not match the documented column order")
        return [_row_to_record(row) for row in reader]


def emit_reports(records: list[FrameRecord], summary: EvaluationSummary | None, out_dir) -> dict:
    """Write ``frames.csv``, ``summary.json`` and per-axis plot CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"frames": write_frames_csv(records, out_dir / "frames.csv")}
    if summary is not None:
        summary_path = out_dir / "summary.json"
        summary_path.write_text(json.dumps(summary.to_json(), indent=1))
        paths["summary"] = summary_path
    for axis_index, axis in enumerate(AXES):
        axis_path = out_dir / f"plot_{axis}.csv"
        with axis_path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["timestamp", "error", "pl", "three_sigma", "icn"])
            for record in records:
                writer.writerow(
                    [
                        _fmt(record.timestamp),
                        _fmt(None if record.errors is None else record.errors[axis_index]),
                        _fmt(None if record.pl is None else record.pl[axis_index]),
                        _fmt(None if record.sigma3 is None else record.sigma3[axis_index]),
                        _fmt(record.icn),
                    ]
                )
        paths[f"plot_{axis}"] = axis_path
    return paths
