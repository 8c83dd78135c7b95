"""Command-line entry points: simulate, run, evaluate, sweep.

Every parameter lives in a single JSON config file; any field can be
overridden on the command line with ``--set section.key=value``, and the
most common ones have dedicated flags. Per-frame failures are recorded in
the reports and never change the exit code; only I/O and configuration
errors are fatal.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from pathlib import Path

from .errors import LocalizationError
from .estimator import SolverOptions
from .figures import render_report_figures, render_sweep_figure
from .geometry import CameraIntrinsics
from .integrity import AXES, IntegrityConfig
from .io import load_trajectory
from .matching import MatchThresholds
from .pipeline import (
    EvaluationSummary,
    RunConfig,
    emit_reports,
    evaluate,
    read_frames_csv,
    run_pipeline,
)
from .simulator import (
    NoiseModel,
    SceneConfig,
    TrajectoryParams,
    export_dataset,
    simulate_dataset,
)

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "sigma_px": 2.0,
    "workers": 1,
    "camera": {
        "fx": 535.0, "fy": 535.0, "cx": 376.0, "cy": 240.0,
        "width": 752.0, "height": 480.0,
    },
    "scene": {"line_count": 40, "extent": 5.0, "axis_aligned_fraction": 0.7},
    "trajectory": {
        "kind": "circle", "n_steps": 120, "dt": 0.05, "start_time": 0.0,
        "radius": 12.0, "height": 2.0, "center": [0.0, 0.0, 0.0],
        "look_at": [0.0, 0.0, 0.0], "waypoints": [],
    },
    "noise": {
        "sigma_px": 2.0, "outlier_count": 0, "outlier_bias_px": 0.0,
        "outlier_mode": "offset", "guess_sigma_t": 0.02, "guess_sigma_r": 0.005,
    },
    "matching": {
        "mean_distance_max": 10.0, "angle_max_deg": 5.0, "overlap_min": 0.5,
        "sample_count": 10, "min_projected_px": 5.0,
    },
    "solver": {"max_iterations": 50, "step_tolerance": 1e-8},
    "integrity": {"alpha": 0.05, "k_sigma": 3.0, "r_max": 2, "min_lines": 4},
}


def load_config(path: str | None, overrides: list[str] | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        user = json.loads(Path(path).read_text())
        _merge(cfg, user)
    for item in overrides or []:
        key, _, raw = item.partition("=")
        if not _:
            raise ValueError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return cfg


def _merge(base: dict, extra: dict) -> None:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value


def _camera(cfg: dict) -> CameraIntrinsics:
    c = cfg["camera"]
    return CameraIntrinsics(c["fx"], c["fy"], c["cx"], c["cy"], c["width"], c["height"])


def _thresholds(cfg: dict) -> MatchThresholds:
    m = cfg["matching"]
    return MatchThresholds(
        mean_distance_max=m["mean_distance_max"],
        angle_max=math.radians(m["angle_max_deg"]),
        overlap_min=m["overlap_min"],
        sample_count=int(m["sample_count"]),
        min_projected_px=m["min_projected_px"],
    )


def _integrity(cfg: dict) -> IntegrityConfig:
    i = cfg["integrity"]
    return IntegrityConfig(
        alpha=i["alpha"], k_sigma=i["k_sigma"], r_max=int(i["r_max"]),
        min_lines=int(i["min_lines"]),
    )


def _solver(cfg: dict) -> SolverOptions:
    s = cfg["solver"]
    return SolverOptions(
        max_iterations=int(s["max_iterations"]), step_tolerance=s["step_tolerance"]
    )


def _run_config(cfg: dict, args) -> RunConfig:
    return RunConfig(
        camera=_camera(cfg),
        map_path=args.map,
        frames_path=args.frames,
        ground_truth_path=args.ground_truth,
        output_dir=args.out,
        thresholds=_thresholds(cfg),
        integrity=_integrity(cfg),
        solver=_solver(cfg),
        sigma_px=cfg["sigma_px"],
        seed=int(cfg["seed"]),
        workers=int(cfg["workers"]),
    )


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    cfg["seed"] = args.seed if args.seed is not None else cfg["seed"]
    if args.n_frames is not None:
        cfg["trajectory"]["n_steps"] = args.n_frames
    if args.line_count is not None:
        cfg["scene"]["line_count"] = args.line_count
    if args.noise_sigma is not None:
        cfg["noise"]["sigma_px"] = args.noise_sigma
    if args.outliers is not None:
        cfg["noise"]["outlier_count"] = args.outliers
    if args.outlier_bias is not None:
        cfg["noise"]["outlier_bias_px"] = args.outlier_bias

    scene_cfg = cfg["scene"]
    axis_fraction = scene_cfg["axis_aligned_fraction"]
    scene = SceneConfig(
        line_count=int(scene_cfg["line_count"]),
        extent=scene_cfg["extent"],
        orientation_mix=(axis_fraction, 1.0 - axis_fraction),
        seed=int(cfg["seed"]),
    )
    t = cfg["trajectory"]
    trajectory = TrajectoryParams(
        n_steps=int(t["n_steps"]), dt=t["dt"], start_time=t["start_time"],
        look_at=tuple(t["look_at"]), center=tuple(t["center"]),
        radius=t["radius"], height=t["height"],
        waypoints=tuple(tuple(w) for w in t["waypoints"]),
    )
    n = cfg["noise"]
    noise = NoiseModel(
        sigma_px=n["sigma_px"], outlier_count=int(n["outlier_count"]),
        outlier_bias_px=n["outlier_bias_px"], outlier_mode=n["outlier_mode"],
        guess_sigma_t=n["guess_sigma_t"], guess_sigma_r=n["guess_sigma_r"],
    )
    map_lines, frames = simulate_dataset(
        scene, t["kind"], trajectory, _camera(cfg), noise, seed=int(cfg["seed"])
    )
    paths = export_dataset(frames, map_lines, args.out)
    detections = sum(len(f.detections) for f in frames)
    print(f"simulated {len(frames)} frames over {len(map_lines)} map lines "
          f"({detections} detections)")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.sigma_px is not None:
        cfg["sigma_px"] = args.sigma_px
    if args.workers is not None:
        cfg["workers"] = args.workers
    run_cfg = _run_config(cfg, args)
    records = run_pipeline(run_cfg)
    summary = None
    if args.ground_truth is not None:
        summary = evaluate(records, load_trajectory(args.ground_truth))
    paths = emit_reports(records, summary, args.out)
    if not args.no_figures:
        for path in render_report_figures(records, args.out):
            paths[path.stem] = path
    n_ok = sum(r.status == "ok" for r in records)
    print(f"processed {len(records)} frames: {n_ok} ok, "
          f"{sum(r.status == 'no_match' for r in records)} no_match, "
          f"{sum(r.status == 'unavailable' for r in records)} unavailable")
    if summary is not None:
        _print_summary(summary)
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    return 0


def _print_summary(summary: EvaluationSummary) -> None:
    print(f"ATE RMSE: {summary.ate_rmse:.6f} m over {summary.n_evaluated} frames")
    if summary.pl_bound_rate is not None:
        pl = " ".join(f"{axis}={rate:.3f}" for axis, rate in zip(AXES, summary.pl_bound_rate))
        s3 = " ".join(
            f"{axis}={rate:.3f}" for axis, rate in zip(AXES, summary.sigma3_bound_rate)
        )
        print(f"PL bound rate:     {pl}")
        print(f"3-sigma bound rate: {s3}")


def cmd_evaluate(args) -> int:
    records = read_frames_csv(args.frames_csv)
    ground_truth = load_trajectory(args.ground_truth)
    summary = evaluate(records, ground_truth, align=args.align)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(json.dumps(summary.to_json(), indent=1))
    if not args.no_figures:
        render_report_figures(records, out_dir)
    _print_summary(summary)
    print(f"  summary: {out_dir / 'summary.json'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    values = [float(v) for v in args.values.split(",")]
    rows = []
    for value in values:
        swept = copy.deepcopy(cfg)
        if args.param == "sigma2":
            swept["sigma_px"] = math.sqrt(value)
        else:  # r_max
            swept["integrity"]["r_max"] = int(value)
        records = run_pipeline(_run_config(swept, args))
        summary = evaluate(records, load_trajectory(args.ground_truth))
        rows.append(
            {
                "value": value,
                "availability": summary.availability,
                "pl_bound_rate": [float(v) for v in summary.pl_bound_rate],
                "sigma3_bound_rate": [float(v) for v in summary.sigma3_bound_rate],
                "mean_pl": [float(v) for v in summary.mean_pl],
            }
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_path = out_dir / "sweep.csv"
    with sweep_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [args.param, "availability"]
            + [f"pl_rate_{a}" for a in AXES]
            + [f"sigma3_rate_{a}" for a in AXES]
            + [f"mean_pl_{a}" for a in AXES]
        )
        for row in rows:
            writer.writerow(
                [repr(row["value"]), repr(row["availability"])]
                + [repr(v) for v in row["pl_bound_rate"]]
                + [repr(v) for v in row["sigma3_bound_rate"]]
                + [repr(v) for v in row["mean_pl"]]
            )
    print(f"{args.param:>10} | " + " | ".join(f"pl_{a}" for a in AXES))
    for row in rows:
        print(
            f"{row['value']:>10.3g} | "
            + " | ".join(f"{v:.3f}" for v in row["pl_bound_rate"])
        )
    paths = {"sweep": sweep_path}
    if not args.no_figures:
        paths["figure"] = render_sweep_figure(rows, args.param, out_dir / "sweep.png")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def _add_common(parser) -> None:
    parser.add_argument("--config", help="JSON config file; defaults apply otherwise")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override any config field, e.g. --set integrity.alpha=0.01",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lineloc",
        description="Line-feature localization with fault exclusion and protection levels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-frames", type=int, help="number of trajectory frames")
    p.add_argument("--line-count", type=int, help="number of map lines")
    p.add_argument("--noise-sigma", type=float, help="endpoint pixel noise std")
    p.add_argument("--outliers", type=int, help="corrupted lines per frame")
    p.add_argument("--outlier-bias", type=float, help="outlier offset magnitude, px")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the localization + integrity pipeline")
    _add_common(p)
    p.add_argument("--map", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--ground-truth")
    p.add_argument("--out", required=True)
    p.add_argument("--sigma-px", type=float, help="assumed measurement noise std, px")
    p.add_argument("--workers", type=int, help="parallel frame workers")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="evaluate an existing frames.csv")
    _add_common(p)
    p.add_argument("--frames-csv", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--align", action="store_true", help="rigidly align before ATE")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="sweep sigma^2 or r_max and tabulate bound rates")
    _add_common(p)
    p.add_argument("--map", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--param", choices=("sigma2", "r_max"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LocalizationError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
