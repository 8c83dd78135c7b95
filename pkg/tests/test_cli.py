import json

import pytest

from lineloc.cli import build_parser, load_config, main


class TestConfigHandling:
    def test_defaults_complete(self):
        cfg = load_config(None, None)
        assert cfg["integrity"]["alpha"] == 0.05
        assert cfg["camera"]["fx"] > 0

    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"integrity": {"alpha": 0.01}, "sigma_px": 3.5}))
        cfg = load_config(str(path), None)
        assert cfg["integrity"]["alpha"] == 0.01
        assert cfg["integrity"]["r_max"] == 2  # untouched default
        assert cfg["sigma_px"] == 3.5

    def test_set_overrides_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"integrity": {"alpha": 0.01}}))
        cfg = load_config(str(path), ["integrity.alpha=0.2", "noise.outlier_mode=mismatch"])
        assert cfg["integrity"]["alpha"] == 0.2
        assert cfg["noise"]["outlier_mode"] == "mismatch"

    def test_malformed_set(self):
        with pytest.raises(ValueError):
            load_config(None, ["alpha"])

    def test_parser_requires_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    code = main(
        ["simulate", "--out", str(data), "--n-frames", "8", "--seed", "0",
         "--set", "noise.sigma_px=1.0"]
    )
    assert code == 0
    return root, data


class TestSubcommands:
    def test_simulate_outputs(self, workspace):
        _, data = workspace
        for name in ("map.json", "frames.json", "ground_truth.tum"):
            assert (data / name).exists()

    def test_run_and_reports(self, workspace):
        root, data = workspace
        out = root / "report"
        code = main(
            ["run", "--map", str(data / "map.json"), "--frames", str(data / "frames.json"),
             "--ground-truth", str(data / "ground_truth.tum"), "--out", str(out),
             "--sigma-px", "1.0", "--seed", "0"]
        )
        assert code == 0
        assert (out / "frames.csv").exists()
        assert (out / "summary.json").exists()
        assert (out / "translation_bounds.png").exists()
        assert (out / "plot_yaw.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_frames"] == 8

    def test_evaluate_subcommand(self, workspace):
        root, data = workspace
        out = root / "eval"
        code = main(
            ["evaluate", "--frames-csv", str(root / "report" / "frames.csv"),
             "--ground-truth", str(data / "ground_truth.tum"), "--out", str(out),
             "--no-figures"]
        )
        assert code == 0
        direct = json.loads((root / "report" / "summary.json").read_text())
        recomputed = json.loads((out / "summary.json").read_text())
        assert direct == recomputed

    def test_sweep_subcommand(self, workspace):
        root, data = workspace
        out = root / "sweep"
        code = main(
            ["sweep", "--map", str(data / "map.json"), "--frames", str(data / "frames.json"),
             "--ground-truth", str(data / "ground_truth.tum"), "--out", str(out),
             "--param", "sigma2", "--values", "1,4", "--seed", "0"]
        )
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert len(lines) == 3
        assert (out / "sweep.png").exists()

    def test_missing_file_is_exit_code_2(self, tmp_path):
        code = main(
            ["run", "--map", str(tmp_path / "nope.json"), "--frames", str(tmp_path / "nope.json"),
             "--out", str(tmp_path / "out")]
        )
        assert code == 2

    def test_identical_runs_are_byte_identical(self, workspace):
        root, data = workspace
        outs = []
        for name in ("rep_a", "rep_b"):
            out = root / name
            code = main(
                ["run", "--map", str(data / "map.json"), "--frames", str(data / "frames.json"),
                 "--out", str(out), "--sigma-px", "1.0", "--seed", "0", "--no-figures"]
            )
            assert code == 0
            outs.append((out / "frames.csv").read_bytes())
        assert outs[0] == outs[1]
