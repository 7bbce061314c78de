"""End-to-end tests of the experiment harness on miniature configurations."""

import json

import numpy as np
import pytest

import stochsplat.experiments as experiments
from stochsplat.cli import build_parser, config_from_args, main
from stochsplat.experiments import (
    ExperimentConfig,
    ExperimentReport,
    render_report_figures,
    run,
)


def tiny_config(mode, out_dir, **kwargs):
    base = dict(
        mode=mode,
        seed=0,
        out_dir=str(out_dir),
        gt_primitives=30,
        fit_primitives=16,
        width=24,
        height=24,
        pool_size=8,
        n_test=4,
        rounds=2,
        iterations_per_round=25,
        fit_views=3,
        fit_iterations=40,
        opt_steps=4,
        opt_restarts=2,
        light_cameras=2,
        n_test_lights=2,
        ablate_ranks=(1, 2),
        timing_chunks=1,
        timing_chunk_iterations=5,
    )
    base.update(kwargs)
    return ExperimentConfig(**base)


def quality_csvs(out_dir):
    return sorted(
        p for p in out_dir.glob("*.csv") if not p.name.endswith("_timing.csv")
    )


class TestPlanViews:
    def test_rows_per_arm_and_artifacts(self, tmp_path):
        report = run(tiny_config("plan-views", tmp_path / "a"))
        for arm in ("select", "optimize", "farthest", "random"):
            rows = [r for r in report.rows if r["arm"] == arm]
            assert len(rows) == 2  # one row per planning round
            assert not report.arm_failed(arm)
            for row in rows:
                assert "psnr" in row and "ssim" in row
                assert "ause" not in row  # no ground-truth depth in this mode
        out = tmp_path / "a"
        assert (out / "planner_decisions.csv").exists()
        assert (out / "report_rows.csv").exists()
        assert (out / "metric_psnr.csv").exists()
        header = (out / "planner_decisions.csv").read_text().splitlines()[0]
        assert header == "round,mode,choice,U,steps"

    def test_deterministic_reruns_byte_identical(self, tmp_path):
        run(tiny_config("plan-views", tmp_path / "r1"))
        run(tiny_config("plan-views", tmp_path / "r2"))
        first = quality_csvs(tmp_path / "r1")
        second = quality_csvs(tmp_path / "r2")
        assert [p.name for p in first] == [p.name for p in second]
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes(), a.name

    def test_planner_failure_degrades_to_fallback(self, tmp_path, monkeypatch):
        # A failing selection hook must not sink the arm: training continues
        # with farthest-point acquisitions.
        def boom(*args, **kwargs):
            raise RuntimeError("selection exploded")

        monkeypatch.setattr(experiments, "select_next_view", boom)
        report = run(tiny_config("plan-views", tmp_path / "f"))
        assert report.failed_arms == []
        decisions = (tmp_path / "f" / "planner_decisions.csv").read_text()
        assert "fallback" in decisions

    def test_hard_failure_marks_arm_others_complete(self, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("planner down")

        monkeypatch.setattr(experiments, "select_next_view", boom)
        monkeypatch.setattr(experiments, "farthest_point_select", boom)
        report = run(tiny_config("plan-views", tmp_path / "g"))
        assert report.arm_failed("select")
        assert report.arm_failed("optimize")  # it initializes from selection
        assert report.arm_failed("farthest")
        assert not report.arm_failed("random")


class TestPlanLights:
    def test_rows_and_light_libraries(self, tmp_path):
        report = run(tiny_config("plan-lights", tmp_path / "l", rounds=1))
        for arm in ("select", "optimize", "random"):
            rows = [r for r in report.rows if r["arm"] == arm]
            assert len(rows) == 1
            assert not report.arm_failed(arm)
            assert (tmp_path / "l" / f"lights_{arm}.csv").exists()

    def test_appearance_mode_forced_to_transfer(self, tmp_path):
        config = tiny_config("plan-lights", tmp_path / "m")
        assert config.appearance_mode == "transfer"


class TestFitAndEval:
    def test_fit_writes_checkpoint_and_renders(self, tmp_path):
        report = run(tiny_config("fit", tmp_path / "fit"))
        out = tmp_path / "fit"
        assert (out / "generator.json").exists()
        assert (out / "render_test0.ppm").exists()
        assert report.rows[0]["psnr"] > 10.0

    def test_eval_reports_ause_per_view(self, tmp_path):
        report = run(tiny_config("eval", tmp_path / "eval"))
        assert len(report.rows) == 4  # one per test view
        for row in report.rows:
            assert 0.0 <= row["ause"] <= 1.0
            assert row["U"] >= 0.0
        assert (tmp_path / "eval" / "metric_ause.csv").exists()


class TestLandscapeMode:
    def test_writes_grid_artifacts(self, tmp_path):
        run(tiny_config("landscape", tmp_path / "ls", lat_cells=8, lon_cells=16))
        out = tmp_path / "ls"
        lines = (out / "landscape.csv").read_text().splitlines()
        assert lines[0] == "lat,lon,U"
        assert len(lines) == 1 + 8 * 16
        assert (out / "landscape.ppm").exists()


class TestAblation:
    def test_sweep_and_timing_separation(self, tmp_path):
        report = run(tiny_config("ablate-covariance", tmp_path / "ab"))
        arms = {row["arm"] for row in report.rows}
        assert {"deterministic", "diagonal", "block-diagonal", "rank1", "rank2"} <= arms
        out = tmp_path / "ab"
        assert (out / "ablation_timing.csv").exists()
        # quality CSVs never contain wall-clock columns
        for path in quality_csvs(out):
            assert "ms" not in path.read_text().splitlines()[0].split(",")


class TestReportFigures:
    def test_columns_and_bitwise_values(self, tmp_path):
        report = ExperimentReport(mode="plan-views")
        report.add_row(1, "select", psnr=21.123456789012345)
        written = render_report_figures(report, tmp_path)
        assert written == [str(tmp_path / "metric_psnr.csv")]
        lines = (tmp_path / "metric_psnr.csv").read_text().splitlines()
        assert lines[0] == "round,arm,value"
        round_, arm, value = lines[1].split(",")
        assert (round_, arm) == ("1", "select")
        assert float(value) == 21.123456789012345

    def test_empty_report_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            render_report_figures(ExperimentReport(mode="fit"), tmp_path)


class TestConfig:
    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            ExperimentConfig(mode="explode")

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            ExperimentConfig(mode="fit", width=8, height=8)

    def test_from_json_with_overrides(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"mode": "fit", "seed": 3, "rounds": 7}))
        config = ExperimentConfig.from_json(path, seed=9, out_dir="elsewhere")
        assert config.seed == 9
        assert config.rounds == 7
        assert config.out_dir == "elsewhere"


class TestCli:
    def test_subcommands_exist(self):
        parser = build_parser()
        for mode in ("fit", "plan-views", "plan-lights", "landscape", "ablate-covariance", "eval"):
            args = parser.parse_args([mode, "--seed", "5"])
            assert args.mode == mode

    def test_resolution_override(self):
        args = build_parser().parse_args(["fit", "--resolution", "32"])
        config = config_from_args(args)
        assert (config.width, config.height) == (32, 32)

    def test_main_runs_and_exits_zero(self, tmp_path, capsys):
        code = main(
            [
                "fit",
                "--seed",
                "0",
                "--out",
                str(tmp_path / "cli"),
                "--gt-primitives",
                "20",
                "--fit-primitives",
                "10",
                "--fit-iterations",
                "15",
                "--resolution",
                "24",
            ]
        )
        assert code == 0
        assert "report rows" in capsys.readouterr().out

    def test_main_reports_failure(self, tmp_path, monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise RuntimeError("no")

        monkeypatch.setattr(experiments, "select_next_view", boom)
        monkeypatch.setattr(experiments, "farthest_point_select", boom)
        code = main(
            [
                "plan-views",
                "--out",
                str(tmp_path / "cli2"),
                "--gt-primitives",
                "20",
                "--fit-primitives",
                "10",
                "--iterations-per-round",
                "10",
                "--rounds",
                "1",
                "--resolution",
                "24",
            ]
        )
        assert code == 1
        assert "failed arms" in capsys.readouterr().err
