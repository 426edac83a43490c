"""Command-line pipeline: artifacts, exit codes, precedence, resumability.

Oracles used here:
  * exit codes are part of the contract: 0 success, 2 validation,
    3 runtime failure, 4 I/O failure;
  * a simulate -> train -> eval run leaves a fixed set of artifacts in
    the output directory, each rerun byte-identical for a fixed seed;
  * zero spreading probability cannot reach a 30% halting threshold, so
    simulate must fail with the runtime exit code;
  * config precedence is flag > --set > file > default.
"""

from __future__ import annotations

import json
import os
import time

import pytest

from rumorloc.cli import (
    EXIT_IO,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_VALIDATION,
    _build_parser,
    _resolve_config,
    main,
)

TINY_SET = [
    "num_samples=10",
    "k=4",
    "heads=2",
    "hidden_width=12",
    "epochs=4",
    "patience=4",
    "seed=13",
]


def _tiny_args(out_dir: str, extra: list[str] | None = None) -> list[str]:
    args = []
    for item in TINY_SET:
        args.extend(["--set", item])
    args.extend(["--out", out_dir])
    args.extend(extra or [])
    return args


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory) -> str:
    """One simulate+train+eval run shared by the artifact assertions."""
    out = str(tmp_path_factory.mktemp("run"))
    assert main(["simulate"] + _tiny_args(out)) == EXIT_OK
    assert main(["train"] + _tiny_args(out)) == EXIT_OK
    assert main(["eval"] + _tiny_args(out, ["--baseline", "all"])) == EXIT_OK
    return out


class TestPipelineArtifacts:
    def test_expected_files(self, pipeline_dir: str) -> None:
        names = set(os.listdir(pipeline_dir))
        assert {
            "snapshots.jsonl",
            "simulate_report.json",
            "checkpoint.bin",
            "history.csv",
            "metrics_test.csv",
            "summary_test.json",
        } <= names

    def test_simulate_report_is_consistent(self, pipeline_dir: str) -> None:
        with open(os.path.join(pipeline_dir, "simulate_report.json")) as fh:
            report = json.load(fh)
        assert report["num_samples"] == 10
        assert report["num_train"] == 8
        assert report["num_test"] == 2
        assert report["seed"] == 13
        assert len(report["snapshots"]) == 10

    def test_summary_metrics_shape(self, pipeline_dir: str) -> None:
        with open(os.path.join(pipeline_dir, "summary_test.json")) as fh:
            summary = json.load(fh)
        assert summary["subset"] == "test"
        assert summary["count"] == 2
        assert 0.0 <= summary["metrics"]["accuracy_mean"] <= 1.0
        assert set(summary["baselines"]) == {"random", "degree", "eccentricity"}

    def test_eval_on_train_subset(self, pipeline_dir: str) -> None:
        assert (
            main(["eval"] + _tiny_args(pipeline_dir, ["--subset", "train"]))
            == EXIT_OK
        )
        assert os.path.exists(os.path.join(pipeline_dir, "summary_train.json"))

    def test_report_prints_artifacts(self, pipeline_dir: str, capsys) -> None:
        assert main(["report"] + _tiny_args(pipeline_dir)) == EXIT_OK
        out = capsys.readouterr().out
        assert "summary_test.json" in out
        assert "history.csv" in out

    def test_simulate_rerun_is_byte_identical(
        self, pipeline_dir: str, tmp_path
    ) -> None:
        other = str(tmp_path / "rerun")
        assert main(["simulate"] + _tiny_args(other)) == EXIT_OK
        with open(os.path.join(pipeline_dir, "snapshots.jsonl"), "rb") as fh:
            first = fh.read()
        with open(os.path.join(other, "snapshots.jsonl"), "rb") as fh:
            second = fh.read()
        assert first == second


class TestExitCodes:
    def test_unknown_config_key_is_validation(self, tmp_path) -> None:
        code = main(
            ["simulate", "--out", str(tmp_path), "--set", "widht=3"]
        )
        assert code == EXIT_VALIDATION

    def test_malformed_set_token_is_validation(self, tmp_path) -> None:
        code = main(["simulate", "--out", str(tmp_path), "--set", "seed"])
        assert code == EXIT_VALIDATION

    def test_missing_snapshot_file_is_io(self, tmp_path) -> None:
        code = main(["train"] + _tiny_args(str(tmp_path)))
        assert code == EXIT_IO

    def test_missing_checkpoint_is_io(self, pipeline_dir: str, tmp_path) -> None:
        code = main(
            ["eval"]
            + _tiny_args(
                pipeline_dir, ["--checkpoint", str(tmp_path / "nope.bin")]
            )
        )
        assert code == EXIT_IO

    def test_dead_cascade_is_runtime(self, tmp_path) -> None:
        code = main(
            [
                "simulate",
                "--out",
                str(tmp_path),
                "--set",
                "p_low=0.0",
                "--set",
                "p_high=0.0",
                "--set",
                "num_samples=5",
            ]
        )
        assert code == EXIT_RUNTIME

    def test_foreign_snapshots_are_validation(
        self, pipeline_dir: str, tmp_path
    ) -> None:
        # same file, different graph: hash check must reject it
        code = main(
            [
                "train",
                "--out",
                str(tmp_path),
                "--set",
                "dataset=builtin:jazz198",
                "--snapshots",
                os.path.join(pipeline_dir, "snapshots.jsonl"),
            ]
        )
        assert code == EXIT_VALIDATION

    def test_report_missing_dir_is_validation(self, tmp_path) -> None:
        code = main(["report", "--out", str(tmp_path / "missing")])
        assert code == EXIT_VALIDATION


class TestConfigPrecedence:
    def test_flag_beats_set_beats_file(self, tmp_path) -> None:
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"seed": 5, "num_samples": 20}))
        parser = _build_parser()
        args = parser.parse_args(
            [
                "simulate",
                "--config",
                str(cfg_file),
                "--set",
                "seed=7",
                "--seed",
                "9",
            ]
        )
        cfg = _resolve_config(args)
        assert cfg.seed == 9  # direct flag wins over --set
        assert cfg.num_samples == 20  # file survives where not overridden

    def test_set_overrides_file(self, tmp_path) -> None:
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"hidden_width": 64, "heads": 2}))
        parser = _build_parser()
        args = parser.parse_args(
            ["simulate", "--config", str(cfg_file), "--set", "hidden_width=32"]
        )
        cfg = _resolve_config(args)
        assert cfg.hidden_width == 32
        assert cfg.heads == 2

    def test_version_flag(self, capsys) -> None:
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        assert capsys.readouterr().out.strip()


FOOTBALL_CONFIG = os.path.join(
    os.path.dirname(__file__), os.pardir, "configs", "football.json"
)


class TestFootballDefaults:
    """Contracts of the shipped Football configuration."""

    def test_first_training_epochs_decrease_loss(self, tmp_path) -> None:
        out = str(tmp_path / "fb")
        args = [
            "--config",
            FOOTBALL_CONFIG,
            "--out",
            out,
            "--set",
            "epochs=6",
            "--set",
            "patience=6",
        ]
        assert main(["simulate"] + args) == EXIT_OK
        assert main(["train"] + args) == EXIT_OK
        with open(os.path.join(out, "history.csv")) as fh:
            rows = [line.split(",") for line in fh.read().splitlines()[2:]]
        assert len(rows) == 6  # one history row per trained epoch
        losses = [float(r[1]) for r in rows]
        drops = sum(1 for a, b in zip(losses, losses[1:]) if b < a)
        assert drops >= 4

    @pytest.mark.slow
    def test_default_run_budget_and_generalization(self, tmp_path) -> None:
        out = str(tmp_path / "fb")
        args = ["--config", FOOTBALL_CONFIG, "--out", out]
        start = time.perf_counter()
        assert main(["simulate"] + args) == EXIT_OK
        assert main(["train"] + args) == EXIT_OK
        assert time.perf_counter() - start <= 600.0
        assert main(["eval"] + args) == EXIT_OK
        assert main(["eval"] + args + ["--subset", "train"]) == EXIT_OK
        f = {}
        for subset in ("train", "test"):
            with open(os.path.join(out, f"summary_{subset}.json")) as fh:
                f[subset] = json.load(fh)["metrics"]["f_mean"]
        assert f["train"] >= f["test"]


class TestTableContracts:
    def test_ablate_single_variant_emits_one_tagged_row(self, tmp_path) -> None:
        out = str(tmp_path / "abl")
        assert main(["ablate"] + _tiny_args(out, ["--variant", "no_pe"])) == EXIT_OK
        with open(os.path.join(out, "ablation.csv")) as fh:
            data = fh.read().splitlines()[2:]
        assert len(data) == 1
        assert data[0].startswith("no_pe,")

    def test_delta_sweep_emits_six_rows(self, tmp_path) -> None:
        out = str(tmp_path / "dsweep")
        assert main(["sweep"] + _tiny_args(out, ["--kind", "delta"])) == EXIT_OK
        with open(os.path.join(out, "sweep_delta.csv")) as fh:
            lines = fh.read().splitlines()
        assert len(lines) == 2 + 6  # provenance + header + default grid

    def test_empty_snapshot_file_is_validation(self, tmp_path) -> None:
        (tmp_path / "snapshots.jsonl").write_text("")
        code = main(["train"] + _tiny_args(str(tmp_path)))
        assert code == EXIT_VALIDATION


class TestSweepResume:
    def test_two_point_sweep_resumes_from_cache(self, tmp_path, capsys) -> None:
        out = str(tmp_path / "sweep")
        args = _tiny_args(
            out,
            ["--kind", "theta", "--set", "theta_grid=[0.25,0.3]"],
        )
        assert main(["sweep"] + args) == EXIT_OK
        table = os.path.join(out, "sweep_theta.csv")
        with open(table, "rb") as fh:
            first = fh.read()
        point_files = [n for n in os.listdir(out) if n.startswith("sweep_theta_point_")]
        assert len(point_files) == 2

        # rerun: cached points are reloaded and the table is reproduced
        assert main(["sweep"] + args) == EXIT_OK
        with open(table, "rb") as fh:
            second = fh.read()
        assert first == second

        # a corrupt point file is ignored and the point is redone
        victim = os.path.join(out, sorted(point_files)[0])
        with open(victim, "w") as fh:
            fh.write("{not json")
        assert main(["sweep"] + args) == EXIT_OK
        with open(table, "rb") as fh:
            third = fh.read()
        assert third == first
