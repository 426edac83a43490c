"""Experiment harnesses: determinism, sweeps, ablations, result tables.

Oracles used here:
  * rerunning any harness with the same config must reproduce results
    bit for bit (all randomness flows from the config seed);
  * a one-point sweep is by construction the same computation as a plain
    run whose config carries the grid value and seed = base + 0;
  * table files start with a fixed provenance comment and a frozen
    header row, and contain no timestamps, so repeat writes are
    byte-identical.
"""

from __future__ import annotations

import pytest

from rumorloc import (
    ABLATION_VARIANTS,
    builtin_graph,
    compute_metrics,
    run_ablation,
    run_experiment,
    run_sweep,
)
from rumorloc.cascade import build_dataset
from rumorloc.experiments import (
    ABLATION_COLUMNS,
    METRICS_COLUMNS,
    SWEEP_COLUMNS,
    ablation_config,
    aggregate_to_dict,
    baseline_reports,
    provenance_line,
    sweep_point_config,
    write_ablation_csv,
    write_history_csv,
    write_metrics_csv,
    write_sweep_csv,
)
from rumorloc.training import HistoryRow, aggregate_metrics


@pytest.fixture(scope="module")
def graph():
    return builtin_graph("football115")


@pytest.fixture(scope="module")
def shared_dataset(graph, tiny_config):
    return build_dataset(
        graph,
        tiny_config.propagation_config(),
        tiny_config.num_samples,
        tiny_config.split,
    )


class TestRunExperiment:
    def test_rerun_is_bit_identical(self, tiny_config, graph) -> None:
        first = run_experiment(tiny_config, graph=graph, baselines=("random",))
        second = run_experiment(tiny_config, graph=graph, baselines=("random",))
        assert first.aggregate == second.aggregate
        assert first.graph_hash == second.graph_hash
        assert first.train_result.history == second.train_result.history
        assert (
            first.baseline_aggregates["random"]
            == second.baseline_aggregates["random"]
        )

    def test_unknown_baseline_rejected(self, tiny_config, graph) -> None:
        with pytest.raises(ValueError, match="baseline"):
            run_experiment(tiny_config, graph=graph, baselines=("oracle",))

    def test_report_count_matches_test_split(
        self, tiny_config, graph, shared_dataset
    ) -> None:
        result = run_experiment(tiny_config, graph=graph, dataset=shared_dataset)
        assert len(result.test_reports) == len(shared_dataset[1])
        assert result.aggregate.count == len(shared_dataset[1])


class TestSweep:
    def test_point_config_applies_value_and_seed(self, tiny_config) -> None:
        cfg = sweep_point_config(tiny_config, "delta", 0.15, 3)
        assert cfg.delta == 0.15
        assert cfg.seed == tiny_config.seed + 3
        assert cfg.theta == tiny_config.theta

    def test_bad_kind_rejected(self, tiny_config) -> None:
        with pytest.raises(ValueError, match="kind"):
            sweep_point_config(tiny_config, "p_low", 0.2, 0)

    def test_empty_grid_rejected(self, tiny_config, graph) -> None:
        with pytest.raises(ValueError, match="non-empty"):
            run_sweep("theta", (), tiny_config, graph=graph)

    def test_single_point_sweep_equals_plain_run(self, tiny_config, graph) -> None:
        points = run_sweep(
            "theta", (0.25,), tiny_config, graph=graph, baselines=("degree",)
        )
        assert len(points) == 1
        point = points[0]
        assert point.kind == "theta"
        assert point.value == 0.25
        assert point.seed == tiny_config.seed

        plain = run_experiment(
            sweep_point_config(tiny_config, "theta", 0.25, 0),
            graph=graph,
            baselines=("degree",),
        )
        assert point.aggregate == plain.aggregate
        assert point.baseline_f == {
            "degree": plain.baseline_aggregates["degree"].f_mean
        }


class TestAblations:
    def test_variant_whitelist(self, tiny_config) -> None:
        assert ABLATION_VARIANTS == (
            "full",
            "no_pe",
            "no_attention",
            "attention_small_degree",
            "attention_large_degree",
            "no_balance",
        )
        with pytest.raises(ValueError, match="variant"):
            run_ablation("no_graph", tiny_config)

    def test_config_mapping(self, tiny_config) -> None:
        assert ablation_config(tiny_config, "full") == tiny_config
        assert ablation_config(tiny_config, "no_pe") == tiny_config
        assert (
            ablation_config(tiny_config, "no_attention").attention_variant == "sum"
        )
        assert (
            ablation_config(tiny_config, "attention_small_degree").attention_variant
            == "degree_small"
        )
        assert (
            ablation_config(tiny_config, "attention_large_degree").attention_variant
            == "degree_large"
        )
        assert ablation_config(tiny_config, "no_balance").class_balance is False

    def test_runs_share_the_dataset(
        self, tiny_config, graph, shared_dataset
    ) -> None:
        full = run_ablation("full", tiny_config, graph=graph, dataset=shared_dataset)
        no_bal = run_ablation(
            "no_balance", tiny_config, graph=graph, dataset=shared_dataset
        )
        assert full.variant == "full"
        assert no_bal.variant == "no_balance"
        assert full.aggregate.count == no_bal.aggregate.count

    def test_no_pe_runs_with_zeroed_block(
        self, tiny_config, graph, shared_dataset
    ) -> None:
        result = run_ablation(
            "no_pe", tiny_config, graph=graph, dataset=shared_dataset
        )
        assert result.aggregate.count == len(shared_dataset[1])


class TestBaselineReports:
    def test_deterministic_per_seed(self, graph, shared_dataset) -> None:
        _, test_set = shared_dataset
        first = baseline_reports("random", test_set, graph, 6, seed=9)
        second = baseline_reports("random", test_set, graph, 6, seed=9)
        assert first == second
        other = baseline_reports("random", test_set, graph, 6, seed=10)
        assert len(other) == len(first)


def _sample_reports():
    return [
        compute_metrics([0, 1], {0, 2}, 10, frozenset({2})),
        compute_metrics([2], {2}, 10, frozenset()),
    ]


class TestTables:
    def test_provenance_line_shape(self, tiny_config) -> None:
        line = provenance_line(tiny_config.config_hash, tiny_config.seed)
        assert line.startswith("# rumorloc ")
        assert f"config={tiny_config.short_hash}" in line
        assert f"seed={tiny_config.seed}" in line

    def test_history_csv(self, tmp_path, tiny_config) -> None:
        rows = [
            HistoryRow(1, 1.5, 0.5, 0.1, 0.2, 0.15),
            HistoryRow(2, 1.2, 0.6, 0.2, 0.3, 0.25),
        ]
        path = tmp_path / "history.csv"
        write_history_csv(str(path), rows, tiny_config.config_hash, 11)
        lines = path.read_text().splitlines()
        assert lines[0] == provenance_line(tiny_config.config_hash, 11)
        assert lines[1].split(",") == [
            "epoch",
            "train_loss",
            "val_accuracy",
            "val_precision",
            "val_recall",
            "val_f",
        ]
        assert len(lines) == 4
        assert lines[2].startswith("1,1.5,")

    def test_metrics_csv_has_summary_rows(self, tmp_path, tiny_config) -> None:
        reports = _sample_reports()
        agg = aggregate_metrics(reports)
        path = tmp_path / "metrics.csv"
        write_metrics_csv(str(path), reports, agg, tiny_config.config_hash, 11)
        lines = path.read_text().splitlines()
        assert lines[1].split(",") == METRICS_COLUMNS
        assert len(lines) == 2 + len(reports) + 2
        assert lines[-2].split(",")[0] == "mean"
        assert lines[-1].split(",")[0] == "std"
        # masked recovery is blank when undefined, never a fake number
        assert lines[3].split(",")[5] == ""

    def test_metrics_csv_rewrite_is_byte_identical(
        self, tmp_path, tiny_config
    ) -> None:
        reports = _sample_reports()
        agg = aggregate_metrics(reports)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_metrics_csv(str(a), reports, agg, tiny_config.config_hash, 11)
        write_metrics_csv(str(b), reports, agg, tiny_config.config_hash, 11)
        assert a.read_bytes() == b.read_bytes()

    def test_sweep_and_ablation_headers(self, tmp_path, tiny_config) -> None:
        sweep_path = tmp_path / "sweep.csv"
        write_sweep_csv(str(sweep_path), [], tiny_config.config_hash, 11)
        assert sweep_path.read_text().splitlines()[1].split(",") == SWEEP_COLUMNS

        ablation_path = tmp_path / "ablation.csv"
        write_ablation_csv(str(ablation_path), [], tiny_config.config_hash, 11)
        assert (
            ablation_path.read_text().splitlines()[1].split(",")
            == ABLATION_COLUMNS
        )

    def test_aggregate_to_dict_keys(self) -> None:
        agg = aggregate_metrics(_sample_reports())
        data = aggregate_to_dict(agg)
        assert set(data) == {
            "count",
            "accuracy_mean",
            "accuracy_std",
            "precision_mean",
            "precision_std",
            "recall_mean",
            "recall_std",
            "f_mean",
            "f_std",
            "masked_recovery_mean",
            "masked_recovery_count",
        }
