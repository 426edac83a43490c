"""End-to-end runs, parameter sweeps, ablations, and result tables.

Every harness is deterministic: a sweep derives the seed of grid point i
as base seed + i, so a single-point sweep reproduces a plain run made
with the same effective config.  Output tables carry a provenance header
line with the tool version and config hash (never timestamps, so repeat
runs are byte-identical).
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from ._version import __version__
from .cascade import Snapshot, build_dataset
from .config import ExperimentConfig
from .datasets import resolve_graph_source
from .graph import Graph
from .training import (
    AggregateMetrics,
    BASELINE_METHODS,
    MetricsReport,
    TrainResult,
    aggregate_metrics,
    baseline_detect,
    compute_metrics,
    evaluate_snapshots,
    train,
)
from .util import spawn_rng

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = (
    "full",
    "no_pe",
    "no_attention",
    "attention_small_degree",
    "attention_large_degree",
    "no_balance",
)

SWEEP_KINDS = ("theta", "delta")

# sub-stream tag for baseline randomness
_STREAM_BASELINE = 301


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    graph_hash: str
    train_result: TrainResult
    test_reports: list[MetricsReport]
    aggregate: AggregateMetrics
    baseline_aggregates: dict[str, AggregateMetrics]


def resolve_graph(config: ExperimentConfig) -> Graph:
    return resolve_graph_source(config.dataset, config.delimiter)


def baseline_reports(
    method: str,
    snapshots: list[Snapshot],
    graph: Graph,
    k: int,
    seed: int,
) -> list[MetricsReport]:
    """Run one plumbing detector over snapshots with per-snapshot streams."""
    reports = []
    for idx, snap in enumerate(snapshots):
        predicted = baseline_detect(
            method, snap, graph, k, rng=spawn_rng(seed, _STREAM_BASELINE, idx)
        )
        reports.append(compute_metrics(predicted, snap.sources, graph.n, snap.psi))
    return reports


def run_experiment(
    config: ExperimentConfig,
    graph: Graph | None = None,
    dataset: tuple[list[Snapshot], list[Snapshot]] | None = None,
    baselines: tuple[str, ...] = (),
) -> ExperimentResult:
    """Generate (or reuse) a dataset, train, and evaluate on the test part."""
    if graph is None:
        graph = resolve_graph(config)
    if dataset is None:
        dataset = build_dataset(
            graph, config.propagation_config(), config.num_samples, config.split
        )
    train_set, test_set = dataset
    tr = train(
        train_set,
        graph,
        config.model_config(),
        config.encoding_config(),
        config.train_config(),
    )
    k_true = config.source_count(graph.n)
    reports, agg = evaluate_snapshots(
        tr.params,
        test_set,
        graph,
        config.model_config(),
        config.encoding_config(),
        mode=config.predict_mode,
        threshold=tr.selected_threshold,
        top_k=k_true,
    )
    baseline_aggs = {}
    for method in baselines:
        if method not in BASELINE_METHODS:
            raise ValueError(f"unknown baseline {method!r}")
        baseline_aggs[method] = aggregate_metrics(
            baseline_reports(method, test_set, graph, k_true, config.seed)
        )
    return ExperimentResult(
        config=config,
        graph_hash=graph.graph_hash,
        train_result=tr,
        test_reports=reports,
        aggregate=agg,
        baseline_aggregates=baseline_aggs,
    )


@dataclass
class SweepPoint:
    kind: str
    value: float
    seed: int
    aggregate: AggregateMetrics
    baseline_f: dict[str, float]


def sweep_point_config(
    config: ExperimentConfig, kind: str, value: float, index: int
) -> ExperimentConfig:
    """Effective config of one grid point: value applied, seed = base + index."""
    if kind not in SWEEP_KINDS:
        raise ValueError(f"sweep kind must be one of {SWEEP_KINDS}")
    return dataclasses.replace(
        config, **{kind: float(value)}, seed=config.seed + index
    )


def run_sweep(
    kind: str,
    grid: tuple[float, ...],
    config: ExperimentConfig,
    graph: Graph | None = None,
    baselines: tuple[str, ...] = BASELINE_METHODS,
) -> list[SweepPoint]:
    """Train and evaluate once per grid value, regenerating the dataset."""
    if not grid:
        raise ValueError("sweep grid must be non-empty")
    if graph is None:
        graph = resolve_graph(config)
    points = []
    for index, value in enumerate(grid):
        cfg_i = sweep_point_config(config, kind, value, index)
        result = run_experiment(cfg_i, graph=graph, baselines=baselines)
        points.append(
            SweepPoint(
                kind=kind,
                value=float(value),
                seed=cfg_i.seed,
                aggregate=result.aggregate,
                baseline_f={
                    m: agg.f_mean for m, agg in result.baseline_aggregates.items()
                },
            )
        )
        logger.info(
            "sweep %s=%.3g done: F=%.4f acc=%.4f",
            kind,
            value,
            result.aggregate.f_mean,
            result.aggregate.accuracy_mean,
        )
    return points


def ablation_config(config: ExperimentConfig, variant: str) -> ExperimentConfig:
    """Config with exactly one component disabled or swapped."""
    if variant == "full":
        return config
    if variant == "no_pe":
        # handled at feature-assembly time; see run_ablation
        return config
    if variant == "no_attention":
        return dataclasses.replace(config, attention_variant="sum")
    if variant == "attention_small_degree":
        return dataclasses.replace(config, attention_variant="degree_small")
    if variant == "attention_large_degree":
        return dataclasses.replace(config, attention_variant="degree_large")
    if variant == "no_balance":
        return dataclasses.replace(config, class_balance=False)
    raise ValueError(f"unknown ablation variant {variant!r}")


@dataclass
class AblationResult:
    variant: str
    aggregate: AggregateMetrics
    reports: list[MetricsReport]


def run_ablation(
    variant: str,
    config: ExperimentConfig,
    graph: Graph | None = None,
    dataset: tuple[list[Snapshot], list[Snapshot]] | None = None,
) -> AblationResult:
    """Train and evaluate one ablation variant on the config's dataset.

    All variants share the generation seed, so they see identical
    snapshots; only the disabled component differs.
    """
    if variant not in ABLATION_VARIANTS:
        raise ValueError(
            f"variant must be one of {ABLATION_VARIANTS}, got {variant!r}"
        )
    cfg = ablation_config(config, variant)
    if graph is None:
        graph = resolve_graph(cfg)
    if dataset is None:
        dataset = build_dataset(
            graph, cfg.propagation_config(), cfg.num_samples, cfg.split
        )
    train_set, test_set = dataset

    enc = cfg.encoding_config()
    if variant == "no_pe":
        enc = dataclasses.replace(enc, zero_positional=True)
    tr = train(train_set, graph, cfg.model_config(), enc, cfg.train_config())
    k_true = cfg.source_count(graph.n)
    reports, agg = evaluate_snapshots(
        tr.params,
        test_set,
        graph,
        cfg.model_config(),
        enc,
        mode=cfg.predict_mode,
        threshold=tr.selected_threshold,
        top_k=k_true,
    )
    return AblationResult(variant=variant, aggregate=agg, reports=reports)


# ----------------------------------------------------------------------
# tables; every file starts with a provenance comment line
# ----------------------------------------------------------------------


def provenance_line(config_hash: str, seed: int) -> str:
    return f"# rumorloc {__version__} config={config_hash[:12]} seed={seed}"


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_history_csv(
    path: str, history, config_hash: str, seed: int
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(provenance_line(config_hash, seed) + "\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "train_loss", "val_accuracy", "val_precision", "val_recall", "val_f"]
        )
        for row in history:
            writer.writerow(
                [
                    row.epoch,
                    _fmt(row.train_loss),
                    _fmt(row.val_accuracy),
                    _fmt(row.val_precision),
                    _fmt(row.val_recall),
                    _fmt(row.val_f),
                ]
            )


METRICS_COLUMNS = [
    "snapshot",
    "accuracy",
    "precision",
    "recall",
    "f_score",
    "masked_source_recovery",
    "tp",
    "fp",
    "fn",
    "tn",
]


def write_metrics_csv(
    path: str,
    reports: list[MetricsReport],
    aggregate: AggregateMetrics,
    config_hash: str,
    seed: int,
) -> None:
    """Per-snapshot rows plus mean and std summary rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(provenance_line(config_hash, seed) + "\n")
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for idx, rep in enumerate(reports):
            writer.writerow(
                [
                    idx,
                    _fmt(rep.accuracy),
                    _fmt(rep.precision),
                    _fmt(rep.recall),
                    _fmt(rep.f_score),
                    _fmt(rep.masked_source_recovery),
                    rep.tp,
                    rep.fp,
                    rep.fn,
                    rep.tn,
                ]
            )
        writer.writerow(
            [
                "mean",
                _fmt(aggregate.accuracy_mean),
                _fmt(aggregate.precision_mean),
                _fmt(aggregate.recall_mean),
                _fmt(aggregate.f_mean),
                _fmt(aggregate.masked_recovery_mean),
                "",
                "",
                "",
                "",
            ]
        )
        writer.writerow(
            [
                "std",
                _fmt(aggregate.accuracy_std),
                _fmt(aggregate.precision_std),
                _fmt(aggregate.recall_std),
                _fmt(aggregate.f_std),
                "",
                "",
                "",
                "",
                "",
            ]
        )


SWEEP_COLUMNS = [
    "sweep_value",
    "acc_mean",
    "acc_std",
    "f_mean",
    "f_std",
    "precision",
    "recall",
    "masked_recovery",
    "baseline_f_random",
    "baseline_f_degree",
    "baseline_f_eccentricity",
]


def sweep_row(point: SweepPoint) -> list[str]:
    agg = point.aggregate
    return [
        _fmt(point.value),
        _fmt(agg.accuracy_mean),
        _fmt(agg.accuracy_std),
        _fmt(agg.f_mean),
        _fmt(agg.f_std),
        _fmt(agg.precision_mean),
        _fmt(agg.recall_mean),
        _fmt(agg.masked_recovery_mean),
        _fmt(point.baseline_f.get("random")),
        _fmt(point.baseline_f.get("degree")),
        _fmt(point.baseline_f.get("eccentricity")),
    ]


def write_sweep_csv(
    path: str, points: list[SweepPoint], config_hash: str, seed: int
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(provenance_line(config_hash, seed) + "\n")
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for point in points:
            writer.writerow(sweep_row(point))


ABLATION_COLUMNS = [
    "variant",
    "acc_mean",
    "acc_std",
    "precision_mean",
    "recall_mean",
    "f_mean",
    "f_std",
    "masked_recovery",
]


def ablation_row(result: AblationResult) -> list[str]:
    agg = result.aggregate
    return [
        result.variant,
        _fmt(agg.accuracy_mean),
        _fmt(agg.accuracy_std),
        _fmt(agg.precision_mean),
        _fmt(agg.recall_mean),
        _fmt(agg.f_mean),
        _fmt(agg.f_std),
        _fmt(agg.masked_recovery_mean),
    ]


def write_ablation_csv(
    path: str, results: list[AblationResult], config_hash: str, seed: int
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(provenance_line(config_hash, seed) + "\n")
        writer = csv.writer(fh)
        writer.writerow(ABLATION_COLUMNS)
        for result in results:
            writer.writerow(ablation_row(result))


def aggregate_to_dict(agg: AggregateMetrics) -> dict:
    return {
        "count": agg.count,
        "accuracy_mean": agg.accuracy_mean,
        "accuracy_std": agg.accuracy_std,
        "precision_mean": agg.precision_mean,
        "precision_std": agg.precision_std,
        "recall_mean": agg.recall_mean,
        "recall_std": agg.recall_std,
        "f_mean": agg.f_mean,
        "f_std": agg.f_std,
        "masked_recovery_mean": agg.masked_recovery_mean,
        "masked_recovery_count": agg.masked_recovery_count,
    }
