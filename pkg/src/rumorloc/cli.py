"""Command-line interface.

Subcommands: simulate, train, eval, sweep, ablate, report.  Exit codes:
0 success, 2 validation problems (config, schema, checkpoint), 3 runtime
failures in simulation or training, 4 I/O errors.  All randomness flows
from the config seed, so reruns with the same inputs produce byte-identical
artifacts.  Execution is serial; --serial documents that guarantee.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from ._version import __version__
from .cascade import (
    CascadeDiedOut,
    SnapshotSchemaError,
    build_dataset,
    load_snapshots,
    save_snapshots,
)
from .config import ConfigError, ExperimentConfig, apply_overrides, load_config
from .experiments import (
    ABLATION_VARIANTS,
    SWEEP_KINDS,
    AblationResult,
    SweepPoint,
    aggregate_to_dict,
    baseline_reports,
    resolve_graph,
    run_ablation,
    run_experiment,
    sweep_point_config,
    write_ablation_csv,
    write_history_csv,
    write_metrics_csv,
    write_sweep_csv,
)
from .graph import GraphFormatError
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .training import (
    AggregateMetrics,
    BASELINE_METHODS,
    TrainingDiverged,
    aggregate_metrics,
    evaluate_snapshots,
    train,
)
from .util import round_half_up

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rumorloc",
        description="Rumor source detection on graphs with incomplete observations",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (flat keys)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable); flags beat the file",
        )
        p.add_argument(
            "--serial",
            action="store_true",
            help="force serial execution (already the only mode; kept for scripts)",
        )
        p.add_argument("-v", "--verbose", action="store_true")

    p_sim = sub.add_parser("simulate", help="generate a snapshot dataset")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_train = sub.add_parser("train", help="train the detector on snapshots")
    add_common(p_train)
    p_train.add_argument("--snapshots", help="snapshot file (default OUT/snapshots.jsonl)")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p_eval)
    p_eval.add_argument("--snapshots", help="snapshot file (default OUT/snapshots.jsonl)")
    p_eval.add_argument("--checkpoint", help="checkpoint file (default OUT/checkpoint.bin)")
    p_eval.add_argument(
        "--subset",
        choices=("test", "train", "all"),
        default="test",
        help="which part of the snapshot file to score (default test)",
    )
    p_eval.add_argument(
        "--baseline",
        action="append",
        default=[],
        choices=BASELINE_METHODS + ("all",),
        help="also score a plumbing baseline (repeatable)",
    )
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="sweep theta or delta over the config grid")
    add_common(p_sweep)
    p_sweep.add_argument("--kind", choices=SWEEP_KINDS, required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_abl = sub.add_parser("ablate", help="run ablation variants")
    add_common(p_abl)
    p_abl.add_argument(
        "--variant",
        action="append",
        default=[],
        choices=ABLATION_VARIANTS + ("all",),
        help="variant to run (repeatable; default all)",
    )
    p_abl.set_defaults(func=cmd_ablate)

    p_rep = sub.add_parser("report", help="summarize artifacts in an output directory")
    add_common(p_rep)
    p_rep.set_defaults(func=cmd_report)

    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    direct = {}
    if args.seed is not None:
        direct["seed"] = args.seed
    if args.out is not None:
        direct["out_dir"] = args.out
    if direct:
        try:
            cfg = dataclasses.replace(cfg, **direct)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _out_path(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_and_check_snapshots(path: str, graph) -> list:
    snapshots = load_snapshots(path)
    if not snapshots:
        raise SnapshotSchemaError(f"{path}: file contains no snapshots")
    for idx, snap in enumerate(snapshots):
        if snap.graph_hash != graph.graph_hash:
            raise SnapshotSchemaError(
                f"{path}: snapshot {idx} was generated on a different graph "
                f"(hash {snap.graph_hash[:12]}.. vs {graph.graph_hash[:12]}..)"
            )
    return snapshots


def _split_subset(snapshots: list, split: float, subset: str) -> list:
    n_train = round_half_up(split * len(snapshots))
    if subset == "train":
        return snapshots[:n_train]
    if subset == "test":
        return snapshots[n_train:]
    return snapshots


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    graph = resolve_graph(cfg)
    train_set, test_set = build_dataset(
        graph, cfg.propagation_config(), cfg.num_samples, cfg.split
    )
    snapshots = train_set + test_set
    out_file = _out_path(cfg, "snapshots.jsonl")
    save_snapshots(snapshots, out_file)
    rows = [
        {
            "index": idx,
            "infected": snap.cascade.num_infected,
            "attempts": snap.attempts,
            "psi_size": len(snap.psi),
            "masked_sources": len(snap.masked_sources),
        }
        for idx, snap in enumerate(snapshots)
    ]
    report = {
        "version": __version__,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "graph_hash": graph.graph_hash,
        "num_samples": len(snapshots),
        "num_train": len(train_set),
        "num_test": len(test_set),
        "snapshots": rows,
    }
    _write_json(_out_path(cfg, "simulate_report.json"), report)
    print(
        f"simulate: wrote {len(snapshots)} snapshots "
        f"({len(train_set)} train / {len(test_set)} test) to {out_file}"
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    graph = resolve_graph(cfg)
    snap_path = args.snapshots or _out_path(cfg, "snapshots.jsonl")
    snapshots = _load_and_check_snapshots(snap_path, graph)
    train_set = _split_subset(snapshots, cfg.split, "train")
    if len(train_set) < 2:
        raise ConfigError("training subset has fewer than 2 snapshots")
    result = train(
        train_set,
        graph,
        cfg.model_config(),
        cfg.encoding_config(),
        cfg.train_config(),
    )
    ckpt_path = _out_path(cfg, "checkpoint.bin")
    save_checkpoint(
        ckpt_path,
        result.params,
        cfg.model_config(),
        cfg.encoding_config(),
        seed=cfg.seed,
        epoch=result.best_epoch,
        threshold=result.selected_threshold,
    )
    write_history_csv(
        _out_path(cfg, "history.csv"), result.history, cfg.config_hash, cfg.seed
    )
    print(
        f"train: {len(result.history)} epochs, best val F "
        f"{result.best_val_f:.4f} at epoch {result.best_epoch}; "
        f"checkpoint -> {ckpt_path}"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    graph = resolve_graph(cfg)
    snap_path = args.snapshots or _out_path(cfg, "snapshots.jsonl")
    snapshots = _load_and_check_snapshots(snap_path, graph)
    subset = _split_subset(snapshots, cfg.split, args.subset)
    if not subset:
        raise ConfigError(f"subset {args.subset!r} selects no snapshots")
    ckpt_path = args.checkpoint or _out_path(cfg, "checkpoint.bin")
    ckpt = load_checkpoint(ckpt_path)
    if ckpt.encoding_config != cfg.encoding_config():
        logger.warning(
            "checkpoint encoding %s differs from config %s; using checkpoint",
            ckpt.encoding_config,
            cfg.encoding_config(),
        )
    k_true = cfg.source_count(graph.n)
    reports, agg = evaluate_snapshots(
        ckpt.params,
        subset,
        graph,
        ckpt.model_config,
        ckpt.encoding_config,
        mode=cfg.predict_mode,
        threshold=ckpt.threshold,
        top_k=k_true,
    )
    methods: tuple[str, ...] = tuple(
        BASELINE_METHODS if "all" in args.baseline else dict.fromkeys(args.baseline)
    )
    baseline_aggs: dict[str, AggregateMetrics] = {}
    for method in methods:
        baseline_aggs[method] = aggregate_metrics(
            baseline_reports(method, subset, graph, k_true, cfg.seed)
        )
    write_metrics_csv(
        _out_path(cfg, f"metrics_{args.subset}.csv"),
        reports,
        agg,
        cfg.config_hash,
        cfg.seed,
    )
    summary = {
        "version": __version__,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "graph_hash": graph.graph_hash,
        "snapshot_file": os.path.basename(snap_path),
        "subset": args.subset,
        "count": len(subset),
        "checkpoint_epoch": ckpt.epoch,
        "metrics": aggregate_to_dict(agg),
        "baselines": {m: aggregate_to_dict(a) for m, a in baseline_aggs.items()},
    }
    _write_json(_out_path(cfg, f"summary_{args.subset}.json"), summary)
    print(
        f"eval[{args.subset}]: n={len(subset)} acc={agg.accuracy_mean:.4f} "
        f"P={agg.precision_mean:.4f} R={agg.recall_mean:.4f} F={agg.f_mean:.4f}"
    )
    return EXIT_OK


def _point_path(out_dir: str, kind: str, index: int, value: float) -> str:
    return os.path.join(out_dir, f"sweep_{kind}_point_{index}_{value:g}.json")


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    graph = resolve_graph(cfg)
    grid = cfg.theta_grid if args.kind == "theta" else cfg.delta_grid
    os.makedirs(cfg.out_dir, exist_ok=True)
    points: list[SweepPoint] = []
    for index, value in enumerate(grid):
        point_file = _point_path(cfg.out_dir, args.kind, index, value)
        cached = _load_sweep_point(point_file, cfg, args.kind, value)
        if cached is not None:
            logger.info("sweep point %s=%g already done, skipping", args.kind, value)
            points.append(cached)
            continue
        cfg_i = sweep_point_config(cfg, args.kind, value, index)
        result = run_experiment(cfg_i, graph=graph, baselines=BASELINE_METHODS)
        point = SweepPoint(
            kind=args.kind,
            value=float(value),
            seed=cfg_i.seed,
            aggregate=result.aggregate,
            baseline_f={
                m: a.f_mean for m, a in result.baseline_aggregates.items()
            },
        )
        _write_json(
            point_file,
            {
                "base_config_hash": cfg.config_hash,
                "kind": args.kind,
                "value": point.value,
                "seed": point.seed,
                "aggregate": aggregate_to_dict(point.aggregate),
                "baseline_f": point.baseline_f,
            },
        )
        points.append(point)
    table_path = _out_path(cfg, f"sweep_{args.kind}.csv")
    write_sweep_csv(table_path, points, cfg.config_hash, cfg.seed)
    print(f"sweep[{args.kind}]: {len(points)} points -> {table_path}")
    return EXIT_OK


def _load_sweep_point(
    path: str, cfg: ExperimentConfig, kind: str, value: float
) -> SweepPoint | None:
    """Reload a completed grid point; stale or foreign points are redone."""
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if data.get("base_config_hash") != cfg.config_hash:
            return None
        if data.get("kind") != kind or data.get("value") != float(value):
            return None
        agg = AggregateMetrics(**data["aggregate"])
        return SweepPoint(
            kind=kind,
            value=float(value),
            seed=int(data["seed"]),
            aggregate=agg,
            baseline_f={str(k): float(v) for k, v in data["baseline_f"].items()},
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        logger.warning("ignoring unreadable sweep point %s", path)
        return None


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    graph = resolve_graph(cfg)
    variants = (
        ABLATION_VARIANTS
        if not args.variant or "all" in args.variant
        else tuple(dict.fromkeys(args.variant))
    )
    dataset = build_dataset(
        graph, cfg.propagation_config(), cfg.num_samples, cfg.split
    )
    results: list[AblationResult] = []
    for variant in variants:
        result = run_ablation(variant, cfg, graph=graph, dataset=dataset)
        results.append(result)
        agg = result.aggregate
        print(
            f"ablate[{variant}]: acc={agg.accuracy_mean:.4f} "
            f"F={agg.f_mean:.4f} recovery="
            + (
                f"{agg.masked_recovery_mean:.4f}"
                if agg.masked_recovery_mean is not None
                else "n/a"
            )
        )
    table_path = _out_path(cfg, "ablation.csv")
    write_ablation_csv(table_path, results, cfg.config_hash, cfg.seed)
    print(f"ablate: {len(results)} variants -> {table_path}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = cfg.out_dir
    if not os.path.isdir(out_dir):
        raise ConfigError(f"output directory {out_dir!r} does not exist")
    found = False
    for name in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, name)
        if name.endswith(".json") and not name.startswith("sweep_"):
            found = True
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            print(f"== {name} ==")
            if "metrics" in data:
                m = data["metrics"]
                print(
                    f"  subset={data.get('subset')} count={data.get('count')} "
                    f"acc={m['accuracy_mean']:.4f} F={m['f_mean']:.4f}"
                )
                for bname, bm in data.get("baselines", {}).items():
                    print(f"  baseline {bname}: F={bm['f_mean']:.4f}")
            elif "num_samples" in data:
                print(
                    f"  snapshots={data['num_samples']} "
                    f"train={data.get('num_train')} test={data.get('num_test')}"
                )
        elif name.endswith(".csv"):
            found = True
            print(f"== {name} ==")
            with open(path, "r", encoding="utf-8") as fh:
                lines = [ln for ln in fh.read().splitlines() if ln]
            for line in lines[:2] + lines[-2:] if len(lines) > 4 else lines:
                print(f"  {line}")
    if not found:
        print(f"report: no artifacts found in {out_dir}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (
        ConfigError,
        GraphFormatError,
        SnapshotSchemaError,
        CheckpointError,
        ValueError,
    ) as exc:
        logger.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except (CascadeDiedOut, TrainingDiverged, FloatingPointError) as exc:
        logger.error("runtime failure: %s", exc)
        return EXIT_RUNTIME
    except OSError as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
