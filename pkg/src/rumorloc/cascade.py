"""Heterogeneous independent-cascade simulation and snapshot datasets.

A cascade starts from a sampled source set at timestamp 0 and advances in
synchronous rounds: every node newly activated in round t-1 makes one
Bernoulli attempt per neighbor that was still negative at the start of
round t, with the spreader's own activation probability.  Each edge is
attempted at most once per direction.  Simulation halts at the end of the
first round where the positive count reaches ceil(theta * n), or earlier
when a round produces no activations.

A snapshot then hides a uniformly chosen fraction delta of all nodes (the
unknown set Psi, which may include sources); ground truth stays available
for scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .graph import OBS_NEGATIVE, OBS_POSITIVE, OBS_UNKNOWN, Graph
from .util import ceil_threshold, round_half_up, spawn_rng

SNAPSHOT_FORMAT = "rumorloc-snapshots"
SNAPSHOT_VERSION = 1


class SnapshotSchemaError(ValueError):
    """Raised when a snapshot file does not match the expected schema."""


class CascadeDiedOut(RuntimeError):
    """All simulation attempts stopped before the halting threshold."""

    def __init__(self, best: "Cascade | None", attempts: int):
        self.best = best
        self.attempts = attempts
        reached = int(best.infected.sum()) if best is not None else 0
        super().__init__(
            f"cascade died out in all {attempts} attempts "
            f"(best attempt infected {reached} nodes)"
        )


@dataclass(frozen=True)
class PropagationConfig:
    """Generation parameters for cascades and snapshots."""

    source_fraction: float = 0.05
    p_low: float = 0.1
    p_high: float = 0.5
    theta: float = 0.3
    delta: float = 0.1
    max_retries: int = 20
    exclude_sources_from_mask: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.source_fraction < 1.0:
            raise ValueError("source_fraction must lie in (0, 1)")
        if not 0.0 <= self.p_low <= self.p_high <= 1.0:
            raise ValueError("need 0 <= p_low <= p_high <= 1")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class Cascade:
    """Complete ground-truth outcome of one simulation."""

    sources: frozenset[int]
    infected: np.ndarray
    timestamps: np.ndarray
    spreaders: np.ndarray
    probs: np.ndarray
    halted_at_theta: bool

    @property
    def n(self) -> int:
        return int(self.infected.shape[0])

    @property
    def num_infected(self) -> int:
        return int(self.infected.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cascade):
            return NotImplemented
        return (
            self.sources == other.sources
            and self.halted_at_theta == other.halted_at_theta
            and np.array_equal(self.infected, other.infected)
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.spreaders, other.spreaders)
            and np.array_equal(self.probs, other.probs)
        )


@dataclass(frozen=True)
class Snapshot:
    """A cascade plus the hidden-node set presented to detectors."""

    cascade: Cascade
    psi: frozenset[int]
    delta: float
    theta: float
    graph_hash: str
    attempts: int = 1

    @property
    def n(self) -> int:
        return self.cascade.n

    @property
    def sources(self) -> frozenset[int]:
        return self.cascade.sources

    @property
    def masked_sources(self) -> frozenset[int]:
        return self.cascade.sources & self.psi

    def observed_states(self) -> np.ndarray:
        """Tri-state view: +1 positive, -1 negative, 0 unknown."""
        states = np.where(self.cascade.infected, OBS_POSITIVE, OBS_NEGATIVE)
        states = states.astype(np.int64)
        if self.psi:
            states[sorted(self.psi)] = OBS_UNKNOWN
        return states

    def observed_timestamps(self) -> np.ndarray:
        """Timestamps for observed-positive nodes, -1 everywhere else."""
        ts = self.cascade.timestamps.copy()
        ts[~self.cascade.infected] = -1
        if self.psi:
            ts[sorted(self.psi)] = -1
        return ts

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Snapshot):
            return NotImplemented
        return (
            self.cascade == other.cascade
            and self.psi == other.psi
            and self.delta == other.delta
            and self.theta == other.theta
            and self.graph_hash == other.graph_hash
            and self.attempts == other.attempts
        )


def sample_sources(graph: Graph, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Uniformly sample max(1, round(fraction * n)) distinct sources, sorted."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    count = max(1, round_half_up(fraction * graph.n))
    if count >= graph.n:
        raise ValueError(f"source count {count} must be smaller than n={graph.n}")
    chosen = rng.choice(graph.n, size=count, replace=False)
    return np.sort(chosen).astype(np.int64)


def sample_probabilities(
    graph: Graph, p_low: float, p_high: float, rng: np.random.Generator
) -> np.ndarray:
    """Per-node activation probabilities drawn i.i.d. from U(p_low, p_high)."""
    if not 0.0 <= p_low <= p_high <= 1.0:
        raise ValueError("need 0 <= p_low <= p_high <= 1")
    return rng.uniform(p_low, p_high, size=graph.n)


def simulate_ic(
    graph: Graph,
    sources: Iterable[int],
    probs: np.ndarray,
    theta: float,
    rng: np.random.Generator,
) -> Cascade:
    """Run one synchronous independent cascade to the theta halting point.

    When several round-t spreaders hit the same target, the recorded
    spreader is the smallest id among the successful attempts.  Timestamps
    are round indices; sources carry 0, never-infected nodes -1.
    """
    n = graph.n
    src_arr = np.asarray(sorted(set(int(s) for s in sources)), dtype=np.int64)
    if src_arr.size == 0:
        raise ValueError("need at least one source")
    if src_arr[0] < 0 or src_arr[-1] >= n:
        raise ValueError("source id out of range")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (n,):
        raise ValueError(f"probs must have shape ({n},)")
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")

    threshold = ceil_threshold(theta * n)
    infected = np.zeros(n, dtype=bool)
    timestamps = np.full(n, -1, dtype=np.int64)
    spreaders = np.full(n, -1, dtype=np.int64)
    infected[src_arr] = True
    timestamps[src_arr] = 0

    halted = int(infected.sum()) >= threshold
    t = 0
    while not halted:
        t += 1
        frontier = np.nonzero(timestamps == t - 1)[0]
        at_round_start = infected.copy()
        spreader_parts: list[np.ndarray] = []
        target_parts: list[np.ndarray] = []
        for f in frontier:
            nbrs = graph.neighbor_lists[int(f)]
            open_targets = nbrs[~at_round_start[nbrs]]
            if open_targets.size:
                spreader_parts.append(np.full(open_targets.size, f, dtype=np.int64))
                target_parts.append(open_targets)
        if not spreader_parts:
            break
        spreader_arr = np.concatenate(spreader_parts)
        target_arr = np.concatenate(target_parts)
        draws = rng.random(spreader_arr.size)
        success = draws < probs[spreader_arr]
        if not np.any(success):
            break
        succ_sp = spreader_arr[success]
        succ_tg = target_arr[success]
        # first occurrence per target = smallest spreader (rows are ordered
        # by ascending spreader id)
        uniq_tg, first_idx = np.unique(succ_tg, return_index=True)
        infected[uniq_tg] = True
        timestamps[uniq_tg] = t
        spreaders[uniq_tg] = succ_sp[first_idx]
        if int(infected.sum()) >= threshold:
            halted = True

    return Cascade(
        sources=frozenset(int(s) for s in src_arr),
        infected=infected,
        timestamps=timestamps,
        spreaders=spreaders,
        probs=probs.copy(),
        halted_at_theta=halted,
    )


def generate_snapshot(
    graph: Graph, config: PropagationConfig, rng: np.random.Generator
) -> Snapshot:
    """Sample sources and probabilities, simulate, retry dead cascades, mask.

    Raises CascadeDiedOut (carrying the largest failed cascade) when
    1 + max_retries attempts all stop below the halting threshold.
    """
    best: Cascade | None = None
    total_attempts = config.max_retries + 1
    for attempt in range(1, total_attempts + 1):
        sources = sample_sources(graph, config.source_fraction, rng)
        probs = sample_probabilities(graph, config.p_low, config.p_high, rng)
        cascade = simulate_ic(graph, sources, probs, config.theta, rng)
        if cascade.halted_at_theta:
            psi = _sample_mask(graph, config, cascade, rng)
            return Snapshot(
                cascade=cascade,
                psi=psi,
                delta=config.delta,
                theta=config.theta,
                graph_hash=graph.graph_hash,
                attempts=attempt,
            )
        if best is None or cascade.num_infected > best.num_infected:
            best = cascade
    raise CascadeDiedOut(best, total_attempts)


def _sample_mask(
    graph: Graph,
    config: PropagationConfig,
    cascade: Cascade,
    rng: np.random.Generator,
) -> frozenset[int]:
    size = round_half_up(config.delta * graph.n)
    if size == 0:
        return frozenset()
    if config.exclude_sources_from_mask:
        pool = np.setdiff1d(np.arange(graph.n), sorted(cascade.sources))
    else:
        pool = np.arange(graph.n)
    if size > pool.size:
        raise ValueError("mask size exceeds available nodes")
    chosen = rng.choice(pool, size=size, replace=False)
    return frozenset(int(v) for v in chosen)


def build_dataset(
    graph: Graph,
    config: PropagationConfig,
    num_samples: int,
    split: float = 0.8,
    seed: int | None = None,
) -> tuple[list[Snapshot], list[Snapshot]]:
    """Generate independent snapshots and split them train/test.

    Sample i uses its own stream derived from (master seed, i), so the
    dataset does not depend on generation order.  The first
    round(split * num_samples) snapshots form the train set.
    """
    if num_samples < 5:
        raise ValueError("need at least 5 samples for a meaningful split")
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie in (0, 1)")
    master = config.seed if seed is None else seed
    snapshots = [
        generate_snapshot(graph, config, spawn_rng(master, i))
        for i in range(num_samples)
    ]
    n_train = round_half_up(split * num_samples)
    if n_train == 0 or n_train == num_samples:
        raise ValueError(f"split {split} leaves an empty part for {num_samples} samples")
    return snapshots[:n_train], snapshots[n_train:]


def check_cascade(cascade: Cascade, graph: Graph) -> None:
    """Assert internal consistency; used by tests and file validation.

    Checks causality (every non-source positive was hit by an adjacent
    spreader one round earlier) and field coherence.
    """
    n = cascade.n
    if n != graph.n:
        raise AssertionError("cascade size does not match graph")
    inf = cascade.infected
    ts = cascade.timestamps
    sp = cascade.spreaders
    if not np.all((ts >= 0) == inf):
        raise AssertionError("timestamps must be set exactly on infected nodes")
    for s in cascade.sources:
        if ts[s] != 0:
            raise AssertionError("sources must carry timestamp 0")
    if np.any((ts == 0) & ~np.isin(np.arange(n), sorted(cascade.sources))):
        raise AssertionError("timestamp 0 is reserved for sources")
    for v in range(n):
        if inf[v] and v not in cascade.sources:
            s = int(sp[v])
            if s < 0 or not inf[s]:
                raise AssertionError(f"node {v} lacks an infected spreader")
            if ts[s] != ts[v] - 1:
                raise AssertionError(f"spreader of {v} not one round earlier")
            if not graph.has_edge(s, v):
                raise AssertionError(f"spreader of {v} not adjacent")
        if not inf[v] and sp[v] != -1:
            raise AssertionError("negative nodes cannot have spreaders")


# ----------------------------------------------------------------------
# serialization: line-delimited JSON, one snapshot per record
# ----------------------------------------------------------------------


def _snapshot_record(snapshot: Snapshot) -> dict:
    c = snapshot.cascade
    return {
        "version": SNAPSHOT_VERSION,
        "graph_hash": snapshot.graph_hash,
        "n": c.n,
        "sources": sorted(c.sources),
        "states": [int(x) for x in c.infected.astype(np.int64)],
        "timestamps": [int(x) for x in c.timestamps],
        "spreaders": [int(x) for x in c.spreaders],
        "probs": [float(x) for x in c.probs],
        "psi": sorted(snapshot.psi),
        "delta": float(snapshot.delta),
        "theta": float(snapshot.theta),
        "halted_at_theta": bool(c.halted_at_theta),
        "attempts": int(snapshot.attempts),
    }


_RECORD_FIELDS = frozenset(
    {
        "version",
        "graph_hash",
        "n",
        "sources",
        "states",
        "timestamps",
        "spreaders",
        "probs",
        "psi",
        "delta",
        "theta",
        "halted_at_theta",
        "attempts",
    }
)


def save_snapshots(snapshots: list[Snapshot], path: str) -> None:
    """Write snapshots as a header line plus one JSON record per snapshot."""
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "count": len(snapshots),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for snap in snapshots:
            fh.write(json.dumps(_snapshot_record(snap), sort_keys=True) + "\n")


def _parse_record(obj: dict, lineno: int) -> Snapshot:
    missing = _RECORD_FIELDS - set(obj)
    if missing:
        raise SnapshotSchemaError(f"record {lineno}: missing fields {sorted(missing)}")
    if obj["version"] != SNAPSHOT_VERSION:
        raise SnapshotSchemaError(
            f"record {lineno}: unsupported version {obj['version']!r}"
        )
    n = int(obj["n"])
    arrays = {}
    for key, dtype in (
        ("states", np.int64),
        ("timestamps", np.int64),
        ("spreaders", np.int64),
        ("probs", np.float64),
    ):
        arr = np.asarray(obj[key], dtype=dtype)
        if arr.shape != (n,):
            raise SnapshotSchemaError(f"record {lineno}: field {key} has wrong length")
        arrays[key] = arr
    cascade = Cascade(
        sources=frozenset(int(s) for s in obj["sources"]),
        infected=arrays["states"].astype(bool),
        timestamps=arrays["timestamps"],
        spreaders=arrays["spreaders"],
        probs=arrays["probs"],
        halted_at_theta=bool(obj["halted_at_theta"]),
    )
    return Snapshot(
        cascade=cascade,
        psi=frozenset(int(v) for v in obj["psi"]),
        delta=float(obj["delta"]),
        theta=float(obj["theta"]),
        graph_hash=str(obj["graph_hash"]),
        attempts=int(obj["attempts"]),
    )


def load_snapshots(path: str) -> list[Snapshot]:
    """Read a snapshot file, validating the header and every record."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SnapshotSchemaError(f"{path}: empty file, header expected")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SnapshotSchemaError(f"{path}: bad header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotSchemaError(f"{path}: not a snapshot file")
    if header.get("version") != SNAPSHOT_VERSION:
        raise SnapshotSchemaError(
            f"{path}: unsupported version {header.get('version')!r}"
        )
    snapshots: list[Snapshot] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SnapshotSchemaError(f"{path}:{lineno}: bad record: {exc}") from exc
        snapshots.append(_parse_record(obj, lineno))
    if header.get("count") != len(snapshots):
        raise SnapshotSchemaError(
            f"{path}: header count {header.get('count')} != records {len(snapshots)}"
        )
    return snapshots
