"""Shared fixtures: small canonical graphs and a fast experiment config."""

from __future__ import annotations

import numpy as np
import pytest

from rumorloc import ExperimentConfig, Graph, Snapshot, builtin_graph
from rumorloc.cascade import Cascade
from rumorloc.util import spawn_rng


@pytest.fixture(scope="session")
def path4() -> Graph:
    return Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture(scope="session")
def triangle() -> Graph:
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture(scope="session")
def star20() -> Graph:
    return Graph.from_edges(21, [(0, leaf) for leaf in range(1, 21)])


@pytest.fixture(scope="session")
def football() -> Graph:
    return builtin_graph("football115")


def random_connected_graph(n: int, extra_edges: int, rng: np.random.Generator) -> Graph:
    """Random spanning tree plus extra edges; always connected."""
    edges = {(int(rng.integers(0, i)), i) for i in range(1, n)}
    while extra_edges > 0:
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        key = (int(min(i, j)), int(max(i, j)))
        if key not in edges:
            edges.add(key)
            extra_edges -= 1
    return Graph.from_edges(n, sorted(edges))


def make_snapshot(
    graph: Graph,
    sources,
    timestamps,
    spreaders,
    psi=(),
    theta: float = 0.3,
) -> Snapshot:
    """Snapshot with hand-written ground truth, no simulation involved."""
    ts = np.asarray(timestamps, dtype=np.int64)
    cascade = Cascade(
        sources=frozenset(sources),
        infected=ts >= 0,
        timestamps=ts,
        spreaders=np.asarray(spreaders, dtype=np.int64),
        probs=np.full(graph.n, 0.5),
        halted_at_theta=True,
    )
    return Snapshot(
        cascade=cascade,
        psi=frozenset(psi),
        delta=len(psi) / graph.n,
        theta=theta,
        graph_hash=graph.graph_hash,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return spawn_rng(20260819)


@pytest.fixture(scope="session")
def tiny_config() -> ExperimentConfig:
    """Small but complete experiment config for harness and CLI tests."""
    return ExperimentConfig(
        dataset="builtin:football115",
        num_samples=12,
        split=0.75,
        k=6,
        heads=2,
        hidden_width=16,
        epochs=8,
        patience=8,
        seed=11,
        out_dir="unused",
    )
