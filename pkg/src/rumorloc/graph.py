"""Undirected simple graphs with contiguous integer node ids.

Nodes are always 0..n-1.  Edge lists loaded from disk may use arbitrary
string labels; labels are mapped to ids by sorted order and the mapping is
kept on the graph for reporting.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Tri-state observation codes shared across modules.
OBS_POSITIVE = 1
OBS_NEGATIVE = -1
OBS_UNKNOWN = 0


class GraphFormatError(ValueError):
    """Raised for malformed edge-list input."""


@dataclass(frozen=True)
class LoadReport:
    """Cleaning statistics from one edge-list load."""

    nodes: int
    edges: int
    self_loops_dropped: int
    duplicates_dropped: int
    comment_lines: int
    components: int


@dataclass(frozen=True)
class Neighborhoods:
    """Flattened neighborhoods, sorted by (tgt, src).

    One row per directed pair (tgt, src) with src in N(tgt); when
    ``include_self`` is set every node also pairs with itself.  ``offsets``
    delimits the contiguous segment of rows belonging to each tgt node.
    """

    include_self: bool
    tgt: np.ndarray
    src: np.ndarray
    offsets: np.ndarray
    counts: np.ndarray

    @property
    def num_pairs(self) -> int:
        return int(self.tgt.shape[0])


@dataclass(frozen=True)
class Graph:
    """Immutable undirected simple graph.

    ``edges`` is a strictly sorted tuple of canonical (i, j) pairs with
    i < j.  Use :meth:`from_edges` to build one from unnormalized input.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        prev = None
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i}, {j}) not canonical for n={self.n}")
            if prev is not None and (i, j) <= prev:
                raise ValueError(f"edges not strictly sorted at ({i}, {j})")
            prev = (i, j)
        if self.labels is not None and len(self.labels) != self.n:
            raise ValueError("labels length must equal n")

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int]],
        labels: Sequence[str] | None = None,
    ) -> "Graph":
        """Canonicalize (swap ends, dedupe, sort) and build a Graph.

        Self-loops are rejected; dropping them is the loader's job.
        """
        canon = set()
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop ({i}, {j}) not allowed")
            canon.add((i, j) if i < j else (j, i))
        return cls(n, tuple(sorted(canon)), tuple(labels) if labels else None)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _edge_array(self) -> np.ndarray:
        if not self.edges:
            return np.empty((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        ea = self._edge_array
        np.add.at(deg, ea[:, 0], 1)
        np.add.at(deg, ea[:, 1], 1)
        return deg

    def degree(self, v: int) -> int:
        if not 0 <= v < self.n:
            raise ValueError(f"node {v} out of range for n={self.n}")
        return int(self.degrees[v])

    @cached_property
    def neighbor_lists(self) -> tuple[np.ndarray, ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(np.asarray(sorted(a), dtype=np.int64) for a in nbrs)

    def neighbors(self, v: int) -> np.ndarray:
        if not 0 <= v < self.n:
            raise ValueError(f"node {v} out of range for n={self.n}")
        return self.neighbor_lists[v]

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        a, b = (i, j) if i < j else (j, i)
        return (a, b) in self._edge_set

    @cached_property
    def _edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    def adjacency_matrix(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency as float64."""
        a = np.zeros((self.n, self.n), dtype=np.float64)
        ea = self._edge_array
        a[ea[:, 0], ea[:, 1]] = 1.0
        a[ea[:, 1], ea[:, 0]] = 1.0
        return a

    @cached_property
    def graph_hash(self) -> str:
        """SHA-256 over node count and the canonical edge list."""
        h = hashlib.sha256()
        h.update(f"n={self.n}".encode())
        for i, j in self.edges:
            h.update(f";{i},{j}".encode())
        return h.hexdigest()

    @cached_property
    def connected_components(self) -> tuple[tuple[int, ...], ...]:
        """Components as sorted node tuples, ordered by smallest member."""
        seen = np.zeros(self.n, dtype=bool)
        comps: list[tuple[int, ...]] = []
        for start in range(self.n):
            if seen[start]:
                continue
            stack = [start]
            seen[start] = True
            comp = []
            while stack:
                v = stack.pop()
                comp.append(v)
                for u in self.neighbor_lists[v]:
                    ui = int(u)
                    if not seen[ui]:
                        seen[ui] = True
                        stack.append(ui)
            comps.append(tuple(sorted(comp)))
        return tuple(comps)

    def neighborhoods(self, include_self: bool) -> Neighborhoods:
        return self._hoods_self if include_self else self._hoods_plain

    @cached_property
    def _hoods_self(self) -> Neighborhoods:
        return _build_neighborhoods(self, include_self=True)

    @cached_property
    def _hoods_plain(self) -> Neighborhoods:
        return _build_neighborhoods(self, include_self=False)


def _build_neighborhoods(graph: Graph, include_self: bool) -> Neighborhoods:
    tgt_parts: list[np.ndarray] = []
    src_parts: list[np.ndarray] = []
    counts = np.zeros(graph.n, dtype=np.int64)
    for v in range(graph.n):
        nbrs = graph.neighbor_lists[v]
        if include_self:
            nbrs = np.sort(np.append(nbrs, v))
        counts[v] = nbrs.shape[0]
        tgt_parts.append(np.full(nbrs.shape[0], v, dtype=np.int64))
        src_parts.append(nbrs)
    tgt = np.concatenate(tgt_parts) if tgt_parts else np.empty(0, dtype=np.int64)
    src = np.concatenate(src_parts) if src_parts else np.empty(0, dtype=np.int64)
    offsets = np.zeros(graph.n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return Neighborhoods(
        include_self=include_self, tgt=tgt, src=src, offsets=offsets, counts=counts
    )


@dataclass(frozen=True)
class SubgraphMap:
    """Mapping between original node ids and induced-subgraph ids.

    ``kept`` is strictly increasing, so subgraph id k corresponds to
    original id kept[k].
    """

    kept: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.kept, self.kept[1:])):
            raise ValueError("kept ids must be strictly increasing")

    def __len__(self) -> int:
        return len(self.kept)

    @cached_property
    def _inverse(self) -> dict[int, int]:
        return {orig: sub for sub, orig in enumerate(self.kept)}

    def to_subgraph(self, original_id: int) -> int | None:
        """Subgraph id for an original node, or None if it was dropped."""
        return self._inverse.get(original_id)

    def to_original(self, subgraph_id: int) -> int:
        return self.kept[subgraph_id]

    def contains(self, original_id: int) -> bool:
        return original_id in self._inverse


def _sort_labels(labels: set[str]) -> list[str]:
    """Sort labels numerically when every label parses as an integer."""
    try:
        return sorted(labels, key=lambda s: (int(s), s))
    except ValueError:
        return sorted(labels)


def load_edge_list(path: str, delimiter: str | None = None) -> tuple[Graph, LoadReport]:
    """Load an undirected graph from a text edge list.

    Each non-comment line holds exactly two node labels separated by
    ``delimiter`` (None means any whitespace).  Lines starting with '#' or
    '%' are comments.  Labels map to ids 0..n-1 in sorted order (numeric
    order when all labels are integers).  Self-loops and duplicate edges
    are dropped and counted in the returned load report, which is also
    emitted as a log line.
    """
    comment_lines = 0
    raw_pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#") or stripped.startswith("%"):
                comment_lines += 1
                continue
            tokens = stripped.split(delimiter)
            if len(tokens) != 2:
                raise GraphFormatError(
                    f"{path}:{lineno}: expected 2 tokens, got {len(tokens)}"
                )
            raw_pairs.append((tokens[0], tokens[1]))

    label_set = {t for pair in raw_pairs for t in pair}
    labels = _sort_labels(label_set)
    ids = {lab: i for i, lab in enumerate(labels)}

    self_loops = 0
    duplicates = 0
    edge_set: set[tuple[int, int]] = set()
    for a, b in raw_pairs:
        i, j = ids[a], ids[b]
        if i == j:
            self_loops += 1
            continue
        key = (i, j) if i < j else (j, i)
        if key in edge_set:
            duplicates += 1
        else:
            edge_set.add(key)

    if not edge_set:
        raise GraphFormatError(f"{path}: no usable edges after cleaning")

    graph = Graph(len(labels), tuple(sorted(edge_set)), tuple(labels))
    report = LoadReport(
        nodes=graph.n,
        edges=graph.num_edges,
        self_loops_dropped=self_loops,
        duplicates_dropped=duplicates,
        comment_lines=comment_lines,
        components=len(graph.connected_components),
    )
    logger.info(
        "edge_list_loaded path=%s nodes=%d edges=%d self_loops_dropped=%d "
        "duplicates_dropped=%d comment_lines=%d components=%d",
        path,
        report.nodes,
        report.edges,
        report.self_loops_dropped,
        report.duplicates_dropped,
        report.comment_lines,
        report.components,
    )
    return graph, report


def induced_positive_subgraph(
    graph: Graph, observed_states: np.ndarray
) -> tuple[Graph, SubgraphMap]:
    """Induce the subgraph on observed-positive plus unknown nodes.

    ``observed_states`` is a length-n array over {OBS_POSITIVE,
    OBS_NEGATIVE, OBS_UNKNOWN}.  Kept nodes are exactly those not observed
    negative; edges survive iff both ends are kept.  Raises ValueError when
    nothing is kept.
    """
    states = np.asarray(observed_states)
    if states.shape != (graph.n,):
        raise ValueError(f"observed_states must have shape ({graph.n},)")
    bad = set(np.unique(states)) - {OBS_POSITIVE, OBS_NEGATIVE, OBS_UNKNOWN}
    if bad:
        raise ValueError(f"invalid observation codes: {sorted(bad)}")
    kept = tuple(int(v) for v in np.nonzero(states != OBS_NEGATIVE)[0])
    if not kept:
        raise ValueError("induced subgraph is empty: every node observed negative")
    mapping = SubgraphMap(kept)
    sub_edges = [
        (mapping.to_subgraph(i), mapping.to_subgraph(j))
        for i, j in graph.edges
        if mapping.contains(i) and mapping.contains(j)
    ]
    sub = Graph(len(kept), tuple(sorted(sub_edges)))  # type: ignore[arg-type]
    return sub, mapping
