"""Per-node feature encoding for snapshots.

Three blocks are assembled into one dense matrix:

  X1  observed state: +1 positive, -1 negative, 0 unknown
  X2  diffusion timestamp, normalized to [0, 1] over the observed
      positives (-1 wherever no timestamp was observed)
  X3  spectral position: entries of the k smallest non-trivial
      eigenvectors of the symmetric normalized Laplacian of the subgraph
      induced by positive and unknown nodes; observed-negative nodes get
      -1 in every positional column

An extended variant widens X1 to a two-column signed pair and X2 to
(timestamp, normalized spreader id); it is off by default.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cascade import Snapshot
from .graph import OBS_NEGATIVE, OBS_POSITIVE, Graph, induced_positive_subgraph

logger = logging.getLogger(__name__)

TRIVIAL_EIGENVALUE_TOL = 1e-8
LAPLACIAN_RANGE_TOL = 1e-8
SYMMETRY_TOL = 1e-10


class EigendecompositionError(RuntimeError):
    """The eigensolver failed to converge."""


@dataclass(frozen=True)
class EncodingConfig:
    """Feature-assembly parameters."""

    k: int = 16
    raw_timestamps: bool = False
    extended: bool = False
    zero_positional: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def width(self) -> int:
        return (4 if self.extended else 2) + self.k

    @property
    def column_names(self) -> tuple[str, ...]:
        pe = tuple(f"pe_{i + 1}" for i in range(self.k))
        if self.extended:
            return ("x1_pos", "x1_neg", "x2_t", "x2_id") + pe
        return ("x1", "x2") + pe


@dataclass(frozen=True)
class SpectralResult:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column i pairs with eigenvalues[i]
    residual_norms: np.ndarray

    @property
    def size(self) -> int:
        return int(self.eigenvalues.shape[0])


@dataclass(frozen=True)
class FeatureMatrix:
    """Assembled node features plus column metadata."""

    matrix: np.ndarray
    columns: tuple[str, ...]
    k: int

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.columns):
            raise ValueError("matrix width must match column names")

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def width(self) -> int:
        return int(self.matrix.shape[1])


def symmetric_eigendecomposition(matrix: np.ndarray) -> SpectralResult:
    """Full eigendecomposition of a symmetric matrix via LAPACK.

    Input symmetry is checked up front; the result carries per-pair
    residual norms ||M v - lambda v||_inf so callers can assert accuracy.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        # LAPACK reports failure through its info code; numpy folds that
        # into the exception message.
        raise EigendecompositionError(f"eigensolver did not converge: {exc}") from exc
    residuals = np.max(
        np.abs(m @ eigenvectors - eigenvectors * eigenvalues[np.newaxis, :]), axis=0
    )
    return SpectralResult(
        eigenvalues=eigenvalues, eigenvectors=eigenvectors, residual_norms=residuals
    )


def sym_normalized_laplacian(graph: Graph) -> np.ndarray:
    """I - D^{-1/2} A D^{-1/2}; rows of degree-0 nodes stay identity rows."""
    a = graph.adjacency_matrix()
    deg = graph.degrees.astype(np.float64)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    lap = -a * inv_sqrt[:, np.newaxis] * inv_sqrt[np.newaxis, :]
    np.fill_diagonal(lap, 1.0)
    return lap


def canonicalize_sign(vector: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude entry (lowest index on ties) is positive."""
    idx = int(np.argmax(np.abs(vector)))
    if vector[idx] < 0:
        return -vector
    return vector


def state_feature(snapshot: Snapshot) -> np.ndarray:
    """X1 column: +1 / -1 / 0 for positive / negative / unknown."""
    return snapshot.observed_states().astype(np.float64)


def diffusion_feature(snapshot: Snapshot, raw_timestamps: bool = False) -> np.ndarray:
    """X2 column: normalized timestamps for observed positives, else -1.

    Normalization divides by the largest observed timestamp (0.0 when that
    maximum is 0, i.e. every observed positive is a source).  With
    ``raw_timestamps`` the literal round index is used instead.
    """
    ts = snapshot.observed_timestamps()
    observed = ts >= 0
    out = np.full(snapshot.n, -1.0, dtype=np.float64)
    if not np.any(observed):
        return out
    if raw_timestamps:
        out[observed] = ts[observed].astype(np.float64)
        return out
    t_max = int(ts[observed].max())
    if t_max == 0:
        out[observed] = 0.0
    else:
        out[observed] = ts[observed].astype(np.float64) / float(t_max)
    return out


def positional_feature(snapshot: Snapshot, graph: Graph, k: int) -> np.ndarray:
    """X3 block: spectral coordinates on the positive-plus-unknown subgraph.

    Eigenpairs with eigenvalue < 1e-8 are dropped (one per connected
    component of the subgraph); the k smallest surviving eigenvectors are
    sign-canonicalized and laid out column-wise, zero-padded when fewer
    than k non-trivial pairs exist.  Nodes outside the subgraph get -1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    sub, mapping = induced_positive_subgraph(graph, snapshot.observed_states())
    lap = sym_normalized_laplacian(sub)
    spectral = symmetric_eigendecomposition(lap)
    lo = float(spectral.eigenvalues.min())
    hi = float(spectral.eigenvalues.max())
    if lo < -LAPLACIAN_RANGE_TOL or hi > 2.0 + LAPLACIAN_RANGE_TOL:
        raise AssertionError(
            f"laplacian spectrum outside [0, 2]: min={lo:.3e} max={hi:.3e}"
        )
    keep = np.nonzero(spectral.eigenvalues >= TRIVIAL_EIGENVALUE_TOL)[0][:k]
    out = np.full((snapshot.n, k), -1.0, dtype=np.float64)
    rows = np.asarray(mapping.kept, dtype=np.int64)
    block = np.zeros((len(mapping), k), dtype=np.float64)
    for col, idx in enumerate(keep):
        block[:, col] = canonicalize_sign(spectral.eigenvectors[:, idx])
    out[rows] = block
    return out


def _extended_state(snapshot: Snapshot) -> np.ndarray:
    states = snapshot.observed_states()
    out = np.zeros((snapshot.n, 2), dtype=np.float64)
    pos = states == OBS_POSITIVE
    neg = states == OBS_NEGATIVE
    out[pos] = (1.0, -1.0)
    out[neg] = (-1.0, 1.0)
    return out


def _extended_diffusion(snapshot: Snapshot, raw_timestamps: bool) -> np.ndarray:
    t_col = diffusion_feature(snapshot, raw_timestamps)
    id_col = np.full(snapshot.n, -1.0, dtype=np.float64)
    ts = snapshot.observed_timestamps()
    spreaders = snapshot.cascade.spreaders
    denom = float(max(snapshot.n - 1, 1))
    has_spreader = (ts > 0) & (spreaders >= 0)
    id_col[has_spreader] = spreaders[has_spreader].astype(np.float64) / denom
    return np.column_stack([t_col, id_col])


def assemble_features(
    snapshot: Snapshot, graph: Graph, config: EncodingConfig
) -> FeatureMatrix:
    """Build the full (n, width) feature matrix for one snapshot.

    ``zero_positional`` writes zeros into every positional column (used by
    the ablation that removes spectral positions) while keeping the matrix
    shape identical.
    """
    if snapshot.n != graph.n:
        raise ValueError("snapshot and graph disagree on node count")
    if config.extended:
        head = np.column_stack(
            [
                _extended_state(snapshot),
                _extended_diffusion(snapshot, config.raw_timestamps),
            ]
        )
    else:
        head = np.column_stack(
            [
                state_feature(snapshot),
                diffusion_feature(snapshot, config.raw_timestamps),
            ]
        )
    if config.zero_positional:
        pe = np.zeros((snapshot.n, config.k), dtype=np.float64)
    else:
        pe = positional_feature(snapshot, graph, config.k)
    matrix = np.column_stack([head, pe])
    return FeatureMatrix(matrix=matrix, columns=config.column_names, k=config.k)


def dump_features(features: FeatureMatrix, path: str) -> None:
    """Write a whitespace table with a header row for inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node " + " ".join(features.columns) + "\n")
        for v in range(features.n):
            row = " ".join(repr(float(x)) for x in features.matrix[v])
            fh.write(f"{v} {row}\n")


def load_features(path: str) -> np.ndarray:
    """Read back a matrix written by :func:`dump_features` (values only)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty feature file")
    rows = [[float(tok) for tok in line.split()[1:]] for line in lines[1:]]
    return np.asarray(rows, dtype=np.float64)
