"""Class-balanced training, prediction, metrics, and plumbing baselines.

The loss re-weights the non-source class by xi = |s| / (n - |s|), so both
classes contribute equally in expectation, and adds an L2 penalty on the
weight matrices.  Optimization is Adam with one full-batch step per
snapshot per epoch; early stopping tracks the F-Score on a validation
slice taken from the end of the training set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cascade import Snapshot
from .encoding import EncodingConfig, assemble_features
from .graph import OBS_NEGATIVE, Graph, induced_positive_subgraph
from .model import (
    ModelConfig,
    ModelParams,
    backward,
    cast_params,
    forward,
    init_params,
    zeros_like_params,
)
from .util import round_half_up, spawn_rng

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12

# sub-stream tags for the master training seed
_STREAM_INIT = 101
_STREAM_SHUFFLE = 102


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during optimization."""

    def __init__(self, epoch: int, snapshot_index: int):
        self.epoch = epoch
        self.snapshot_index = snapshot_index
        super().__init__(
            f"non-finite loss at epoch {epoch}, snapshot {snapshot_index}"
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    l2_lambda: float = 5e-4
    l2_literal_norm: bool = False
    epochs: int = 200
    patience: int = 25
    class_balance: bool = True
    threshold: float = 0.5
    threshold_mode: str = "fixed"
    predict_mode: str = "threshold"
    val_fraction: float = 0.125
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.threshold_mode not in ("fixed", "validation"):
            raise ValueError("threshold_mode must be 'fixed' or 'validation'")
        if self.predict_mode not in ("threshold", "top_k"):
            raise ValueError("predict_mode must be 'threshold' or 'top_k'")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be 'float64' or 'float32'")


def class_weight(n: int, s_count: int, exact: bool = False):
    """Weight xi = |s| / (n - |s|) applied to every non-source term.

    With this weight the non-source terms total exactly |s|, matching the
    source side.  ``exact`` returns a Fraction for rational verification.
    """
    if not 0 < s_count < n:
        raise ValueError("need 0 < s_count < n")
    if exact:
        return Fraction(s_count, n - s_count)
    return s_count / (n - s_count)


@dataclass
class LossResult:
    value: float
    d_probs: np.ndarray
    reg_grads: ModelParams
    clamped: int


def loss(
    probs: np.ndarray,
    is_source: np.ndarray,
    xi: float,
    lam: float,
    params: ModelParams,
    literal_norm: bool = False,
) -> LossResult:
    """Weighted cross-entropy plus L2 penalty on the weight matrices.

    Per node: -log p(true class), weighted 1 for sources and xi otherwise.
    True-class probabilities below 1e-12 are clamped (counted in the
    result); the clamped region contributes zero gradient.  The default
    penalty is lam * sum ||W||_F^2; ``literal_norm`` uses the unsquared
    norm lam * sqrt(sum ||W||_F^2) instead.  Attention vectors are not
    penalized.  Returns the loss value, d loss / d probs, and the penalty
    gradient laid out like the parameters.
    """
    is_source = np.asarray(is_source, dtype=bool)
    n = probs.shape[0]
    if probs.shape != (n, 2) or is_source.shape != (n,):
        raise ValueError("probs must be (n, 2) and is_source (n,)")
    node_weight = np.where(is_source, 1.0, float(xi))
    true_col = is_source.astype(np.int64)
    p_true = probs[np.arange(n), true_col]
    clamped = int(np.sum(p_true < PROB_CLAMP))
    if clamped:
        logger.warning("clamped %d true-class probabilities below %g", clamped, PROB_CLAMP)
    p_safe = np.maximum(p_true, PROB_CLAMP)
    data_term = float(-np.sum(node_weight * np.log(p_safe)))

    d_probs = np.zeros_like(probs)
    grad_vals = np.where(p_true >= PROB_CLAMP, -node_weight / p_safe, 0.0)
    d_probs[np.arange(n), true_col] = grad_vals

    reg_grads = zeros_like_params(params)
    sq_sum = sum(float(np.sum(w * w)) for lw in params.weights for w in lw)
    if literal_norm:
        norm = float(np.sqrt(sq_sum))
        reg_value = lam * norm
        if norm > 0:
            for li, lw in enumerate(params.weights):
                for hi, w in enumerate(lw):
                    reg_grads.weights[li][hi] = (lam / norm) * w
    else:
        reg_value = lam * sq_sum
        for li, lw in enumerate(params.weights):
            for hi, w in enumerate(lw):
                reg_grads.weights[li][hi] = 2.0 * lam * w

    return LossResult(
        value=data_term + reg_value,
        d_probs=d_probs,
        reg_grads=reg_grads,
        clamped=clamped,
    )


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) over flat arrays."""

    def __init__(self, params: ModelParams, lr: float):
        self.lr = lr
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-8
        self.t = 0
        self.m = [np.zeros_like(p) for p in params.flat()]
        self.v = [np.zeros_like(p) for p in params.flat()]

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for slot, (p, g) in enumerate(zip(params.flat(), grads.flat())):
            m = self.m[slot]
            v = self.v[slot]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_precision: float
    val_recall: float
    val_f: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[HistoryRow]
    best_epoch: int
    best_val_f: float
    clamped_total: int
    selected_threshold: float = 0.5


def _labels(snapshot: Snapshot) -> np.ndarray:
    out = np.zeros(snapshot.n, dtype=bool)
    out[sorted(snapshot.sources)] = True
    return out


def train(
    train_snapshots: list[Snapshot],
    graph: Graph,
    model_config: ModelConfig,
    encoding_config: EncodingConfig,
    train_config: TrainConfig,
) -> TrainResult:
    """Fit the classifier; returns the best-validation-F parameters.

    The last round(val_fraction * len) snapshots (at least one) are held
    out for early stopping; the rest receive one Adam step each per epoch
    in a per-epoch shuffled order.
    """
    if len(train_snapshots) < 2:
        raise ValueError("need at least 2 training snapshots (fit + validation)")
    if encoding_config.width != model_config.input_width:
        raise ValueError(
            f"encoding width {encoding_config.width} != model input width "
            f"{model_config.input_width}"
        )
    n_val = max(1, round_half_up(train_config.val_fraction * len(train_snapshots)))
    if n_val >= len(train_snapshots):
        raise ValueError("validation slice leaves no snapshots to fit on")
    fit_set = train_snapshots[:-n_val]
    val_set = train_snapshots[-n_val:]

    dtype = np.dtype(train_config.dtype)
    fit_features = [
        assemble_features(s, graph, encoding_config).matrix.astype(dtype)
        for s in fit_set
    ]
    fit_labels = [_labels(s) for s in fit_set]
    val_features = [
        assemble_features(s, graph, encoding_config).matrix.astype(dtype)
        for s in val_set
    ]

    params = cast_params(
        init_params(model_config, spawn_rng(train_config.seed, _STREAM_INIT)),
        dtype,
    )
    optimizer = Adam(params, train_config.learning_rate)
    shuffle_rng = spawn_rng(train_config.seed, _STREAM_SHUFFLE)

    history: list[HistoryRow] = []
    best_params = params.copy()
    best_val_f = -np.inf
    best_epoch = 0
    stale = 0
    clamped_total = 0

    for epoch in range(1, train_config.epochs + 1):
        order = shuffle_rng.permutation(len(fit_set))
        epoch_losses = np.empty(len(fit_set))
        for pos, idx in enumerate(order):
            labels = fit_labels[idx]
            s_count = int(labels.sum())
            xi = (
                class_weight(graph.n, s_count)
                if train_config.class_balance
                else 1.0
            )
            probs, trace = forward(params, fit_features[idx], graph, model_config)
            res = loss(
                probs,
                labels,
                xi,
                train_config.l2_lambda,
                params,
                literal_norm=train_config.l2_literal_norm,
            )
            clamped_total += res.clamped
            if not np.isfinite(res.value):
                raise TrainingDiverged(epoch, int(idx))
            grads = backward(params, trace, res.d_probs, model_config)
            for g, rg in zip(grads.flat(), res.reg_grads.flat()):
                g += rg
            optimizer.step(params, grads)
            epoch_losses[pos] = res.value

        val_scores = np.empty((len(val_set), 4))
        for vi, snap in enumerate(val_set):
            predicted = _predict_from_features(
                params,
                val_features[vi],
                graph,
                model_config,
                train_config.predict_mode,
                train_config.threshold,
                top_k=len(snap.sources),
            )
            rep = compute_metrics(predicted, snap.sources, graph.n, snap.psi)
            val_scores[vi] = (rep.accuracy, rep.precision, rep.recall, rep.f_score)
        val_mean = val_scores.mean(axis=0)
        row = HistoryRow(
            epoch=epoch,
            train_loss=float(epoch_losses.mean()),
            val_accuracy=float(val_mean[0]),
            val_precision=float(val_mean[1]),
            val_recall=float(val_mean[2]),
            val_f=float(val_mean[3]),
        )
        history.append(row)
        if row.val_f > best_val_f:
            best_val_f = row.val_f
            best_params = params.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= train_config.patience:
                logger.info(
                    "early stop at epoch %d (best val F %.4f at epoch %d)",
                    epoch,
                    best_val_f,
                    best_epoch,
                )
                break

    selected = train_config.threshold
    if train_config.threshold_mode == "validation":
        val_probs = [
            forward(best_params, f, graph, model_config)[0][:, 1]
            for f in val_features
        ]
        val_labels = [_labels(s) for s in val_set]
        selected = select_threshold(val_probs, val_labels, train_config.threshold)
        logger.info("validation-selected decision threshold %.6f", selected)

    return TrainResult(
        params=cast_params(best_params, np.float64),
        history=history,
        best_epoch=best_epoch,
        best_val_f=float(best_val_f),
        clamped_total=clamped_total,
        selected_threshold=float(selected),
    )


def _f_at_threshold(p_source: np.ndarray, labels: np.ndarray, tau: float) -> float:
    pred = p_source > tau
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def select_threshold(
    probs_list: list[np.ndarray],
    labels_list: list[np.ndarray],
    default: float = 0.5,
) -> float:
    """Decision threshold maximizing mean F over held-out snapshots.

    Candidates are the midpoints between consecutive distinct predicted
    source probabilities (pooled across snapshots) plus ``default``; the
    smallest maximizer wins, so the choice is deterministic.  Used when
    threshold_mode is 'validation'; prediction stays strict (p > tau).
    """
    if not probs_list:
        return float(default)
    pooled = np.unique(np.concatenate(probs_list))
    candidates = np.concatenate(
        ((pooled[:-1] + pooled[1:]) / 2.0, np.asarray([default]))
    )
    candidates = np.unique(candidates[(candidates > 0.0) & (candidates < 1.0)])
    best_tau = float(default)
    best_f = -1.0
    for tau in candidates:
        mean_f = float(
            np.mean(
                [
                    _f_at_threshold(p, lab, float(tau))
                    for p, lab in zip(probs_list, labels_list)
                ]
            )
        )
        if mean_f > best_f:
            best_f = mean_f
            best_tau = float(tau)
    return best_tau


def _predict_from_features(
    params: ModelParams,
    features: np.ndarray,
    graph: Graph,
    model_config: ModelConfig,
    mode: str,
    threshold: float,
    top_k: int | None,
) -> np.ndarray:
    probs, _ = forward(params, features, graph, model_config)
    p_source = probs[:, 1]
    if mode == "threshold":
        return np.nonzero(p_source > threshold)[0].astype(np.int64)
    if mode == "top_k":
        if top_k is None or top_k < 1:
            raise ValueError("top_k mode needs a positive source count")
        order = np.lexsort((np.arange(graph.n), -p_source))
        return np.sort(order[:top_k]).astype(np.int64)
    raise ValueError(f"unknown predict mode {mode!r}")


def predict_sources(
    params: ModelParams,
    snapshot: Snapshot,
    graph: Graph,
    model_config: ModelConfig,
    encoding_config: EncodingConfig,
    mode: str = "threshold",
    threshold: float = 0.5,
    top_k: int | None = None,
) -> np.ndarray:
    """Predicted source ids, sorted ascending.

    threshold mode: nodes with P(source) strictly above the threshold.
    top_k mode: the top_k highest source probabilities, ties broken by
    node id (the evaluation harness passes the generated source count).
    """
    fm = assemble_features(snapshot, graph, encoding_config)
    return _predict_from_features(
        params, fm.matrix, graph, model_config, mode, threshold, top_k
    )


@dataclass(frozen=True)
class MetricsReport:
    """Node-level binary detection metrics for one snapshot."""

    accuracy: float
    precision: float
    recall: float
    f_score: float
    masked_source_recovery: float | None
    tp: int
    fp: int
    fn: int
    tn: int


def compute_metrics(
    predicted: np.ndarray,
    true_sources: frozenset[int] | set[int],
    n: int,
    psi: frozenset[int] | set[int],
) -> MetricsReport:
    """Compare a predicted source set against ground truth.

    masked_source_recovery = |pred & s & Psi| / |s & Psi|, None when no
    source was masked (its aggregates skip undefined snapshots).
    """
    pred = set(int(v) for v in predicted)
    if any(v < 0 or v >= n for v in pred):
        raise ValueError("predicted node id out of range")
    truth = set(int(v) for v in true_sources)
    tp = len(pred & truth)
    fp = len(pred - truth)
    fn = len(truth - pred)
    tn = n - tp - fp - fn
    precision = tp / len(pred) if pred else 0.0
    recall = tp / len(truth) if truth else 0.0
    f_score = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    accuracy = (tp + tn) / n
    masked_truth = truth & set(int(v) for v in psi)
    recovery = (
        len(pred & masked_truth) / len(masked_truth) if masked_truth else None
    )
    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f_score=f_score,
        masked_source_recovery=recovery,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )


@dataclass(frozen=True)
class AggregateMetrics:
    """Mean/std over a batch of snapshots (population std)."""

    count: int
    accuracy_mean: float
    accuracy_std: float
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    f_mean: float
    f_std: float
    masked_recovery_mean: float | None
    masked_recovery_count: int


def aggregate_metrics(reports: list[MetricsReport]) -> AggregateMetrics:
    if not reports:
        raise ValueError("cannot aggregate zero reports")
    acc = np.array([r.accuracy for r in reports])
    pre = np.array([r.precision for r in reports])
    rec = np.array([r.recall for r in reports])
    f = np.array([r.f_score for r in reports])
    recov = [
        r.masked_source_recovery
        for r in reports
        if r.masked_source_recovery is not None
    ]
    return AggregateMetrics(
        count=len(reports),
        accuracy_mean=float(acc.mean()),
        accuracy_std=float(acc.std()),
        precision_mean=float(pre.mean()),
        precision_std=float(pre.std()),
        recall_mean=float(rec.mean()),
        recall_std=float(rec.std()),
        f_mean=float(f.mean()),
        f_std=float(f.std()),
        masked_recovery_mean=float(np.mean(recov)) if recov else None,
        masked_recovery_count=len(recov),
    )


def evaluate_snapshots(
    params: ModelParams,
    snapshots: list[Snapshot],
    graph: Graph,
    model_config: ModelConfig,
    encoding_config: EncodingConfig,
    mode: str = "threshold",
    threshold: float = 0.5,
    top_k: int | None = None,
) -> tuple[list[MetricsReport], AggregateMetrics]:
    reports = []
    for snap in snapshots:
        predicted = predict_sources(
            params,
            snap,
            graph,
            model_config,
            encoding_config,
            mode=mode,
            threshold=threshold,
            top_k=top_k,
        )
        reports.append(compute_metrics(predicted, snap.sources, graph.n, snap.psi))
    return reports, aggregate_metrics(reports)


BASELINE_METHODS = ("random", "degree", "eccentricity")


def baseline_detect(
    method: str,
    snapshot: Snapshot,
    graph: Graph,
    k: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Plumbing detectors over the positive-plus-unknown candidate set.

    random: k uniform candidates (seeded rng for reproducibility).
    degree: k highest-degree candidates, ties by node id.
    eccentricity: k lowest-eccentricity nodes inside the largest connected
    component of the induced subgraph, ties by node id; when that
    component is smaller than k, remaining candidates fill in by id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    states = snapshot.observed_states()
    candidates = np.nonzero(states != OBS_NEGATIVE)[0]
    if k > candidates.size:
        raise ValueError(
            f"k={k} exceeds {candidates.size} candidate nodes"
        )
    if method == "random":
        if rng is None:
            rng = spawn_rng(0)
        chosen = rng.choice(candidates, size=k, replace=False)
        return np.sort(chosen).astype(np.int64)
    if method == "degree":
        deg = graph.degrees[candidates]
        order = np.lexsort((candidates, -deg))
        return np.sort(candidates[order[:k]]).astype(np.int64)
    if method == "eccentricity":
        sub, mapping = induced_positive_subgraph(graph, states)
        comps = sub.connected_components
        largest = max(comps, key=lambda c: (len(c), -min(c)))
        ecc = _eccentricities(sub, largest)
        orig = np.array([mapping.to_original(v) for v in largest], dtype=np.int64)
        order = np.lexsort((orig, np.array([ecc[v] for v in largest])))
        chosen = list(orig[order[: min(k, len(largest))]])
        if len(chosen) < k:
            rest = sorted(set(int(c) for c in candidates) - set(chosen))
            chosen.extend(rest[: k - len(chosen)])
        return np.sort(np.asarray(chosen, dtype=np.int64))
    raise ValueError(f"unknown baseline method {method!r}")


def _eccentricities(graph: Graph, component: tuple[int, ...]) -> dict[int, int]:
    """BFS eccentricity of every node within its component."""
    comp_set = set(component)
    out: dict[int, int] = {}
    for start in component:
        dist = {start: 0}
        frontier = [start]
        while frontier:
            nxt = []
            for v in frontier:
                for u in graph.neighbor_lists[v]:
                    ui = int(u)
                    if ui in comp_set and ui not in dist:
                        dist[ui] = dist[v] + 1
                        nxt.append(ui)
            frontier = nxt
        out[start] = max(dist.values())
    return out
