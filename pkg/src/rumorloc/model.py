"""Multi-head graph attention classifier with hand-written gradients.

The network stacks attention layers over the full graph.  In each layer,
head h projects node features with W and scores ordered neighbor pairs

    e_ij = a . lrelu([W x_i || W x_j])

which a per-neighborhood softmax turns into weights alpha_ij (neighborhoods
include the node itself by default).  The head output for node i is
sum_j alpha_ij W x_j.  Hidden layers concatenate the K head outputs after an
ELU; the final layer averages K two-column head outputs and applies a
row-wise softmax to yield (P(other), P(source)) per node.

forward() records every intermediate tensor; backward() replays the trace
in reverse and produces exact gradients for all parameters, which finite
differences verify in the test suite.  Alternative attention variants
(uniform, sum, degree-proportional) swap the learned alpha for fixed
coefficients and are used by the ablation harness.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from .encoding import EncodingConfig
from .graph import Graph, Neighborhoods

ATTENTION_VARIANTS = ("learned", "uniform", "sum", "degree_small", "degree_large")

CHECKPOINT_MAGIC = b"RLCKPT1\n"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or inconsistent."""


@dataclass(frozen=True)
class ModelConfig:
    input_width: int = 18
    num_layers: int = 3
    heads: int = 4
    hidden_width: int = 800
    lrelu_slope: float = 0.2
    attention_variant: str = "learned"
    self_loops_in_attention: bool = True

    def __post_init__(self) -> None:
        if self.input_width < 1:
            raise ValueError("input_width must be >= 1")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.num_layers > 1 and self.hidden_width % self.heads != 0:
            raise ValueError("hidden_width must be divisible by heads")
        if self.lrelu_slope < 0:
            raise ValueError("lrelu_slope must be >= 0")
        if self.attention_variant not in ATTENTION_VARIANTS:
            raise ValueError(
                f"attention_variant must be one of {ATTENTION_VARIANTS}"
            )

    def layer_in_width(self, layer: int) -> int:
        return self.input_width if layer == 0 else self.hidden_width

    def head_out_width(self, layer: int) -> int:
        # final layer emits the two class columns per head
        if layer == self.num_layers - 1:
            return 2
        return self.hidden_width // self.heads

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Canonical (name, shape) order used by optimizer and checkpoints."""
        shapes: list[tuple[str, tuple[int, ...]]] = []
        for layer in range(self.num_layers):
            d_in = self.layer_in_width(layer)
            d_out = self.head_out_width(layer)
            for head in range(self.heads):
                shapes.append((f"w_{layer}_{head}", (d_out, d_in)))
                shapes.append((f"a_{layer}_{head}", (2 * d_out,)))
        return shapes


@dataclass
class ModelParams:
    """Per-layer, per-head weight matrices and attention vectors."""

    weights: list[list[np.ndarray]]
    attn: list[list[np.ndarray]]

    def flat(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for lw, la in zip(self.weights, self.attn):
            for w, a in zip(lw, la):
                out.append(w)
                out.append(a)
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            weights=[[w.copy() for w in lw] for lw in self.weights],
            attn=[[a.copy() for a in la] for la in self.attn],
        )

    def num_parameters(self) -> int:
        return sum(arr.size for arr in self.flat())


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform initialization, bound sqrt(6 / (fan_in + fan_out)).

    Attention vectors are treated as 1 x 2d matrices for the fan rule.
    """
    weights: list[list[np.ndarray]] = []
    attn: list[list[np.ndarray]] = []
    for layer in range(config.num_layers):
        d_in = config.layer_in_width(layer)
        d_out = config.head_out_width(layer)
        lw: list[np.ndarray] = []
        la: list[np.ndarray] = []
        for _ in range(config.heads):
            bw = np.sqrt(6.0 / (d_in + d_out))
            lw.append(rng.uniform(-bw, bw, size=(d_out, d_in)))
            ba = np.sqrt(6.0 / (2 * d_out + 1))
            la.append(rng.uniform(-ba, ba, size=2 * d_out))
        weights.append(lw)
        attn.append(la)
    return ModelParams(weights=weights, attn=attn)


def zeros_like_params(params: ModelParams) -> ModelParams:
    return ModelParams(
        weights=[[np.zeros_like(w) for w in lw] for lw in params.weights],
        attn=[[np.zeros_like(a) for a in la] for la in params.attn],
    )


def cast_params(params: ModelParams, dtype) -> ModelParams:
    """Copy of the parameters in the given floating dtype."""
    return ModelParams(
        weights=[[w.astype(dtype) for w in lw] for lw in params.weights],
        attn=[[a.astype(dtype) for a in la] for la in params.attn],
    )


# ----------------------------------------------------------------------
# activations
# ----------------------------------------------------------------------


def _lrelu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _lrelu_grad(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, 1.0, slope)


def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(x))


def _elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(x))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# ----------------------------------------------------------------------
# attention primitives
# ----------------------------------------------------------------------


def attention_logits(
    w: np.ndarray,
    a: np.ndarray,
    x: np.ndarray,
    hoods: Neighborhoods,
    slope: float,
) -> np.ndarray:
    """Per-pair logits e_ij = a . lrelu([W x_i || W x_j]).

    The concatenated form decomposes: with a = [a1; a2],
    e_ij = a1 . lrelu(W x_i) + a2 . lrelu(W x_j).
    """
    d_out = w.shape[0]
    if a.shape != (2 * d_out,):
        raise ValueError(f"attention vector must have length {2 * d_out}")
    u = _lrelu(x @ w.T, slope)
    s1 = u @ a[:d_out]
    s2 = u @ a[d_out:]
    return s1[hoods.tgt] + s2[hoods.src]


def attention_weights(e: np.ndarray, hoods: Neighborhoods) -> np.ndarray:
    """Per-neighborhood softmax with max-subtraction for overflow safety."""
    if np.any(hoods.counts == 0):
        empty = int(np.nonzero(hoods.counts == 0)[0][0])
        raise ValueError(f"node {empty} has an empty attention neighborhood")
    starts = hoods.offsets[:-1]
    seg_max = np.maximum.reduceat(e, starts)
    shifted = np.exp(e - seg_max[hoods.tgt])
    seg_sum = np.add.reduceat(shifted, starts)
    return shifted / seg_sum[hoods.tgt]


def _fixed_alpha(variant: str, hoods: Neighborhoods) -> np.ndarray:
    """Attention coefficients for the non-learned variants."""
    counts = hoods.counts.astype(np.float64)
    if np.any(hoods.counts == 0):
        empty = int(np.nonzero(hoods.counts == 0)[0][0])
        raise ValueError(f"node {empty} has an empty attention neighborhood")
    if variant == "uniform":
        return 1.0 / counts[hoods.tgt]
    if variant == "sum":
        return np.ones(hoods.num_pairs, dtype=np.float64)
    if variant == "degree_small":
        raw = 1.0 / counts[hoods.src]
    elif variant == "degree_large":
        raw = counts[hoods.src]
    else:
        raise ValueError(f"unknown attention variant {variant!r}")
    seg_sum = np.add.reduceat(raw, hoods.offsets[:-1])
    return raw / seg_sum[hoods.tgt]


@dataclass
class HeadTrace:
    """Intermediates of one attention head, kept for the backward pass."""

    p: np.ndarray  # W x per node
    u: np.ndarray | None  # lrelu(p), learned variant only
    e: np.ndarray | None  # per-pair logits, learned variant only
    alpha: np.ndarray  # per-pair coefficients
    g: np.ndarray  # aggregated output per node (pre-activation)


@dataclass
class LayerTrace:
    x_in: np.ndarray
    heads: list[HeadTrace]


@dataclass
class ForwardTrace:
    """Recorded computation of one forward pass, replayed by backward()."""

    hoods: Neighborhoods
    layers: list[LayerTrace]
    z: np.ndarray  # mean-pooled final-layer logits
    z_act: np.ndarray  # elu(z)
    probs: np.ndarray


def _head_forward(
    w: np.ndarray,
    a: np.ndarray,
    x: np.ndarray,
    hoods: Neighborhoods,
    config: ModelConfig,
) -> HeadTrace:
    p = x @ w.T
    if config.attention_variant == "learned":
        d_out = w.shape[0]
        u = _lrelu(p, config.lrelu_slope)
        s1 = u @ a[:d_out]
        s2 = u @ a[d_out:]
        e = s1[hoods.tgt] + s2[hoods.src]
        alpha = attention_weights(e, hoods)
    else:
        u = None
        e = None
        alpha = _fixed_alpha(config.attention_variant, hoods).astype(p.dtype)
    weighted = alpha[:, np.newaxis] * p[hoods.src]
    g = np.add.reduceat(weighted, hoods.offsets[:-1], axis=0)
    return HeadTrace(p=p, u=u, e=e, alpha=alpha, g=g)


def layer_forward(
    layer_weights: list[np.ndarray],
    layer_attn: list[np.ndarray],
    x: np.ndarray,
    hoods: Neighborhoods,
    config: ModelConfig,
    final: bool,
) -> tuple[np.ndarray, LayerTrace]:
    """One multi-head layer; concat+ELU for hidden, head-mean for final."""
    heads = [
        _head_forward(w, a, x, hoods, config)
        for w, a in zip(layer_weights, layer_attn)
    ]
    trace = LayerTrace(x_in=x, heads=heads)
    if final:
        z = np.mean([ht.g for ht in heads], axis=0)
        return z, trace
    y = np.concatenate([_elu(ht.g) for ht in heads], axis=1)
    return y, trace


def forward(
    params: ModelParams,
    features: np.ndarray,
    graph: Graph,
    config: ModelConfig,
) -> tuple[np.ndarray, ForwardTrace]:
    """Full-network forward pass on the whole graph.

    Returns (probs, trace): probs has one (P(other), P(source)) row per
    node; the trace captures everything backward() needs.
    """
    # computation follows the parameter dtype (float32 training casts both)
    x = np.asarray(features, dtype=params.weights[0][0].dtype)
    if x.shape != (graph.n, config.input_width):
        raise ValueError(
            f"features must have shape ({graph.n}, {config.input_width}), "
            f"got {x.shape}"
        )
    hoods = graph.neighborhoods(config.self_loops_in_attention)
    if np.any(hoods.counts == 0):
        empty = int(np.nonzero(hoods.counts == 0)[0][0])
        raise ValueError(
            f"node {empty} has no attention neighborhood; "
            "enable self_loops_in_attention or connect it"
        )
    layers: list[LayerTrace] = []
    for layer in range(config.num_layers - 1):
        x, trace = layer_forward(
            params.weights[layer], params.attn[layer], x, hoods, config, final=False
        )
        layers.append(trace)
    z, trace = layer_forward(
        params.weights[-1], params.attn[-1], x, hoods, config, final=True
    )
    layers.append(trace)
    z_act = _elu(z)
    probs = _softmax_rows(z_act)
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("forward pass produced non-finite probabilities")
    return probs, ForwardTrace(hoods=hoods, layers=layers, z=z, z_act=z_act, probs=probs)


def _head_backward(
    w: np.ndarray,
    a: np.ndarray,
    ht: HeadTrace,
    x_in: np.ndarray,
    d_g: np.ndarray,
    hoods: Neighborhoods,
    config: ModelConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dW, da, dX) of one head given d loss / d aggregated output."""
    n = x_in.shape[0]
    d_out = w.shape[0]
    starts = hoods.offsets[:-1]
    d_g_pairs = d_g[hoods.tgt]

    # aggregation: g_i = sum_j alpha_ij p_j
    d_alpha = np.einsum("md,md->m", d_g_pairs, ht.p[hoods.src])
    d_p = np.zeros_like(ht.p)
    np.add.at(d_p, hoods.src, ht.alpha[:, np.newaxis] * d_g_pairs)

    da = np.zeros_like(a)
    if config.attention_variant == "learned":
        # softmax: de = alpha * (d_alpha - sum_seg alpha * d_alpha)
        seg_dot = np.add.reduceat(ht.alpha * d_alpha, starts)
        d_e = ht.alpha * (d_alpha - seg_dot[hoods.tgt])
        d_s1 = np.add.reduceat(d_e, starts)
        d_s2 = np.bincount(hoods.src, weights=d_e, minlength=n)
        assert ht.u is not None
        da[:d_out] = ht.u.T @ d_s1
        da[d_out:] = ht.u.T @ d_s2
        d_u = np.outer(d_s1, a[:d_out]) + np.outer(d_s2, a[d_out:])
        d_p += d_u * _lrelu_grad(ht.p, config.lrelu_slope)

    dw = d_p.T @ x_in
    dx = d_p @ w
    return dw, da, dx


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    d_probs: np.ndarray,
    config: ModelConfig,
) -> ModelParams:
    """Exact parameter gradients by reverse traversal of the trace.

    ``d_probs`` is d loss / d probs, shape (n, 2).  The returned container
    mirrors the parameter structure and holds the gradients.
    """
    grads = zeros_like_params(params)
    hoods = trace.hoods

    # softmax rows: dz_act = probs * (d_probs - <d_probs, probs>)
    probs = trace.probs
    inner = np.sum(d_probs * probs, axis=1, keepdims=True)
    d_z_act = probs * (d_probs - inner)
    d_z = d_z_act * _elu_grad(trace.z)

    # final layer: z = mean over heads of g_h
    final = config.num_layers - 1
    ft = trace.layers[final]
    d_g_final = d_z / config.heads
    d_x = np.zeros_like(ft.x_in)
    for h in range(config.heads):
        dw, da, dxh = _head_backward(
            params.weights[final][h],
            params.attn[final][h],
            ft.heads[h],
            ft.x_in,
            d_g_final,
            hoods,
            config,
        )
        grads.weights[final][h] += dw
        grads.attn[final][h] += da
        d_x += dxh

    for layer in range(final - 1, -1, -1):
        lt = trace.layers[layer]
        width = config.head_out_width(layer)
        d_x_next = d_x
        d_x = np.zeros_like(lt.x_in)
        for h in range(config.heads):
            ht = lt.heads[h]
            d_y = d_x_next[:, h * width : (h + 1) * width]
            d_g = d_y * _elu_grad(ht.g)
            dw, da, dxh = _head_backward(
                params.weights[layer][h],
                params.attn[layer][h],
                ht,
                lt.x_in,
                d_g,
                hoods,
                config,
            )
            grads.weights[layer][h] += dw
            grads.attn[layer][h] += da
            d_x += dxh
    return grads


# ----------------------------------------------------------------------
# checkpoints: magic, length-prefixed JSON metadata, raw little-endian f64
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    params: ModelParams
    model_config: ModelConfig
    encoding_config: EncodingConfig
    seed: int
    epoch: int
    threshold: float = 0.5


def save_checkpoint(
    path: str,
    params: ModelParams,
    model_config: ModelConfig,
    encoding_config: EncodingConfig,
    seed: int,
    epoch: int,
    threshold: float = 0.5,
) -> None:
    """Write a deterministic binary checkpoint (no timestamps, sorted keys).

    ``threshold`` is the decision threshold the trained model should be
    evaluated with (the validation-selected value when threshold_mode is
    'validation', otherwise the configured constant).
    """
    names_shapes = model_config.param_shapes()
    arrays = params.flat()
    if len(arrays) != len(names_shapes):
        raise CheckpointError("parameter count does not match config")
    meta = {
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model_config),
        "encoding_config": asdict(encoding_config),
        "seed": int(seed),
        "epoch": int(epoch),
        "threshold": float(threshold),
        "tensors": [
            {"name": name, "shape": list(shape)} for name, shape in names_shapes
        ],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for (name, shape), arr in zip(names_shapes, arrays):
            if arr.shape != shape:
                raise CheckpointError(
                    f"tensor {name} has shape {arr.shape}, config expects {shape}"
                )
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    """Read and validate a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        try:
            meta = json.loads(fh.read(blob_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt metadata: {exc}") from exc
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {meta.get('version')!r}"
            )
        try:
            model_config = ModelConfig(**meta["model_config"])
            encoding_config = EncodingConfig(**meta["encoding_config"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: bad embedded config: {exc}") from exc
        expected = model_config.param_shapes()
        listed = [(t["name"], tuple(t["shape"])) for t in meta.get("tensors", [])]
        if listed != expected:
            raise CheckpointError(
                f"{path}: tensor table does not match model config"
            )
        arrays: list[np.ndarray] = []
        for name, shape in expected:
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated tensor {name}")
            arrays.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after tensors")
    params = params_from_flat(model_config, arrays)
    return Checkpoint(
        params=params,
        model_config=model_config,
        encoding_config=encoding_config,
        seed=int(meta["seed"]),
        epoch=int(meta["epoch"]),
        threshold=float(meta.get("threshold", 0.5)),
    )


def params_from_flat(config: ModelConfig, arrays: list[np.ndarray]) -> ModelParams:
    """Rebuild the nested parameter structure from canonical flat order."""
    weights: list[list[np.ndarray]] = []
    attn: list[list[np.ndarray]] = []
    it: Iterator[np.ndarray] = iter(arrays)
    for _ in range(config.num_layers):
        lw: list[np.ndarray] = []
        la: list[np.ndarray] = []
        for _ in range(config.heads):
            lw.append(next(it))
            la.append(next(it))
        weights.append(lw)
        attn.append(la)
    return ModelParams(weights=weights, attn=attn)
