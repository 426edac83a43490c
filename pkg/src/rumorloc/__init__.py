"""Rumor source detection on graphs with incomplete node observations.

Pipeline: simulate heterogeneous independent cascades, hide a fraction of
nodes, encode state/timing/spectral-position features, classify sources
with a hand-written multi-head graph attention network trained under a
class-balanced loss, and evaluate against plumbing baselines.
"""

from ._version import __version__
from .cascade import (
    Cascade,
    CascadeDiedOut,
    PropagationConfig,
    Snapshot,
    SnapshotSchemaError,
    build_dataset,
    generate_snapshot,
    load_snapshots,
    sample_probabilities,
    sample_sources,
    save_snapshots,
    simulate_ic,
)
from .config import ConfigError, ExperimentConfig, load_config
from .datasets import builtin_graph, community_graph, resolve_graph_source, write_edge_list
from .encoding import (
    EncodingConfig,
    FeatureMatrix,
    SpectralResult,
    assemble_features,
    diffusion_feature,
    positional_feature,
    state_feature,
    sym_normalized_laplacian,
    symmetric_eigendecomposition,
)
from .experiments import (
    ABLATION_VARIANTS,
    AblationResult,
    ExperimentResult,
    SweepPoint,
    run_ablation,
    run_experiment,
    run_sweep,
)
from .graph import (
    OBS_NEGATIVE,
    OBS_POSITIVE,
    OBS_UNKNOWN,
    Graph,
    GraphFormatError,
    SubgraphMap,
    induced_positive_subgraph,
    load_edge_list,
)
from .model import (
    Checkpoint,
    CheckpointError,
    ForwardTrace,
    ModelConfig,
    ModelParams,
    attention_logits,
    attention_weights,
    backward,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    AggregateMetrics,
    MetricsReport,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    baseline_detect,
    class_weight,
    compute_metrics,
    evaluate_snapshots,
    loss,
    predict_sources,
    train,
)

__all__ = [
    "__version__",
    "Cascade",
    "CascadeDiedOut",
    "PropagationConfig",
    "Snapshot",
    "SnapshotSchemaError",
    "build_dataset",
    "generate_snapshot",
    "load_snapshots",
    "sample_probabilities",
    "sample_sources",
    "save_snapshots",
    "simulate_ic",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "builtin_graph",
    "community_graph",
    "resolve_graph_source",
    "write_edge_list",
    "EncodingConfig",
    "FeatureMatrix",
    "SpectralResult",
    "assemble_features",
    "diffusion_feature",
    "positional_feature",
    "state_feature",
    "sym_normalized_laplacian",
    "symmetric_eigendecomposition",
    "ABLATION_VARIANTS",
    "AblationResult",
    "ExperimentResult",
    "SweepPoint",
    "run_ablation",
    "run_experiment",
    "run_sweep",
    "OBS_NEGATIVE",
    "OBS_POSITIVE",
    "OBS_UNKNOWN",
    "Graph",
    "GraphFormatError",
    "SubgraphMap",
    "induced_positive_subgraph",
    "load_edge_list",
    "Checkpoint",
    "CheckpointError",
    "ForwardTrace",
    "ModelConfig",
    "ModelParams",
    "attention_logits",
    "attention_weights",
    "backward",
    "forward",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "AggregateMetrics",
    "MetricsReport",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "baseline_detect",
    "class_weight",
    "compute_metrics",
    "evaluate_snapshots",
    "loss",
    "predict_sources",
    "train",
]
