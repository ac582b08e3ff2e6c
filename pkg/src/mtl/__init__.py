from .config import Auxiliary, TrainConfig, SynthParams, parse_auxiliaries, split_sizes
from .features import (
    FeatureVector,
    BlockScaler,
    FEATURE_SIZE,
    HISTOGRAM_BINS,
    describe,
    descriptor_dim,
    build_features,
    build_feature_set,
    build_manifest_features,
    save_vectors,
    load_vectors
)
from .splits import FoldSplit, stratified_splits, class_weights
from .network import (
    ModelParams,
    Batch,
    LossBreakdown,
    PARAM_NAMES,
    REGRESSION_PARAMS,
    init_params,
    forward,
    loss,
    batch_loss,
    backward,
    numerical_gradient
)
from .optimizer import init_state, rmsprop_step
from .metrics import auc, roc_curve
from .trainer import (
    TrainingData,
    TrainResult,
    EpochRecord,
    EvalReport,
    train,
    cross_validate,
    ensemble_predict,
    member_name
)
from .checkpoint import save_model, load_model
from .synthetic import SyntheticDataset, generate_synthetic, render_synthetic_lesion

__all__ = [
    "Auxiliary",
    "TrainConfig",
    "SynthParams",
    "parse_auxiliaries",
    "split_sizes",
    "FeatureVector",
    "BlockScaler",
    "FEATURE_SIZE",
    "HISTOGRAM_BINS",
    "describe",
    "descriptor_dim",
    "build_features",
    "build_feature_set",
    "build_manifest_features",
    "save_vectors",
    "load_vectors",
    "FoldSplit",
    "stratified_splits",
    "class_weights",
    "ModelParams",
    "Batch",
    "LossBreakdown",
    "PARAM_NAMES",
    "REGRESSION_PARAMS",
    "init_params",
    "forward",
    "loss",
    "batch_loss",
    "backward",
    "numerical_gradient",
    "init_state",
    "rmsprop_step",
    "auc",
    "roc_curve",
    "TrainingData",
    "TrainResult",
    "EpochRecord",
    "EvalReport",
    "train",
    "cross_validate",
    "ensemble_predict",
    "member_name",
    "save_model",
    "load_model",
    "SyntheticDataset",
    "generate_synthetic",
    "render_synthetic_lesion"
]
