"""From-scratch LSTM sequence models for tactile estimation."""

from .cell import (
    HeadParams,
    LstmLayerParams,
    ModelParams,
    ShapeMismatch,
    head_forward,
    init_params,
    lstm_forward,
    model_forward,
)
from .data import NormalizationStats, Segment, TooShort, WindowDataset, build_windows, compute_stats
from .models import (
    ContactClassifier,
    ForceRegressor,
    InferenceReport,
    ModelIOError,
    NotFitted,
    infer_stream,
    load_model,
)
from .train import (
    Adam,
    EarlyStopper,
    EmptyDataset,
    TrainConfig,
    TrainHistory,
    evaluate_loss,
    gradient_check,
    predict,
    train,
)

__all__ = [
    "Adam",
    "ContactClassifier",
    "EarlyStopper",
    "EmptyDataset",
    "ForceRegressor",
    "HeadParams",
    "InferenceReport",
    "LstmLayerParams",
    "ModelIOError",
    "ModelParams",
    "NormalizationStats",
    "NotFitted",
    "Segment",
    "ShapeMismatch",
    "TooShort",
    "TrainConfig",
    "TrainHistory",
    "WindowDataset",
    "build_windows",
    "compute_stats",
    "evaluate_loss",
    "gradient_check",
    "head_forward",
    "infer_stream",
    "init_params",
    "load_model",
    "lstm_forward",
    "model_forward",
    "predict",
    "train",
]
