from .checkpoint import FORMAT_TAG, load_checkpoint, save_checkpoint
from .config import KERNEL_SCALES, ModelConfig, TrainConfig
from .estimator import IntentNetClassifier
from .gradcheck import gradient_check
from .net import (
    Params,
    Prediction,
    bce_loss,
    forward,
    init_params,
    loss_and_grads,
    positional_encoding,
    predict_proba,
    predict_window,
)
from .train import EpochMetrics, TrainResult, train

__all__ = [
    "FORMAT_TAG",
    "KERNEL_SCALES",
    "ModelConfig",
    "TrainConfig",
    "IntentNetClassifier",
    "gradient_check",
    "Params",
    "Prediction",
    "bce_loss",
    "forward",
    "init_params",
    "loss_and_grads",
    "positional_encoding",
    "predict_proba",
    "predict_window",
    "EpochMetrics",
    "TrainResult",
    "train",
    "load_checkpoint",
    "save_checkpoint",
]
