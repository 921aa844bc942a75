"""scikit-learn style wrapper around the intent network."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from ..features import FeatureWindow
from ..validation import check_binary_labels, check_window_array
from .config import KERNEL_SCALES, ModelConfig, TrainConfig
from .net import Prediction, predict_proba, predict_window
from .train import train


class IntentNetClassifier(BaseEstimator, ClassifierMixin):
    """Binary per-object interaction-intent classifier over gaze windows.

    X is a (n, sw, 3) tensor of [gx, gy, ratio] frames; y is binary. fit
    trains the conv+transformer network with Adam; predict applies the
    strict y_hat > 0.5 decision rule.
    """

    def __init__(
        self,
        kernel_scales: tuple[int, int, int] = KERNEL_SCALES,
        conv_channels: int = 16,
        d_model: int = 48,
        n_heads: int = 2,
        n_layers: int = 2,
        ffn_dim: int = 96,
        attention_reduction: int = 4,
        head_hidden: int = 48,
        dropout: float = 0.1,
        learning_rate: float = 1e-3,
        batch_size: int = 32,
        epochs: int = 30,
        seed: int = 0,
        dtype: str = "float32",
    ):
        self.kernel_scales = kernel_scales
        self.conv_channels = conv_channels
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.ffn_dim = ffn_dim
        self.attention_reduction = attention_reduction
        self.head_hidden = head_hidden
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.dtype = dtype

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            kernel_scales=tuple(self.kernel_scales),
            conv_channels_per_scale=self.conv_channels,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_layers=self.n_layers,
            ffn_dim=self.ffn_dim,
            attention_reduction=self.attention_reduction,
            head_hidden=self.head_hidden,
            dropout=self.dropout,
            seed=self.seed,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            dtype=self.dtype,
        )

    def fit(self, X, y):
        X = check_window_array(X)
        y = check_binary_labels(y, X.shape[0])
        self.config_ = self._model_config()
        result = train(X, y, self.config_, self._train_config())
        self.params_ = result.params
        self.history_ = result.history
        self.classes_ = np.array([0, 1])
        self.sw_ = X.shape[1]
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("IntentNetClassifier is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_window_array(X, sw=self.sw_)
        p = predict_proba(X, self.params_, self.config_)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)

    def predict_window(self, window: FeatureWindow | np.ndarray) -> Prediction:
        """Score one window, returning probability and strict decision."""
        self._check_fitted()
        values = window.values if isinstance(window, FeatureWindow) else np.asarray(window)
        return predict_window(values, self.params_, self.config_)
