"""Adam training loop for the intent network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ..validation import check_binary_labels, check_window_array
from .config import ModelConfig, TrainConfig
from .net import Params, cast_params, init_params, loss_and_grads, predict_proba


@dataclass
class AdamState:
    m: Params
    v: Params
    t: int = 0

    @staticmethod
    def zeros_like(params: Params) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    cfg: TrainConfig,
) -> None:
    """One in-place Adam update with bias correction."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for key, g in grads.items():
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[key] -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainResult:
    params: Params
    history: list[EpochMetrics] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.history[-1].accuracy if self.history else float("nan")


def train(
    X: np.ndarray,
    y: np.ndarray,
    model_cfg: ModelConfig = ModelConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    initial: Params | None = None,
) -> TrainResult:
    """Train from scratch (or from initial params); deterministic per seed.

    Shuffle order and dropout noise both come from one generator seeded with
    train_cfg.seed, so identical seeds give bitwise-identical parameters.
    """
    X = check_window_array(X)
    y = check_binary_labels(y, X.shape[0])
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")

    dtype = np.dtype(train_cfg.dtype)
    rng = np.random.default_rng(train_cfg.seed)
    params = initial if initial is not None else init_params(
        model_cfg, np.random.default_rng(model_cfg.seed))
    params = cast_params(params, dtype)
    X = X.astype(dtype)
    state = AdamState.zeros_like(params)
    n = X.shape[0]
    bs = train_cfg.batch_size
    history: list[EpochMetrics] = []
    # tiny GEMMs: BLAS fan-out costs more than it buys
    with threadpool_limits(limits=1):
        for epoch in range(train_cfg.epochs):
            order = rng.permutation(n)
            total_loss = 0.0
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                loss, grads = loss_and_grads(
                    X[idx], y[idx], params, model_cfg,
                    train=model_cfg.dropout > 0.0, rng=rng)
                adam_step(params, grads, state, train_cfg)
                total_loss += loss * idx.size
            p = predict_proba(X, params, model_cfg)
            acc = float(np.mean((p > 0.5).astype(np.float64) == y))
            history.append(EpochMetrics(epoch=epoch, loss=total_loss / n, accuracy=acc))
    return TrainResult(params=cast_params(params, np.float64), history=history)
