"""Architecture and training hyperparameters for the intent network."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..exceptions import ConfigError

KERNEL_SCALES = (3, 7, 13)


@dataclass(frozen=True)
class ModelConfig:
    kernel_scales: tuple[int, int, int] = KERNEL_SCALES
    conv_channels_per_scale: int = 16
    d_model: int = 48
    n_heads: int = 2
    n_layers: int = 2
    ffn_dim: int = 96
    attention_reduction: int = 4
    head_hidden: int = 48
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if tuple(self.kernel_scales) != KERNEL_SCALES:
            raise ConfigError(f"kernel_scales must be {KERNEL_SCALES}")
        if self.d_model % 2 != 0:
            raise ConfigError("d_model must be even for sinusoidal encoding")
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.conv_total % self.attention_reduction != 0:
            raise ConfigError("attention_reduction must divide the concat channel count")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if min(self.conv_channels_per_scale, self.ffn_dim, self.head_hidden,
               self.n_layers) < 1:
            raise ConfigError("layer sizes must be positive")

    @property
    def conv_total(self) -> int:
        return self.conv_channels_per_scale * len(self.kernel_scales)

    @property
    def head_in(self) -> int:
        return self.conv_total + self.d_model


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    dtype: str = "float64"  # "float32" roughly halves CPU training time

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        # learning_rate 0 is permitted so no-op training stays testable
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
