"""Single-file model checkpoints: config JSON plus named parameter arrays."""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .config import ModelConfig
from .net import Params, param_shapes

FORMAT_TAG = "intentnet-v1"


def save_checkpoint(path: str, params: Params, config: ModelConfig) -> None:
    meta = {"format": FORMAT_TAG, "config": asdict(config)}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **params)


def load_checkpoint(path: str) -> tuple[Params, ModelConfig]:
    with np.load(path) as data:
        if "__meta__" not in data:
            raise ValueError(f"{path}: not an intent-net checkpoint")
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != FORMAT_TAG:
            raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        cfg_dict = meta["config"]
        cfg_dict["kernel_scales"] = tuple(cfg_dict["kernel_scales"])
        config = ModelConfig(**cfg_dict)
        params: Params = {k: np.array(data[k], dtype=np.float64)
                          for k in data.files if k != "__meta__"}
    expected = param_shapes(config)
    if set(params) != set(expected):
        missing = set(expected) ^ set(params)
        raise ValueError(f"{path}: parameter set mismatch: {sorted(missing)}")
    for key, shape in expected.items():
        if params[key].shape != shape:
            raise ValueError(f"{path}: {key} has shape {params[key].shape}, expected {shape}")
    return params, config
