"""Forward and reverse passes of the intent network, hand-written on numpy.

Two branches over the (bs, sw, 3) window tensor: multi-scale same-padded
1-d convolutions with a squeeze-excitation channel gate, and a pre-norm
transformer encoder over the positionally-encoded input projection. Both
are mean-pooled over time, concatenated and mapped through a small fully
connected head to a sigmoid probability.

The backward pass mirrors the forward pass exactly, so analytic gradients
can be certified against finite differences (double precision). Training
may run in float32 for speed; the math is dtype-parametric and follows the
dtype of the parameters.

Implementation notes kept out of the public surface: the three conv scales
are evaluated as one GEMM over the widest window with the narrower kernels
zero-padded to the full tap count (identical math, fewer passes), and the
Q/K/V projections of each layer are fused into a single GEMM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ConfigError, NumericsError
from .config import ModelConfig

Params = dict[str, np.ndarray]

LN_EPS = 1e-5
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class Prediction:
    """Probability plus the strict > 0.5 decision."""

    y_hat: float
    decided: int

    @staticmethod
    def from_probability(p: float) -> "Prediction":
        return Prediction(y_hat=float(p), decided=int(p > 0.5))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free for any finite input
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@lru_cache(maxsize=8)
def _pe_cached(sw: int, d_model: int) -> np.ndarray:
    if d_model % 2 != 0:
        raise ConfigError("d_model must be even for sinusoidal encoding")
    pos = np.arange(sw, dtype=np.float64)[:, None]
    idx = np.arange(0, d_model, 2, dtype=np.float64)
    div = np.power(10000.0, idx / d_model)[None, :]
    pe = np.zeros((sw, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(pos / div)
    pe[:, 1::2] = np.cos(pos / div)
    pe.setflags(write=False)
    return pe


def positional_encoding(sw: int, d_model: int) -> np.ndarray:
    """Sinusoidal position table: sin on even columns, cos on odd ones."""
    return _pe_cached(sw, d_model).copy()


def _uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> Params:
    """Seeded fan-in uniform weights, zero biases, unit layer-norm gains."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cc = config.conv_channels_per_scale
    d = config.d_model
    ct = config.conv_total
    p: Params = {}
    for si, k in enumerate(config.kernel_scales):
        p[f"conv{si}_W"] = _uniform_fan_in(rng, (cc, 3, k), 3 * k)
        p[f"conv{si}_b"] = np.zeros(cc)
    red = ct // config.attention_reduction
    p["se_W1"] = _uniform_fan_in(rng, (ct, red), ct)
    p["se_b1"] = np.zeros(red)
    p["se_W2"] = _uniform_fan_in(rng, (red, ct), red)
    p["se_b2"] = np.zeros(ct)
    p["in_W"] = _uniform_fan_in(rng, (3, d), 3)
    p["in_b"] = np.zeros(d)
    for l in range(config.n_layers):
        p[f"l{l}_ln1_g"] = np.ones(d)
        p[f"l{l}_ln1_b"] = np.zeros(d)
        for name in ("q", "k", "v", "o"):
            p[f"l{l}_W{name}"] = _uniform_fan_in(rng, (d, d), d)
            p[f"l{l}_b{name}"] = np.zeros(d)
        p[f"l{l}_ln2_g"] = np.ones(d)
        p[f"l{l}_ln2_b"] = np.zeros(d)
        p[f"l{l}_ff_W1"] = _uniform_fan_in(rng, (d, config.ffn_dim), d)
        p[f"l{l}_ff_b1"] = np.zeros(config.ffn_dim)
        p[f"l{l}_ff_W2"] = _uniform_fan_in(rng, (config.ffn_dim, d), config.ffn_dim)
        p[f"l{l}_ff_b2"] = np.zeros(d)
    p["head_W1"] = _uniform_fan_in(rng, (config.head_in, config.head_hidden), config.head_in)
    p["head_b1"] = np.zeros(config.head_hidden)
    p["head_W2"] = _uniform_fan_in(rng, (config.head_hidden, 1), config.head_hidden)
    p["head_b2"] = np.zeros(1)
    return p


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_params(config, np.random.default_rng(0)).items()}


def cast_params(params: Params, dtype) -> Params:
    return {k: np.asarray(v, dtype=dtype) for k, v in params.items()}


def _assemble_conv_weight(params: Mapping[str, np.ndarray], config: ModelConfig,
                          dtype) -> np.ndarray:
    """Stack the per-scale kernels into one (3*k_max, conv_total) matrix.

    Narrow kernels sit centered in the widest tap window with zero taps
    around them; applied to the k_max-wide input windows this is exactly
    same-padded convolution at each scale.
    """
    k_max = max(config.kernel_scales)
    cc = config.conv_channels_per_scale
    W_big = np.zeros((3 * k_max, config.conv_total), dtype=dtype)
    for si, k in enumerate(config.kernel_scales):
        off = (k_max - k) // 2
        w = params[f"conv{si}_W"]  # (cc, 3, k)
        for c in range(3):
            W_big[c * k_max + off:c * k_max + off + k, si * cc:(si + 1) * cc] = w[:, c, :].T
    return W_big


def _scatter_conv_grads(dW_big: np.ndarray, config: ModelConfig) -> Params:
    k_max = max(config.kernel_scales)
    cc = config.conv_channels_per_scale
    grads: Params = {}
    for si, k in enumerate(config.kernel_scales):
        off = (k_max - k) // 2
        dw = np.empty((cc, 3, k), dtype=dW_big.dtype)
        for c in range(3):
            dw[:, c, :] = dW_big[c * k_max + off:c * k_max + off + k,
                                 si * cc:(si + 1) * cc].T
        grads[f"conv{si}_W"] = dw
    return grads


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv_std
    return g * xhat + b, (xhat, inv_std, g)


def _layer_norm_backward(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, g = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], p: float,
                  dtype) -> np.ndarray:
    u = rng.random(shape, dtype=np.float32 if dtype == np.float32 else np.float64)
    return (u >= p).astype(dtype) / dtype.type(1.0 - p)


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    B, T, d = x.shape
    return x.reshape(B, T, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    B, H, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)


def forward(
    x: np.ndarray,
    params: Mapping[str, np.ndarray],
    config: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    gates_forced_on: bool = False,
) -> tuple[np.ndarray, dict]:
    """Run the network; returns (probabilities, cache for the backward pass).

    train=True activates dropout using rng; gates_forced_on pins the channel
    gates to 1 (ablation hook reducing the conv branch to plain pooling).
    """
    dtype = np.dtype(params["in_W"].dtype)
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"expected (bs, sw, 3) input, got {x.shape}")
    B, T, _ = x.shape
    drop = config.dropout if train else 0.0
    if drop > 0.0 and rng is None:
        raise ValueError("training-mode forward needs an rng for dropout")

    cache: dict = {"x": x, "train": train, "drop": drop,
                   "gates_forced_on": gates_forced_on, "dtype": dtype}

    # conv branch (all scales in one GEMM over the widest window)
    k_max = max(config.kernel_scales)
    pad = k_max // 2
    x_pad = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    win = sliding_window_view(x_pad, k_max, axis=1)          # (B, T, 3, k_max)
    Xw = np.ascontiguousarray(win).reshape(B, T, 3 * k_max)
    W_big = _assemble_conv_weight(params, config, dtype)
    b_big = np.concatenate([params[f"conv{si}_b"] for si in range(3)]).astype(dtype)
    pre = Xw @ W_big + b_big                                  # (B, T, conv_total)
    A = relu(pre)
    cache["conv"] = {"Xw": Xw, "pre": pre}

    m = A.mean(axis=1)
    z1 = m @ params["se_W1"] + params["se_b1"]
    r1 = relu(z1)
    z2 = r1 @ params["se_W2"] + params["se_b2"]
    g = np.ones_like(z2) if gates_forced_on else sigmoid(z2)
    x_conv = (A * g[:, None, :]).mean(axis=1)
    cache["se"] = {"A": A, "m": m, "z1": z1, "r1": r1, "g": g}
    if not np.all(np.isfinite(x_conv)):
        raise NumericsError("conv_branch")

    # transformer branch
    pe = _pe_cached(T, config.d_model).astype(dtype)
    u = x @ params["in_W"] + params["in_b"] + pe[None, :, :]
    scale = dtype.type(1.0 / math.sqrt(config.d_model // config.n_heads))
    d = config.d_model
    cache["layers"] = []
    for l in range(config.n_layers):
        lc: dict = {}
        n1, ln1_cache = _layer_norm(u, params[f"l{l}_ln1_g"], params[f"l{l}_ln1_b"])
        W_qkv = np.concatenate(
            [params[f"l{l}_Wq"], params[f"l{l}_Wk"], params[f"l{l}_Wv"]], axis=1)
        b_qkv = np.concatenate(
            [params[f"l{l}_bq"], params[f"l{l}_bk"], params[f"l{l}_bv"]])
        qkv = n1 @ W_qkv + b_qkv                              # (B, T, 3d)
        q = _split_heads(qkv[:, :, :d], config.n_heads)
        kk = _split_heads(qkv[:, :, d:2 * d], config.n_heads)
        v = _split_heads(qkv[:, :, 2 * d:], config.n_heads)
        scores = (q @ kk.transpose(0, 1, 3, 2)) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        P = e / e.sum(axis=-1, keepdims=True)                 # (B, H, T, T)
        ctx = _merge_heads(P @ v)
        attn = ctx @ params[f"l{l}_Wo"] + params[f"l{l}_bo"]
        if drop > 0.0:
            lc["attn_mask"] = _dropout_mask(rng, attn.shape, drop, dtype)
            attn = attn * lc["attn_mask"]
        u1 = u + attn
        n2, ln2_cache = _layer_norm(u1, params[f"l{l}_ln2_g"], params[f"l{l}_ln2_b"])
        f_pre = n2 @ params[f"l{l}_ff_W1"] + params[f"l{l}_ff_b1"]
        f1 = relu(f_pre)
        f2 = f1 @ params[f"l{l}_ff_W2"] + params[f"l{l}_ff_b2"]
        if drop > 0.0:
            lc["ffn_mask"] = _dropout_mask(rng, f2.shape, drop, dtype)
            f2 = f2 * lc["ffn_mask"]
        u = u1 + f2
        lc.update({"ln1": ln1_cache, "q": q, "k": kk, "v": v, "P": P,
                   "ctx": ctx, "ln2": ln2_cache, "n1": n1, "n2": n2,
                   "f_pre": f_pre, "f1": f1})
        cache["layers"].append(lc)
    x_trans = u.mean(axis=1)
    if not np.all(np.isfinite(x_trans)):
        raise NumericsError("transformer_branch")

    # fusion head
    h = np.concatenate([x_conv, x_trans], axis=1)
    h_pre = h @ params["head_W1"] + params["head_b1"]
    h1 = relu(h_pre)
    if drop > 0.0:
        cache["head_mask"] = _dropout_mask(rng, h1.shape, drop, dtype)
        h1 = h1 * cache["head_mask"]
    logit = (h1 @ params["head_W2"] + params["head_b2"]).ravel()
    if not np.all(np.isfinite(logit)):
        raise NumericsError("head")
    p_hat = sigmoid(logit)
    cache.update({"h": h, "h_pre": h_pre, "h1": h1, "logit": logit, "p": p_hat})
    return p_hat, cache


def bce_loss(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy with probability clamping.

    Returns (loss, dL/dlogit); the clamp zeroes the gradient where it binds,
    matching what finite differences see.
    """
    dtype = np.asarray(p).dtype
    p64 = np.asarray(p, dtype=np.float64)
    y64 = np.asarray(y, dtype=np.float64)
    inside = (p64 > PROB_CLAMP) & (p64 < 1.0 - PROB_CLAMP)
    pt = np.clip(p64, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(-np.mean(y64 * np.log(pt) + (1.0 - y64) * np.log(1.0 - pt)))
    dlogit = np.where(inside, (pt - y64) / p64.size, 0.0).astype(dtype)
    return loss, dlogit


def backward(
    dlogit: np.ndarray,
    cache: dict,
    params: Mapping[str, np.ndarray],
    config: ModelConfig,
) -> Params:
    """Reverse-mode gradients for every parameter, mirroring forward()."""
    x = cache["x"]
    B, T, _ = x.shape
    drop = cache["drop"]
    d = config.d_model
    grads: Params = {}

    # head
    dlogit = dlogit.reshape(B, 1)
    grads["head_W2"] = cache["h1"].T @ dlogit
    grads["head_b2"] = dlogit.sum(axis=0)
    dh1 = dlogit @ params["head_W2"].T
    if drop > 0.0:
        dh1 = dh1 * cache["head_mask"]
    dh_pre = dh1 * (cache["h_pre"] > 0)
    grads["head_W1"] = cache["h"].T @ dh_pre
    grads["head_b1"] = dh_pre.sum(axis=0)
    dh = dh_pre @ params["head_W1"].T
    ct = config.conv_total
    dx_conv = dh[:, :ct]
    dx_trans = dh[:, ct:]

    # transformer branch
    du = np.broadcast_to(dx_trans[:, None, :] / T, (B, T, d))
    scale = x.dtype.type(1.0 / math.sqrt(d // config.n_heads))
    for l in reversed(range(config.n_layers)):
        lc = cache["layers"][l]
        df2 = du
        if drop > 0.0:
            df2 = df2 * lc["ffn_mask"]
        f1_flat = lc["f1"].reshape(-1, config.ffn_dim)
        grads[f"l{l}_ff_W2"] = f1_flat.T @ df2.reshape(-1, d)
        grads[f"l{l}_ff_b2"] = df2.sum(axis=(0, 1))
        df1 = df2 @ params[f"l{l}_ff_W2"].T
        df_pre = df1 * (lc["f_pre"] > 0)
        n2_flat = lc["n2"].reshape(-1, d)
        grads[f"l{l}_ff_W1"] = n2_flat.T @ df_pre.reshape(-1, config.ffn_dim)
        grads[f"l{l}_ff_b1"] = df_pre.sum(axis=(0, 1))
        dn2 = df_pre @ params[f"l{l}_ff_W1"].T
        du1, dg2, db2 = _layer_norm_backward(dn2, lc["ln2"])
        grads[f"l{l}_ln2_g"] = dg2
        grads[f"l{l}_ln2_b"] = db2
        du1 = du1 + du  # residual

        dattn = du1
        if drop > 0.0:
            dattn = dattn * lc["attn_mask"]
        ctx_flat = lc["ctx"].reshape(-1, d)
        grads[f"l{l}_Wo"] = ctx_flat.T @ dattn.reshape(-1, d)
        grads[f"l{l}_bo"] = dattn.sum(axis=(0, 1))
        dctx = _split_heads(dattn @ params[f"l{l}_Wo"].T, config.n_heads)
        P, q, kk, v = lc["P"], lc["q"], lc["k"], lc["v"]
        dP = dctx @ v.transpose(0, 1, 3, 2)
        dv = P.transpose(0, 1, 3, 2) @ dctx
        dscores = (dP - (dP * P).sum(axis=-1, keepdims=True)) * P
        dq = (dscores @ kk) * scale
        dk = (dscores.transpose(0, 1, 3, 2) @ q) * scale
        dqkv = np.concatenate(
            [_merge_heads(dq), _merge_heads(dk), _merge_heads(dv)], axis=-1)
        n1_flat = lc["n1"].reshape(-1, d)
        dW_qkv = n1_flat.T @ dqkv.reshape(-1, 3 * d)
        db_qkv = dqkv.sum(axis=(0, 1))
        for i, name in enumerate(("q", "k", "v")):
            grads[f"l{l}_W{name}"] = dW_qkv[:, i * d:(i + 1) * d]
            grads[f"l{l}_b{name}"] = db_qkv[i * d:(i + 1) * d]
        W_qkv = np.concatenate(
            [params[f"l{l}_Wq"], params[f"l{l}_Wk"], params[f"l{l}_Wv"]], axis=1)
        dn1 = dqkv @ W_qkv.T
        du_ln, dg1, db1 = _layer_norm_backward(dn1, lc["ln1"])
        grads[f"l{l}_ln1_g"] = dg1
        grads[f"l{l}_ln1_b"] = db1
        du = du_ln + du1  # residual into the layer input

    x_flat = x.reshape(-1, 3)
    grads["in_W"] = x_flat.T @ du.reshape(-1, d)
    grads["in_b"] = du.sum(axis=(0, 1))

    # conv branch
    se = cache["se"]
    A, g = se["A"], se["g"]
    dxc_t = dx_conv[:, None, :] / T                           # broadcastable
    dA = dxc_t * g[:, None, :]
    if cache["gates_forced_on"]:
        for key in ("se_W1", "se_b1", "se_W2", "se_b2"):
            grads[key] = np.zeros_like(params[key])
    else:
        dg = (dxc_t * A).sum(axis=1)
        dz2 = dg * g * (1.0 - g)
        grads["se_W2"] = se["r1"].T @ dz2
        grads["se_b2"] = dz2.sum(axis=0)
        dr1 = dz2 @ params["se_W2"].T
        dz1 = dr1 * (se["z1"] > 0)
        grads["se_W1"] = se["m"].T @ dz1
        grads["se_b1"] = dz1.sum(axis=0)
        dm = dz1 @ params["se_W1"].T
        dA = dA + dm[:, None, :] / T

    dpre = dA * (cache["conv"]["pre"] > 0)
    k_max = max(config.kernel_scales)
    Xw = cache["conv"]["Xw"]
    dW_big = Xw.reshape(-1, 3 * k_max).T @ dpre.reshape(-1, ct)
    grads.update(_scatter_conv_grads(dW_big, config))
    db_big = dpre.sum(axis=(0, 1))
    cc = config.conv_channels_per_scale
    for si in range(3):
        grads[f"conv{si}_b"] = db_big[si * cc:(si + 1) * cc]
    return grads


def loss_and_grads(
    x: np.ndarray,
    y: np.ndarray,
    params: Mapping[str, np.ndarray],
    config: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, Params]:
    p, cache = forward(x, params, config, train=train, rng=rng)
    loss, dlogit = bce_loss(p, y)
    return loss, backward(dlogit, cache, params, config)


def predict_proba(
    x: np.ndarray,
    params: Mapping[str, np.ndarray],
    config: ModelConfig,
    chunk: int = 512,
) -> np.ndarray:
    """Eval-mode probabilities, chunked to bound memory."""
    x = np.asarray(x)
    outs = []
    for i in range(0, x.shape[0], chunk):
        p, _ = forward(x[i:i + chunk], params, config, train=False)
        outs.append(np.asarray(p, dtype=np.float64))
    return np.concatenate(outs)


def predict_window(
    values: np.ndarray,
    params: Mapping[str, np.ndarray],
    config: ModelConfig,
) -> Prediction:
    """Score a single (sw, 3) window; intent iff y_hat strictly exceeds 0.5."""
    p = predict_proba(values[None, :, :], params, config)[0]
    return Prediction.from_probability(p)
