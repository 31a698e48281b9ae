"""Attentive transformer autoencoder.

The encoder treats each *selected* feature as a token (value projection
plus a learned per-feature embedding), runs multi-head self-attention
restricted to the support, and mean-pools into a latent vector. The
decoder expands the latent back to one token per feature through learned
queries and unmasked self-attention. Training minimizes the Frobenius
norm of the reconstruction error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffcore import (
    Tensor,
    as_tensor,
    concat,
    frobenius_norm,
    layer_norm,
    matmul,
    mean,
    relu,
    reshape,
    softmax,
    sub,
    swapaxes,
    take,
    tsum,
)
from .errors import DimensionError, ParameterError, SelectionError

__all__ = [
    "AtaConfig",
    "attention",
    "masked_attention",
    "init_ata_params",
    "encode",
    "decode",
    "reconstruction_loss",
]


@dataclass(frozen=True)
class AtaConfig:
    n_features: int
    latent_dim: int = 16
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    ff_dim: int | None = None  # defaults to 4 * latent_dim

    def __post_init__(self):
        for name in ("n_features", "latent_dim", "n_heads", "n_encoder_layers", "n_decoder_layers"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.latent_dim % self.n_heads != 0:
            raise ParameterError(
                f"latent_dim {self.latent_dim} not divisible by n_heads {self.n_heads}"
            )
        if self.ff_dim is not None and self.ff_dim < 1:
            raise ParameterError(f"ff_dim must be >= 1, got {self.ff_dim}")

    @property
    def head_dim(self) -> int:
        return self.latent_dim // self.n_heads

    @property
    def feedforward_dim(self) -> int:
        return self.ff_dim if self.ff_dim is not None else 4 * self.latent_dim


def attention(q, k, v) -> Tensor:
    """softmax(q k^T / sqrt(d_k)) v over the last two axes."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim < 2 or k.ndim < 2 or v.ndim < 2:
        raise DimensionError("attention operands must have ndim >= 2")
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(
            f"query dim {q.shape[-1]} != key dim {k.shape[-1]}"
        )
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(
            f"key count {k.shape[-2]} != value count {v.shape[-2]}"
        )
    d_k = q.shape[-1]
    # scaling q instead of the [.., m, n] score matrix saves a large temporary
    scores = matmul(q * (1.0 / math.sqrt(d_k)), swapaxes(k, -1, -2))
    return matmul(softmax(scores, axis=-1), v)


def masked_attention(q, k, v, support) -> Tensor:
    """Attention over the token rows listed in `support` only."""
    support = tuple(int(i) for i in support)
    if len(support) == 0:
        raise SelectionError("masked attention requires a nonempty support")
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    return attention(
        take(q, support, axis=-2),
        take(k, support, axis=-2),
        take(v, support, axis=-2),
    )


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_block(rng, prefix: str, cfg: AtaConfig) -> dict[str, np.ndarray]:
    d, ff = cfg.latent_dim, cfg.feedforward_dim
    p = {}
    for name in ("wq", "wk", "wv", "wo"):
        p[f"{prefix}.attn.{name}"] = _uniform(rng, d, (d, d))
    for name in ("bq", "bk", "bv", "bo"):
        p[f"{prefix}.attn.{name}"] = np.zeros(d)
    p[f"{prefix}.ln1.gain"] = np.ones(d)
    p[f"{prefix}.ln1.bias"] = np.zeros(d)
    p[f"{prefix}.ln2.gain"] = np.ones(d)
    p[f"{prefix}.ln2.bias"] = np.zeros(d)
    p[f"{prefix}.ff.w1"] = _uniform(rng, d, (d, ff))
    p[f"{prefix}.ff.b1"] = np.zeros(ff)
    p[f"{prefix}.ff.w2"] = _uniform(rng, ff, (ff, d))
    p[f"{prefix}.ff.b2"] = np.zeros(d)
    return p


def init_ata_params(cfg: AtaConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Raw parameter arrays, keyed by dotted names under the 'ata.' prefix."""
    n, d = cfg.n_features, cfg.latent_dim
    p: dict[str, np.ndarray] = {}
    p["ata.embed.value"] = _uniform(rng, 1, (n, d))
    p["ata.embed.feature"] = _uniform(rng, d, (n, d))
    for i in range(cfg.n_encoder_layers):
        p.update(_init_block(rng, f"ata.enc{i}", cfg))
    p["ata.pool.w"] = _uniform(rng, d, (d, d))
    p["ata.pool.b"] = np.zeros(d)
    p["ata.dec.queries"] = _uniform(rng, d, (n, d))
    p["ata.dec.zproj.w"] = _uniform(rng, d, (d, d))
    p["ata.dec.zproj.b"] = np.zeros(d)
    for i in range(cfg.n_decoder_layers):
        p.update(_init_block(rng, f"ata.dec{i}", cfg))
    p["ata.head.w"] = _uniform(rng, d, (n, d))
    p["ata.head.b"] = np.zeros(n)
    return p


def _multi_head(tokens: Tensor, params, prefix: str, cfg: AtaConfig) -> Tensor:
    b, t, d = tokens.shape
    h, dk = cfg.n_heads, cfg.head_dim

    def proj(name: str) -> Tensor:
        w = matmul(tokens, params[f"{prefix}.attn.w{name}"]) + params[f"{prefix}.attn.b{name}"]
        return swapaxes(reshape(w, (b, t, h, dk)), 1, 2)  # [b, h, t, dk]

    ctx = attention(proj("q"), proj("k"), proj("v"))
    ctx = reshape(swapaxes(ctx, 1, 2), (b, t, d))
    return matmul(ctx, params[f"{prefix}.attn.wo"]) + params[f"{prefix}.attn.bo"]


def _block(tokens: Tensor, params, prefix: str, cfg: AtaConfig) -> Tensor:
    a = layer_norm(
        tokens + _multi_head(tokens, params, prefix, cfg),
        gain=params[f"{prefix}.ln1.gain"],
        bias=params[f"{prefix}.ln1.bias"],
    )
    hidden = relu(matmul(a, params[f"{prefix}.ff.w1"]) + params[f"{prefix}.ff.b1"])
    ff = matmul(hidden, params[f"{prefix}.ff.w2"]) + params[f"{prefix}.ff.b2"]
    return layer_norm(
        a + ff,
        gain=params[f"{prefix}.ln2.gain"],
        bias=params[f"{prefix}.ln2.bias"],
    )


def encode(x_masked, support, params, cfg: AtaConfig) -> Tensor:
    """Masked input -> latent. Only tokens in `support` ever enter the graph."""
    support = tuple(int(i) for i in support)
    if len(support) == 0:
        raise SelectionError("encoding requires a nonempty support")
    x = as_tensor(x_masked)
    single = x.ndim == 1
    if single:
        x = reshape(x, (1, x.shape[0]))
    if x.shape[-1] != cfg.n_features:
        raise DimensionError(
            f"input feature count {x.shape[-1]} != configured {cfg.n_features}"
        )
    b, t = x.shape[0], len(support)
    w_val = take(params["ata.embed.value"], support, axis=0)
    embed = take(params["ata.embed.feature"], support, axis=0)
    x_sel = take(x, support, axis=1)
    tokens = reshape(x_sel, (b, t, 1)) * w_val + embed
    for i in range(cfg.n_encoder_layers):
        tokens = _block(tokens, params, f"ata.enc{i}", cfg)
    pooled = mean(tokens, axis=1)
    z = matmul(pooled, params["ata.pool.w"]) + params["ata.pool.b"]
    return reshape(z, (cfg.latent_dim,)) if single else z


def decode(z_r, params, cfg: AtaConfig) -> Tensor:
    """Latent -> reconstruction over all features, regardless of support size."""
    z = as_tensor(z_r)
    single = z.ndim == 1
    if single:
        z = reshape(z, (1, z.shape[0]))
    if z.shape[-1] != cfg.latent_dim:
        raise DimensionError(
            f"latent dim {z.shape[-1]} != configured {cfg.latent_dim}"
        )
    b, n, d = z.shape[0], cfg.n_features, cfg.latent_dim
    zq = matmul(z, params["ata.dec.zproj.w"]) + params["ata.dec.zproj.b"]
    tokens = params["ata.dec.queries"] + reshape(zq, (b, 1, d))
    for i in range(cfg.n_decoder_layers):
        tokens = _block(tokens, params, f"ata.dec{i}", cfg)
    x_hat = tsum(tokens * params["ata.head.w"], axis=-1) + params["ata.head.b"]
    return reshape(x_hat, (n,)) if single else x_hat


def reconstruction_loss(x_target, x_hat) -> Tensor:
    """Frobenius norm of the reconstruction error over the whole batch."""
    x_target, x_hat = as_tensor(x_target), as_tensor(x_hat)
    if x_target.shape != x_hat.shape:
        raise DimensionError(
            f"target shape {x_target.shape} != reconstruction shape {x_hat.shape}"
        )
    return frobenius_norm(sub(x_target, x_hat))
