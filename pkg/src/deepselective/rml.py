"""Representation matching: fuse the selection-side and autoencoder-side latents.

r_add gates the sum of the two latents by a sigmoid of their concatenation;
r_sub keeps the rectified difference; the alignment loss is one minus the
cosine similarity, so minimizing it pulls the two latents into the same
direction while staying scale-invariant.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .diffcore import (
    Tensor,
    as_tensor,
    clip,
    concat,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    sqrt,
    sub,
    swapaxes,
    tsum,
)
from .errors import DimensionError

DEGENERATE_NORM = 1e-12


def init_rml_params(n_features: int, latent_dim: int, rng: np.random.Generator) -> dict:
    """Raw parameter arrays for the matching layer, keyed under 'rml.'."""
    d = latent_dim

    def uniform(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return {
        "rml.w1": uniform(2 * d, (d, 2 * d)),
        "rml.b1": np.zeros(d),
        "rml.w2": uniform(d, (d, d)),
        "rml.b2": np.zeros(d),
        "rml.proj": uniform(n_features, (d, n_features)),
    }


def _rows(t: Tensor) -> tuple[Tensor, bool]:
    if t.ndim == 1:
        return reshape(t, (1, t.shape[0])), True
    if t.ndim == 2:
        return t, False
    raise DimensionError(f"expected a vector or a batch of vectors, got {t.shape}")


def _pair(z_s, z_r) -> tuple[Tensor, Tensor, bool]:
    zs, single_s = _rows(as_tensor(z_s))
    zr, single_r = _rows(as_tensor(z_r))
    if zs.shape != zr.shape:
        raise DimensionError(f"latent shapes differ: {zs.shape} vs {zr.shape}")
    return zs, zr, single_s and single_r


def project_zs(x_masked, proj) -> Tensor:
    """Linear map of the masked input into the shared latent space."""
    x = as_tensor(x_masked)
    proj = as_tensor(proj)
    single = x.ndim == 1
    if single:
        x = reshape(x, (1, x.shape[0]))
    if x.shape[-1] != proj.shape[-1]:
        raise DimensionError(
            f"input feature count {x.shape[-1]} != projection width {proj.shape[-1]}"
        )
    z = matmul(x, swapaxes(proj, 0, 1))
    return reshape(z, (proj.shape[0],)) if single else z


def r_add(z_s, z_r, w1, b1) -> Tensor:
    """sigmoid(W1 [z_s; z_r] + b1) * (z_s + z_r)."""
    zs, zr, single = _pair(z_s, z_r)
    w1, b1 = as_tensor(w1), as_tensor(b1)
    d = zs.shape[-1]
    if w1.shape != (d, 2 * d):
        raise DimensionError(f"gate weight must be {(d, 2 * d)}, got {w1.shape}")
    z = concat([zs, zr], axis=-1)
    gate = sigmoid(matmul(z, swapaxes(w1, 0, 1)) + b1)
    out = mul(gate, zs + zr)
    return reshape(out, (d,)) if single else out


def r_sub(z_s, z_r, w2, b2) -> Tensor:
    """ReLU(W2 (z_r - z_s) + b2): rectified complementary information."""
    zs, zr, single = _pair(z_s, z_r)
    w2, b2 = as_tensor(w2), as_tensor(b2)
    d = zs.shape[-1]
    if w2.shape != (d, d):
        raise DimensionError(f"complement weight must be {(d, d)}, got {w2.shape}")
    out = relu(matmul(sub(zr, zs), swapaxes(w2, 0, 1)) + b2)
    return reshape(out, (d,)) if single else out


def _row_cosine(zr: Tensor, zs: Tensor) -> tuple[Tensor, np.ndarray]:
    """Per-row cosine; degenerate rows (either norm ~ 0) contribute 0."""
    dots = tsum(mul(zr, zs), axis=-1)
    nr = sqrt(tsum(mul(zr, zr), axis=-1))
    ns = sqrt(tsum(mul(zs, zs), axis=-1))
    safe = ((nr.values >= DEGENERATE_NORM) & (ns.values >= DEGENERATE_NORM)).astype(np.float64)
    if not safe.all():
        warnings.warn(
            "degenerate latent (norm < 1e-12) in cosine alignment; "
            "treating its alignment loss as neutral",
            RuntimeWarning,
            stacklevel=3,
        )
    denom = mul(nr, ns) + Tensor(1.0 - safe)  # 1.0 where degenerate, avoids 0/0
    # rounding can push |cos| past 1 by ~1e-16; clamp to keep losses in [0, 2]
    return clip(mul(dots, Tensor(safe)) / denom, -1.0, 1.0), safe


def cosine_similarity(z_r, z_s) -> Tensor:
    """Mean cosine similarity over rows (scalar for vector inputs)."""
    zs, zr, _ = _pair(z_s, z_r)
    cos, _ = _row_cosine(zr, zs)
    return mean(cos)


def align_loss(z_r, z_s) -> Tensor:
    """1 - cos(z_r, z_s), in [0, 2]; degenerate rows count as neutral 1."""
    zs, zr, _ = _pair(z_s, z_r)
    cos, _ = _row_cosine(zr, zs)
    return mean(1.0 - cos)


def final_representation(r_add_part, r_sub_part) -> Tensor:
    """[r_add; r_sub] along the latent axis."""
    ra, rs = as_tensor(r_add_part), as_tensor(r_sub_part)
    if ra.shape != rs.shape:
        raise DimensionError(f"part shapes differ: {ra.shape} vs {rs.shape}")
    return concat([ra, rs], axis=-1)
