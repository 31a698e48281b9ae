"""Gumbel(0,1) sampling and the temperature-controlled softmax relaxation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, as_tensor, softmax
from .errors import DimensionError, ParameterError

# uniform draws clamped away from {0,1} so the double log stays finite
UNIFORM_CLIP = 1e-12


@dataclass(frozen=True)
class GumbelSample:
    """I.i.d. Gumbel(0,1) noise; constant with respect to the graph."""

    noise: np.ndarray
    seed: int | None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.noise.shape


def sample_gumbel(shape, seed: int) -> GumbelSample:
    """Reproducible Gumbel(0,1) draws via -log(-log(u)), u ~ U(eps, 1-eps)."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise DimensionError(f"sample_gumbel requires a nonempty shape, got {shape}")
    u = np.random.default_rng(seed).uniform(size=shape)
    u = np.clip(u, UNIFORM_CLIP, 1.0 - UNIFORM_CLIP)
    return GumbelSample(noise=-np.log(-np.log(u)), seed=seed)


def zero_gumbel(shape) -> GumbelSample:
    """Noise-free sample, used for deterministic inference."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    return GumbelSample(noise=np.zeros(shape), seed=None)


def gumbel_softmax(log_pi, noise: GumbelSample, tau: float) -> Tensor:
    """softmax((log_pi + g) / tau); differentiable w.r.t. log_pi only."""
    if tau <= 0.0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    log_pi = as_tensor(log_pi)
    if log_pi.shape != noise.shape:
        raise DimensionError(
            f"logits shape {log_pi.shape} != noise shape {noise.shape}"
        )
    return softmax((log_pi + Tensor(noise.noise)) * (1.0 / tau), axis=-1)


def hard_limit_argmax(log_pi, noise: GumbelSample) -> int:
    """Index the tau -> 0 limit collapses onto; ties go to the lowest index."""
    log_pi = as_tensor(log_pi)
    return int(np.argmax(log_pi.values + noise.noise))
