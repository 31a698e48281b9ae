"""Dynamic gating feature selection.

Per-feature logits are relaxed through the Gumbel-Softmax into a selection
probability vector p; the support S is the smallest index set whose
cumulative probability reaches 0.5 (features admitted in descending-p
order, ties to the lowest index). Masking inputs with the support's 0/1
indicator cuts every gradient path from unselected coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, _accumulate, _make, _unbroadcast, as_tensor, clip, log, mul, tsum
from .errors import DimensionError
from .gumbel import GumbelSample, gumbel_softmax, sample_gumbel, zero_gumbel

CUMULATIVE_MASS = 0.5


@dataclass(frozen=True)
class SelectionState:
    """One realized selection: probabilities, hard mask, and support."""

    log_pi: Tensor
    tau: float
    p: Tensor  # graph-connected to log_pi
    mask: np.ndarray  # 0/1 floats, constant during backward
    support: tuple[int, ...]  # ascending feature indices
    noise: GumbelSample

    @property
    def n_features(self) -> int:
        return self.mask.shape[0]


def select_support(p: np.ndarray, threshold: float = CUMULATIVE_MASS) -> tuple[int, ...]:
    """Smallest set reaching `threshold` mass, greedy descending-p, ties low-index."""
    order = np.argsort(-p, kind="stable")
    total = 0.0
    chosen = []
    for idx in order:
        chosen.append(int(idx))
        total += p[idx]
        if total >= threshold:
            break
    return tuple(sorted(chosen))


def compute_selection(log_pi, tau: float, seed: int | None = None) -> SelectionState:
    """Draw a relaxed selection; `seed=None` means zero noise (deterministic)."""
    log_pi = as_tensor(log_pi)
    if log_pi.ndim != 1:
        raise DimensionError(f"selection logits must be 1-D, got {log_pi.shape}")
    noise = zero_gumbel(log_pi.shape) if seed is None else sample_gumbel(log_pi.shape, seed)
    p = gumbel_softmax(log_pi, noise, tau)
    support = select_support(p.values)
    mask = np.zeros(log_pi.shape[0])
    mask[list(support)] = 1.0
    return SelectionState(log_pi=log_pi, tau=tau, p=p, mask=mask, support=support, noise=noise)


def _check_last_dim(x: Tensor, state: SelectionState) -> None:
    if x.shape[-1] != state.n_features:
        raise DimensionError(
            f"input last dimension {x.shape[-1]} != feature count {state.n_features}"
        )


def apply_mask(x, state: SelectionState) -> Tensor:
    """x * m with the hard 0/1 mask; unselected coordinates get zero gradient."""
    x = as_tensor(x)
    _check_last_dim(x, state)
    return mul(x, Tensor(state.mask))


def straight_through_mask(x, state: SelectionState) -> Tensor:
    """Hard mask forward, relaxed mask backward.

    Forward value is exactly x * m. The backward pass pretends the forward
    was x * p_rescaled with p_rescaled = p * m, so selection logits receive
    gradient through the selected coordinates while unselected input
    coordinates keep an exactly zero gradient.
    """
    x = as_tensor(x)
    _check_last_dim(x, state)
    p = state.p
    mask = state.mask

    def backward(g):
        _accumulate(x, g * (p.values * mask), own=True)
        _accumulate(p, _unbroadcast(g * x.values * mask, p.shape), own=True)

    return _make(x.values * mask, (x, p), backward)


def sparsity_penalty(state: SelectionState, alpha: float) -> Tensor:
    """alpha * (1 - H(p)/log N): zero for uniform p, alpha for one-hot p."""
    n = state.n_features
    if n == 1:
        return Tensor(alpha)  # single feature: p is always one-hot
    p = state.p
    entropy = -tsum(mul(p, log(clip(p, 1e-300, 1.0))))
    return alpha * (1.0 - entropy * (1.0 / math.log(n)))


def support_report(state: SelectionState, feature_names: list[str] | None = None) -> dict:
    """JSON-ready view of the current selection."""
    n = state.n_features
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(n)]
    if len(names) != n:
        raise DimensionError(f"{len(names)} names for {n} features")
    return {
        "support": list(state.support),
        "probabilities": [float(v) for v in state.p.values],
        "feature_names": names,
    }


def write_support_report(path, state: SelectionState, feature_names=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(support_report(state, feature_names), fh, indent=2, sort_keys=True)
        fh.write("\n")
