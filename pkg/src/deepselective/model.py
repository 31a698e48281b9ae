"""End-to-end assembly: forward pass, composite loss, optimizer, training loop.

The pipeline per sample is
    selection -> straight-through mask -> {encoder latent z_r, linear latent z_s}
    -> {gated sum r_add, rectified difference r_sub} -> MLP head -> probability,
with the decoder reconstructing the masked input from z_r. The selection
temperature is driven across epochs by the PID controller fed with the
epoch-mean prediction + alignment error.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable

import numpy as np

from . import ata, rml
from .dgfs import (
    SelectionState,
    apply_mask,
    compute_selection,
    sparsity_penalty,
    straight_through_mask,
)
from .diffcore import (
    Tensor,
    as_tensor,
    clip,
    log,
    matmul,
    mean,
    parameter,
    relu,
    reshape,
    sigmoid,
    tsum,
)
from .errors import ArtifactError, DataError, DimensionError, ParameterError, SelectionError
from .serialization import read_store, write_store
from .sparsity import PidState, error_signal, make_pid, update_tau

PROB_CLIP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    """Architecture plus optimization settings; all fields have usable defaults."""

    n_features: int
    latent_dim: int = 16
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    ff_dim: int | None = None
    head_hidden: int | None = None  # defaults to 2 * latent_dim
    beta1: float = 0.1  # alignment weight
    beta2: float = 0.1  # reconstruction weight
    alpha: float = 0.01  # sparsity weight
    learning_rate: float = 1e-3
    logit_lr_scale: float = 1.0  # multiplier on the selection-logit step size
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    tau0: float = 1.0
    k_p: float = 0.05
    k_i: float = 0.001
    k_d: float = 0.01
    tau_min: float = 0.1
    tau_max: float = 5.0
    align_raw_cosine: bool = False  # use raw cosine instead of 1 - cosine
    pid_align_weighted: bool = False  # feed beta1 * align into the PID error

    def __post_init__(self):
        if self.n_features < 1:
            raise ParameterError(f"n_features must be >= 1, got {self.n_features}")
        for name in ("beta1", "beta2", "alpha"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def ata_config(self) -> ata.AtaConfig:
        return ata.AtaConfig(
            n_features=self.n_features,
            latent_dim=self.latent_dim,
            n_heads=self.n_heads,
            n_encoder_layers=self.n_encoder_layers,
            n_decoder_layers=self.n_decoder_layers,
            ff_dim=self.ff_dim,
        )

    @property
    def head_width(self) -> int:
        return self.head_hidden if self.head_hidden is not None else 2 * self.latent_dim


@dataclass
class ModelParams:
    """Every trainable tensor, addressable by dotted name, plus the live tau."""

    config: TrainConfig
    tensors: dict[str, Tensor]
    tau: float

    def named(self) -> list[tuple[str, Tensor]]:
        return sorted(self.tensors.items())

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None


@dataclass(frozen=True)
class ForwardResult:
    y_hat: Tensor
    state: SelectionState
    z_s: Tensor
    z_r: Tensor
    x_hat: Tensor
    x_masked: Tensor

    @property
    def support(self) -> tuple[int, ...]:
        return self.state.support


def init_params(config: TrainConfig) -> ModelParams:
    """Fan-in-scaled uniform weights, zero biases, all-zero selection logits."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    raw: dict[str, np.ndarray] = {"dgfs.log_pi": np.zeros(config.n_features)}
    raw.update(ata.init_ata_params(config.ata_config, rng))
    raw.update(rml.init_rml_params(config.n_features, config.latent_dim, rng))
    d2, hh = 2 * config.latent_dim, config.head_width

    def uniform(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    raw["head.w1"] = uniform(d2, (d2, hh))
    raw["head.b1"] = np.zeros(hh)
    raw["head.w2"] = uniform(hh, (hh, 1))
    raw["head.b2"] = np.zeros(1)
    tensors = {name: parameter(values) for name, values in raw.items()}
    return ModelParams(config=config, tensors=tensors, tau=config.tau0)


def forward(
    params: ModelParams,
    x,
    tau: float | None = None,
    seed: int | None = None,
    mask_mode: str = "hard",
) -> ForwardResult:
    """Run the full pipeline on one sample or a batch.

    `seed=None` draws no Gumbel noise (deterministic inference).
    `mask_mode="hard"` is the straight-through trained path; "soft" replaces
    the hard mask with the probabilities themselves (everywhere-smooth, used
    by gradient checking).
    """
    if mask_mode not in ("hard", "soft"):
        raise ParameterError(f"unknown mask_mode {mask_mode!r}")
    cfg = params.config
    t = params.tensors
    x = as_tensor(x)
    single = x.ndim == 1
    xb = reshape(x, (1, x.shape[0])) if single else x
    if xb.ndim != 2 or xb.shape[1] != cfg.n_features:
        raise DimensionError(
            f"input shape {x.shape} incompatible with {cfg.n_features} features"
        )
    state = compute_selection(t["dgfs.log_pi"], params.tau if tau is None else tau, seed)
    if len(state.support) == 0:
        raise SelectionError("selection produced an empty support")
    if mask_mode == "hard":
        x_masked = straight_through_mask(xb, state)
        support = state.support
    else:
        x_masked = xb * state.p
        support = tuple(range(cfg.n_features))
    z_r = ata.encode(x_masked, support, t, cfg.ata_config)
    z_s = rml.project_zs(x_masked, t["rml.proj"])
    ra = rml.r_add(z_s, z_r, t["rml.w1"], t["rml.b1"])
    rs = rml.r_sub(z_s, z_r, t["rml.w2"], t["rml.b2"])
    rep = rml.final_representation(ra, rs)
    hidden = relu(matmul(rep, t["head.w1"]) + t["head.b1"])
    logits = reshape(matmul(hidden, t["head.w2"]) + t["head.b2"], (xb.shape[0],))
    y_hat = sigmoid(logits)
    x_hat = ata.decode(z_r, t, cfg.ata_config)
    if single:
        y_hat = reshape(y_hat, ())
        x_hat = reshape(x_hat, (cfg.n_features,))
        x_masked = reshape(x_masked, (cfg.n_features,))
        z_r = reshape(z_r, (cfg.latent_dim,))
        z_s = reshape(z_s, (cfg.latent_dim,))
    return ForwardResult(y_hat=y_hat, state=state, z_s=z_s, z_r=z_r, x_hat=x_hat, x_masked=x_masked)


def binary_cross_entropy(y, y_hat: Tensor) -> Tensor:
    """Mean BCE; probabilities clamped to [1e-7, 1 - 1e-7] before the logs."""
    y = np.asarray(y, dtype=np.float64)
    p = clip(y_hat, PROB_CLIP, 1.0 - PROB_CLIP)
    return mean(-(Tensor(y) * log(p) + Tensor(1.0 - y) * log(1.0 - p)))


def total_loss(y, result: ForwardResult, config: TrainConfig) -> tuple[Tensor, dict]:
    """Composite objective and its float-valued parts.

    pred = BCE + alpha * sparsity surrogate; total = pred + beta1 * align
    + beta2 * reconstruction (Frobenius over the masked coordinates).
    """
    y = np.asarray(y, dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be binary 0/1")
    pred = binary_cross_entropy(y, result.y_hat) + sparsity_penalty(result.state, config.alpha)
    if config.align_raw_cosine:
        align = rml.cosine_similarity(result.z_r, result.z_s)
    else:
        align = rml.align_loss(result.z_r, result.z_s)
    recon = ata.reconstruction_loss(result.x_masked.detach(), apply_mask(result.x_hat, result.state))
    total = pred + config.beta1 * align + config.beta2 * recon
    parts = {
        "pred_loss": float(pred.values),
        "align_loss": float(align.values),
        "recon_loss": float(recon.values),
        "total_loss": float(total.values),
    }
    return total, parts


class Adam:
    """Adaptive moment estimation with bias correction; deterministic."""

    def __init__(
        self,
        params: ModelParams,
        lr: float = 1e-3,
        b1: float = 0.9,
        b2: float = 0.999,
        eps: float = 1e-8,
        lr_scales: dict[str, float] | None = None,
    ):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.lr_scales = lr_scales or {}
        self.step_count = 0
        self.m = {name: np.zeros_like(t.values) for name, t in params.named()}
        self.v = {name: np.zeros_like(t.values) for name, t in params.named()}

    def step(self, params: ModelParams) -> None:
        self.step_count += 1
        c1 = 1.0 - self.b1**self.step_count
        c2 = 1.0 - self.b2**self.step_count
        for name, t in params.named():
            if t.grad is None:
                continue
            g = t.grad
            lr = self.lr * self.lr_scales.get(name, 1.0)
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            t.values -= lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


@dataclass
class TrainingReport:
    """Per-epoch losses, the temperature trajectory, and the final selection."""

    epochs: list[dict] = field(default_factory=list)
    final_support: list[int] = field(default_factory=list)
    final_probabilities: list[float] = field(default_factory=list)
    final_tau: float = 0.0
    feature_names: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def tau_trajectory_csv(self) -> str:
        lines = ["epoch,error,tau"]
        for row in self.epochs:
            lines.append(f"{row['epoch']},{row['error']!r},{row['tau_next']!r}")
        return "\n".join(lines) + "\n"


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterable[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train(dataset, config: TrainConfig) -> tuple[ModelParams, TrainingReport]:
    """Mini-batch Adam with a fresh Gumbel draw per step and per-epoch PID updates."""
    X = dataset.split_features("train")
    y = dataset.split_labels("train")
    if X.shape[0] == 0:
        raise DataError("training split is empty")
    if len(np.unique(y)) < 2:
        raise DataError("training split must contain both classes")
    if X.shape[1] != config.n_features:
        raise DimensionError(
            f"dataset has {X.shape[1]} features, config expects {config.n_features}"
        )
    params = init_params(config)
    optim = Adam(
        params,
        lr=config.learning_rate,
        lr_scales={"dgfs.log_pi": config.logit_lr_scale},
    )
    pid = make_pid(config.tau0, config.k_p, config.k_i, config.k_d, config.tau_min, config.tau_max)
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    rng_shuffle = np.random.default_rng(seeds[0])
    rng_noise = np.random.default_rng(seeds[1])
    report = TrainingReport(feature_names=list(dataset.feature_names), config=asdict(config))
    n = X.shape[0]
    for epoch in range(config.epochs):
        sums = {"pred_loss": 0.0, "align_loss": 0.0, "recon_loss": 0.0, "total_loss": 0.0}
        for idx in _epoch_batches(n, config.batch_size, rng_shuffle):
            noise_seed = int(rng_noise.integers(0, 2**63 - 1))
            result = forward(params, Tensor(X[idx]), tau=pid.tau, seed=noise_seed)
            loss, parts = total_loss(y[idx], result, config)
            params.zero_grads()
            loss.backward()
            optim.step(params)
            weight = len(idx) / n
            for key in sums:
                sums[key] += parts[key] * weight
        align_term = sums["align_loss"] * (config.beta1 if config.pid_align_weighted else 1.0)
        e_t = error_signal(sums["pred_loss"], align_term)
        tau_used = pid.tau
        pid = update_tau(pid, e_t)
        snapshot = compute_selection(params.tensors["dgfs.log_pi"], pid.tau, None)
        report.epochs.append(
            {
                "epoch": epoch,
                "pred_loss": sums["pred_loss"],
                "align_loss": sums["align_loss"],
                "recon_loss": sums["recon_loss"],
                "total_loss": sums["total_loss"],
                "tau": tau_used,
                "error": e_t,
                "tau_next": pid.tau,
                "support_size": len(snapshot.support),
            }
        )
    params.tau = pid.tau
    final_state = compute_selection(params.tensors["dgfs.log_pi"], params.tau, None)
    report.final_support = list(final_state.support)
    report.final_probabilities = [float(v) for v in final_state.p.values]
    report.final_tau = params.tau
    return params, report


def predict(params: ModelParams, x) -> tuple[np.ndarray | float, tuple[int, ...]]:
    """Deterministic inference: zero Gumbel noise at the stored temperature."""
    result = forward(params, x, tau=params.tau, seed=None)
    probs = result.y_hat.values
    return (float(probs), result.support) if probs.ndim == 0 else (probs.copy(), result.support)


def predict_batched(params: ModelParams, X, batch_size: int = 256):
    """Scores, latents, and reconstructions for a full matrix, chunked."""
    X = np.asarray(X, dtype=np.float64)
    scores, zrs, zss = [], [], []
    for start in range(0, X.shape[0], batch_size):
        result = forward(params, Tensor(X[start : start + batch_size]), tau=params.tau, seed=None)
        scores.append(result.y_hat.values.copy())
        zrs.append(result.z_r.values.copy())
        zss.append(result.z_s.values.copy())
    support = compute_selection(params.tensors["dgfs.log_pi"], params.tau, None).support
    return np.concatenate(scores), np.concatenate(zrs), np.concatenate(zss), support


# -- checkpointing -------------------------------------------------------------


def save_checkpoint(params: ModelParams, path) -> None:
    meta = {"kind": "checkpoint", "config": asdict(params.config), "tau": params.tau}
    write_store(path, meta, {name: t.values for name, t in params.tensors.items()})


def load_checkpoint(path) -> ModelParams:
    meta, arrays = read_store(path)
    if meta.get("kind") != "checkpoint":
        raise ArtifactError(f"{path} is not a checkpoint")
    cfg_dict = dict(meta["config"])
    config = TrainConfig(**cfg_dict)
    expected = set(init_params(config).tensors)
    if set(arrays) != expected:
        raise ArtifactError(f"{path} parameter names do not match the config")
    tensors = {name: parameter(values) for name, values in arrays.items()}
    return ModelParams(config=config, tensors=tensors, tau=float(meta["tau"]))
