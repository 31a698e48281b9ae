"""Evaluation metrics and interpretability tools.

Ranking metrics are computed from scratch (rank statistics and threshold
sweeps) so their tie conventions are pinned by the tests' brute-force
oracles. Mutual information uses a plug-in equal-width 2-D histogram in
nats. T-tests use Welch's unequal-variance statistic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import t as student_t

from .errors import DimensionError, MetricError, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_MI_BINS = 16


@dataclass(frozen=True)
class MetricSet:
    auroc: float
    auprc: float
    f1: float
    min_se_pplus: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return asdict(self)


def _check_binary(labels: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise DimensionError(
            f"labels {labels.shape} and scores {scores.shape} must be equal-length vectors"
        )
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be binary 0/1")
    return labels.astype(np.int64), scores


def auroc(labels, scores) -> float:
    """Mann-Whitney probability P(score+ > score-) + 0.5 P(tie)."""
    labels, scores = _check_binary(labels, scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC undefined: both classes required")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(labels.size)
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:  # average ranks over tied groups
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _threshold_counts(labels: np.ndarray, scores: np.ndarray):
    """Cumulative TP/FP at each distinct descending threshold (score >= t)."""
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tps = np.cumsum(sorted_labels)
    fps = np.cumsum(1 - sorted_labels)
    last_of_group = np.flatnonzero(np.diff(sorted_scores, append=np.inf) != 0.0)
    return tps[last_of_group], fps[last_of_group]


def auprc(labels, scores) -> float:
    """Average precision: sum of precision * recall increments over thresholds."""
    labels, scores = _check_binary(labels, scores)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("AUPRC undefined: no positive samples")
    tps, fps = _threshold_counts(labels, scores)
    recall_steps = np.diff(tps, prepend=0) / n_pos
    precision = tps / (tps + fps)
    return float((recall_steps * precision).sum())


def min_se_pplus(labels, scores) -> float:
    """max over thresholds of min(sensitivity, precision)."""
    labels, scores = _check_binary(labels, scores)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise MetricError("min(Se, P+) undefined: both classes required")
    tps, fps = _threshold_counts(labels, scores)
    se = tps / n_pos
    pplus = tps / (tps + fps)
    return float(np.minimum(se, pplus).max())  # t=+inf predicts nothing: min=0, never the max


def f1_score(labels, scores, threshold: float = 0.5) -> float:
    labels, scores = _check_binary(labels, scores)
    pred = scores >= threshold
    tp = int((pred & (labels == 1)).sum())
    fp = int((pred & (labels == 0)).sum())
    fn = int((~pred & (labels == 1)).sum())
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2.0 * tp / (2 * tp + fp + fn)


def metric_set(labels, scores, threshold: float = 0.5) -> MetricSet:
    labels, scores = _check_binary(labels, scores)
    pred = scores >= threshold
    tp = int((pred & (labels == 1)).sum())
    fp = int((pred & (labels == 0)).sum())
    tn = int((~pred & (labels == 0)).sum())
    fn = int((~pred & (labels == 1)).sum())
    return MetricSet(
        auroc=auroc(labels, scores),
        auprc=auprc(labels, scores),
        f1=f1_score(labels, scores, threshold),
        min_se_pplus=min_se_pplus(labels, scores),
        threshold=threshold,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


# -- mutual information --------------------------------------------------------


def mutual_information(x, y, bins: int = DEFAULT_MI_BINS) -> float:
    """Plug-in MI (nats) from an equal-width 2-D histogram; >= 0, symmetric."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DimensionError("mutual_information requires two equal-length vectors (n >= 2)")
    if bins < 1:
        raise ParameterError(f"bins must be >= 1, got {bins}")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        logger.warning("mutual_information: constant column, returning 0")
        return 0.0
    joint, _, _ = np.histogram2d(x, y, bins=bins)
    p = joint / joint.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0.0
    return float((p[nz] * np.log(p[nz] / (px @ py)[nz])).sum())


@dataclass(frozen=True)
class MiReport:
    """MI between every input feature and every latent dimension, in nats."""

    matrix: np.ndarray  # [n_features, n_latent]
    bins: int

    def feature_means(self) -> np.ndarray:
        return self.matrix.mean(axis=1)


def mi_matrix(features, latents, bins: int = DEFAULT_MI_BINS) -> MiReport:
    features = np.asarray(features, dtype=np.float64)
    latents = np.asarray(latents, dtype=np.float64)
    if features.shape[0] != latents.shape[0]:
        raise DimensionError("features and latents must have the same number of rows")
    out = np.zeros((features.shape[1], latents.shape[1]))
    for i in range(features.shape[1]):
        for j in range(latents.shape[1]):
            out[i, j] = mutual_information(features[:, i], latents[:, j], bins)
    return MiReport(matrix=out, bins=bins)


# -- hypothesis testing ----------------------------------------------------------


def welch_ttest(group_a, group_b) -> tuple[float, float]:
    """Welch's unequal-variance t statistic and two-sided p-value."""
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DimensionError("each group needs at least 2 samples")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            return 0.0, 1.0
        raise MetricError("zero variance in both groups with different means")
    sa, sb = va / a.size, vb / b.size
    t_stat = (a.mean() - b.mean()) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = 2.0 * float(student_t.sf(abs(t_stat), df))
    return float(t_stat), p


@dataclass(frozen=True)
class FeatureSignificance:
    p_values: np.ndarray
    t_statistics: np.ndarray
    selected: np.ndarray  # bool, True if the feature is in the trained support
    degenerate: np.ndarray  # bool, True if the test was skipped (p forced to 1)

    def rows(self, feature_names) -> list[dict]:
        return [
            {
                "feature": feature_names[i],
                "index": i,
                "p_value": float(self.p_values[i]),
                "t_statistic": float(self.t_statistics[i]),
                "selected": bool(self.selected[i]),
                "significant_0.01": bool(self.p_values[i] < 0.01),
                "significant_0.05": bool(self.p_values[i] < 0.05),
                "degenerate": bool(self.degenerate[i]),
            }
            for i in range(self.p_values.size)
        ]


def feature_significance(dataset, selection) -> FeatureSignificance:
    """Per-feature Welch test of the two outcome classes, flagged by selection."""
    support = set(int(i) for i in selection)
    n = dataset.n_features
    p_values = np.ones(n)
    t_stats = np.zeros(n)
    degenerate = np.zeros(n, dtype=bool)
    pos = dataset.features[dataset.labels == 1]
    neg = dataset.features[dataset.labels == 0]
    if pos.shape[0] < 2 or neg.shape[0] < 2:
        raise MetricError("feature significance needs >= 2 samples per class")
    for i in range(n):
        a, b = pos[:, i], neg[:, i]
        if a.var(ddof=1) == 0.0 and b.var(ddof=1) == 0.0:
            degenerate[i] = True
            continue
        t_stats[i], p_values[i] = welch_ttest(a, b)
    if degenerate.any():
        logger.warning(
            "feature_significance: %d degenerate features flagged with p=1",
            int(degenerate.sum()),
        )
    selected = np.array([i in support for i in range(n)])
    return FeatureSignificance(
        p_values=p_values, t_statistics=t_stats, selected=selected, degenerate=degenerate
    )


# -- PCA -------------------------------------------------------------------------


def pca_project(matrix, n_components: int) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the top covariance eigenvectors.

    Returns (projections [rows, n_components], explained variance ratios).
    The sign of each component is fixed so its largest-magnitude loading is
    positive.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {x.shape}")
    if not (1 <= n_components <= min(x.shape)):
        raise ParameterError(
            f"need 1 <= n_components <= {min(x.shape)}, got {n_components}"
        )
    if n_components > np.linalg.matrix_rank(x - x.mean(axis=0)):
        raise ParameterError(
            f"n_components {n_components} exceeds the centered matrix rank"
        )
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(x.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:n_components]
    components = eigvecs[:, order]
    for j in range(components.shape[1]):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]
    ratios = np.clip(eigvals[order], 0.0, None) / max(np.clip(eigvals, 0.0, None).sum(), 1e-300)
    return centered @ components, ratios
