"""Dataset generation, ingestion, windowing, and stratified splitting.

The synthetic benchmark plants k informative features whose nonlinear
combination drives the label; every other feature is correlated Gaussian
noise independent of the label, so selection quality can be scored against
the known ground truth.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .serialization import read_store, write_store

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
MISSING_PREFIX = "mask→"  # companion indicator column: "mask→<feature>"


@dataclass(frozen=True)
class SyntheticSpec:
    n_features: int = 64
    n_informative: int = 8
    n_samples: int = 1000
    label_noise: float = 0.05  # label flip probability
    nuisance_correlation: float = 0.3  # within-block correlation of nuisance features
    missing_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.n_informative <= self.n_features):
            raise ParameterError(
                f"need 1 <= k <= N, got k={self.n_informative}, N={self.n_features}"
            )
        if self.n_samples < 1:
            raise ParameterError(f"n_samples must be >= 1, got {self.n_samples}")
        for name in ("label_noise", "nuisance_correlation", "missing_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {v}")


@dataclass
class Dataset:
    features: np.ndarray  # [samples, N], float64, all finite
    labels: np.ndarray  # [samples], int64 in {0, 1}
    feature_names: list[str]
    informative_set: tuple[int, ...] | None = None
    splits: dict[str, np.ndarray] = field(default_factory=dict)  # name -> row indices
    standardizer: tuple[np.ndarray, np.ndarray] | None = None  # (mu, sigma) pre-append
    raw_missing: np.ndarray | None = None  # boolean mask over the original columns

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not np.isfinite(self.features).all():
            raise DataError("dataset contains non-finite values")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be binary 0/1")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError("feature/label row counts differ")
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("feature name count does not match the matrix width")
        if not self.splits:
            self.splits = {"train": np.arange(self.features.shape[0])}

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def split_features(self, name: str) -> np.ndarray:
        return self.features[self.splits.get(name, np.array([], dtype=np.intp))]

    def split_labels(self, name: str) -> np.ndarray:
        return self.labels[self.splits.get(name, np.array([], dtype=np.intp))]


def _score(informative_values: np.ndarray) -> np.ndarray:
    # alternating-sign tanh sum: nonlinear but monotone per coordinate
    k = informative_values.shape[1]
    weights = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    return np.tanh(informative_values) @ weights


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Planted-feature benchmark; labels never depend on nuisance columns."""
    rng = np.random.default_rng(spec.seed)
    n, k, s = spec.n_features, spec.n_informative, spec.n_samples
    informative = tuple(sorted(rng.choice(n, size=k, replace=False).tolist()))
    x_inf = rng.standard_normal((s, k))
    labels = (_score(x_inf) > 0.0).astype(np.int64)
    flips = rng.uniform(size=s) < spec.label_noise
    labels = np.where(flips, 1 - labels, labels)

    features = np.empty((s, n))
    features[:, list(informative)] = x_inf
    nuisance_cols = [i for i in range(n) if i not in informative]
    if nuisance_cols:
        m = len(nuisance_cols)
        rho = spec.nuisance_correlation
        block = 8
        n_blocks = math.ceil(m / block)
        factors = rng.standard_normal((s, n_blocks))
        eps = rng.standard_normal((s, m))
        shared = factors[:, np.arange(m) // block]
        features[:, nuisance_cols] = math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * eps

    names = [f"feat_{i:03d}" for i in range(n)]
    raw_missing = None
    if spec.missing_rate > 0.0:
        missing = rng.uniform(size=(s, n)) < spec.missing_rate
        indicators = missing.astype(np.float64)
        features = np.where(missing, 0.0, features)
        features = np.concatenate([features, indicators], axis=1)
        names = names + [MISSING_PREFIX + nm for nm in names]
        raw_missing = missing
    return Dataset(
        features=features,
        labels=labels,
        feature_names=names,
        informative_set=informative,
        raw_missing=raw_missing,
    )


def split(dataset: Dataset, fractions, seed: int) -> Dataset:
    """Stratified train/val/test assignment, deterministic under `seed`.

    Splits with a positive fraction must receive both classes.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != len(SPLIT_NAMES):
        raise ParameterError(f"expected {len(SPLIT_NAMES)} fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions):
        raise ParameterError(f"fractions must be nonnegative, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must sum to 1, got sum {sum(fractions)}")
    rng = np.random.default_rng(seed)
    buckets: dict[str, list[np.ndarray]] = {name: [] for name in SPLIT_NAMES}
    for cls in (0, 1):
        rows = np.flatnonzero(dataset.labels == cls)
        rows = rng.permutation(rows)
        bounds = np.round(np.cumsum(fractions) * rows.size).astype(int)
        start = 0
        for name, stop in zip(SPLIT_NAMES, bounds):
            buckets[name].append(rows[start:stop])
            start = stop
    splits = {name: np.sort(np.concatenate(parts)) for name, parts in buckets.items()}
    for name, frac in zip(SPLIT_NAMES, fractions):
        if frac > 0.0:
            classes = np.unique(dataset.labels[splits[name]])
            if classes.size < 2:
                raise DataError(
                    f"split '{name}' (fraction {frac}) does not contain both classes"
                )
    return replace(dataset, splits=splits)


def _parse_csv(path, label_column: str):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if label_column not in header:
        from .errors import ConfigError

        raise ConfigError(f"label column {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    names = [h for i, h in enumerate(header) if i != label_idx]
    values = np.full((len(rows), len(names)), np.nan)
    labels = np.empty(len(rows))
    bad_cells: list[str] = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            bad_cells.append(f"line {r + 2}: expected {len(header)} cells, got {len(row)}")
            continue
        c_out = 0
        for c, cell in enumerate(row):
            cell = cell.strip()
            if c == label_idx:
                try:
                    labels[r] = float(cell)
                except ValueError:
                    bad_cells.append(f"line {r + 2}, column {header[c]!r}: {cell!r}")
                continue
            if cell == "":
                c_out += 1
                continue  # missing
            try:
                values[r, c_out] = float(cell)
            except ValueError:
                bad_cells.append(f"line {r + 2}, column {header[c]!r}: {cell!r}")
            c_out += 1
    if bad_cells:
        shown = "; ".join(bad_cells[:10])
        raise DataError(f"{path}: non-numeric cells: {shown}")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise DataError(f"{path}: label column {label_column!r} is not binary 0/1")
    return values, labels.astype(np.int64), names


def ingest_csv(path, label_column: str, fractions=(1.0, 0.0, 0.0), seed: int = 0) -> Dataset:
    """CSV -> standardized Dataset.

    Standardization statistics come from the training split only. Missing
    cells become 0 after standardization, with a binary indicator column
    appended for every original column that had at least one gap.
    """
    values, labels, names = _parse_csv(path, label_column)
    missing = np.isnan(values)
    base = Dataset(
        features=np.nan_to_num(values, nan=0.0),
        labels=labels,
        feature_names=list(names),
    )
    base = split(base, fractions, seed)
    train_rows = base.splits["train"]
    if train_rows.size == 0:
        raise DataError("training split is empty; cannot fit standardization")
    train_vals = values[train_rows]
    with np.errstate(invalid="ignore"):
        mu = np.nanmean(train_vals, axis=0)
        sigma = np.nanstd(train_vals, axis=0)
    mu = np.nan_to_num(mu, nan=0.0)  # all-missing column in train
    degenerate = sigma < 1e-12
    if degenerate.any() or np.isnan(sigma).any():
        logger.warning(
            "constant or all-missing training columns standardized with sigma=1: %s",
            [names[i] for i in np.flatnonzero(degenerate | np.isnan(sigma))],
        )
    sigma = np.where(np.isnan(sigma) | degenerate, 1.0, sigma)
    standardized = (values - mu) / sigma
    standardized[missing] = 0.0
    cols_with_missing = np.flatnonzero(missing.any(axis=0))
    if cols_with_missing.size:
        indicators = missing[:, cols_with_missing].astype(np.float64)
        features = np.concatenate([standardized, indicators], axis=1)
        names = names + [MISSING_PREFIX + names[i] for i in cols_with_missing]
    else:
        features = standardized
    return Dataset(
        features=features,
        labels=labels,
        feature_names=names,
        splits=base.splits,
        standardizer=(mu, sigma),
        raw_missing=missing,
    )


def destandardize(dataset: Dataset) -> np.ndarray:
    """Undo ingest-time standardization on the original (non-indicator) columns."""
    if dataset.standardizer is None:
        raise DataError("dataset carries no standardization statistics")
    mu, sigma = dataset.standardizer
    original = dataset.features[:, : mu.shape[0]]
    return original * sigma + mu


@dataclass(frozen=True)
class TemporalRecord:
    """One subject's time-ordered observations and per-step outcomes."""

    values: np.ndarray  # [T, N]
    outcomes: np.ndarray  # [T] binary
    feature_names: tuple[str, ...]


def window_temporal(records, horizon: int) -> Dataset:
    """Per-step samples: last observation plus windowed mean/min/max.

    The sample at time t summarizes the window ending at t-1 (at most
    `horizon` observations) and is labeled with the outcome at t; steps
    with no preceding observation are skipped and counted.
    """
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}")
    records = list(records)
    if not records:
        raise DataError("no records to window")
    names = records[0].feature_names
    rows, labels = [], []
    skipped = 0
    for rec in records:
        values = np.asarray(rec.values, dtype=np.float64)
        outcomes = np.asarray(rec.outcomes)
        if values.ndim != 2 or values.shape[0] != outcomes.shape[0]:
            raise DataError("record values and outcomes are inconsistent")
        if tuple(rec.feature_names) != tuple(names):
            raise DataError("records disagree on feature names")
        for t in range(values.shape[0]):
            if t == 0:
                skipped += 1
                continue
            window = values[max(0, t - horizon) : t]
            rows.append(
                np.concatenate(
                    [values[t - 1], window.mean(axis=0), window.min(axis=0), window.max(axis=0)]
                )
            )
            labels.append(int(outcomes[t]))
    if skipped:
        logger.info("window_temporal: skipped %d steps with empty windows", skipped)
    if not rows:
        raise DataError("windowing produced no samples")
    out_names = [f"{n}:{stat}" for stat in ("last", "mean", "min", "max") for n in names]
    return Dataset(features=np.stack(rows), labels=np.array(labels), feature_names=out_names)


# -- cache file ----------------------------------------------------------------


def save_dataset(dataset: Dataset, path) -> None:
    meta = {
        "kind": "dataset",
        "feature_names": list(dataset.feature_names),
        "informative_set": list(dataset.informative_set) if dataset.informative_set else None,
        "split_names": sorted(dataset.splits),
    }
    arrays = {
        "features": dataset.features,
        "labels": dataset.labels.astype(np.float64),
    }
    for name, idx in dataset.splits.items():
        arrays[f"split.{name}"] = idx.astype(np.float64)
    if dataset.standardizer is not None:
        arrays["standardizer.mu"], arrays["standardizer.sigma"] = dataset.standardizer
    write_store(path, meta, arrays)


def load_dataset(path) -> Dataset:
    from .errors import ArtifactError

    meta, arrays = read_store(path)
    if meta.get("kind") != "dataset":
        raise ArtifactError(f"{path} is not a dataset cache")
    splits = {
        name: arrays[f"split.{name}"].astype(np.intp) for name in meta["split_names"]
    }
    standardizer = None
    if "standardizer.mu" in arrays:
        standardizer = (arrays["standardizer.mu"], arrays["standardizer.sigma"])
    informative = meta.get("informative_set")
    return Dataset(
        features=arrays["features"],
        labels=arrays["labels"].astype(np.int64),
        feature_names=list(meta["feature_names"]),
        informative_set=tuple(informative) if informative else None,
        splits=splits,
        standardizer=standardizer,
    )
