"""Command-line entry point: generate | train | eval | analyze.

Option precedence is flags > config file > defaults; the config file is a
flat `key = value` listing. Exit codes are stable for scripting: 0 success,
2 configuration/validation, 3 data, 4 artifact mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import analysis
from .data import (
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    ingest_csv,
    load_dataset,
    save_dataset,
    split,
)
from .dgfs import compute_selection, support_report
from .diffcore import softmax, Tensor
from .errors import (
    ArtifactError,
    ConfigError,
    DataError,
    DeepSelectiveError,
    DimensionError,
    MetricError,
    ParameterError,
    SelectionError,
)
from .model import TrainConfig, load_checkpoint, predict_batched, save_checkpoint, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ARTIFACT = 4

SEED_ENV_VAR = "DEEPSELECTIVE_SEED"

# flat key=value config file entries understood by `train`
_TRAIN_KEYS = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "beta1": float,
    "beta2": float,
    "alpha": float,
    "tau0": float,
    "k_p": float,
    "k_i": float,
    "k_d": float,
    "tau_min": float,
    "tau_max": float,
    "latent_dim": int,
    "n_heads": int,
    "n_encoder_layers": int,
    "n_decoder_layers": int,
    "seed": int,
    "align_raw_cosine": lambda s: s.lower() in ("1", "true", "yes"),
    "pid_align_weighted": lambda s: s.lower() in ("1", "true", "yes"),
}


def _read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TRAIN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _TRAIN_KEYS[key](value)
        except ValueError as err:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {err}") from err
    return out


def _default_seed() -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as err:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from err


def _load_data(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"dataset not found: {path}")
    if path.suffix == ".csv":
        return ingest_csv(path, label_column="label", fractions=(0.8, 0.1, 0.1), seed=0)
    return load_dataset(path)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepselective",
        description="Train and analyze sparse-selection prognosis models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help=f"fallback: ${SEED_ENV_VAR}, then 0")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    g = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    common(g)
    g.add_argument("--features", type=int, default=64)
    g.add_argument("--informative", type=int, default=8)
    g.add_argument("--samples", type=int, default=1000)
    g.add_argument("--noise", type=float, default=0.05, help="label flip probability")
    g.add_argument("--correlation", type=float, default=0.3)
    g.add_argument("--missing-rate", type=float, default=0.0)
    g.add_argument("--fractions", type=str, default="0.8,0.1,0.1")

    t = sub.add_parser("train", help="train a model on a dataset cache or CSV")
    common(t)
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--config", type=Path, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--beta1", type=float, default=None)
    t.add_argument("--beta2", type=float, default=None)
    t.add_argument("--alpha", type=float, default=None)
    t.add_argument("--tau0", type=float, default=None)
    t.add_argument("--kp", type=float, default=None)
    t.add_argument("--ki", type=float, default=None)
    t.add_argument("--kd", type=float, default=None)
    t.add_argument("--latent-dim", type=int, default=None)
    t.add_argument("--heads", type=int, default=None)
    t.add_argument("--layers", type=int, default=None, help="encoder and decoder layer count")

    e = sub.add_parser("eval", help="compute metrics for a checkpoint on a split")
    common(e)
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--split", choices=("train", "val", "test"), default="test")

    a = sub.add_parser("analyze", help="MI, importance, T-tests, and PCA exports")
    common(a)
    a.add_argument("--checkpoint", type=Path, required=True)
    a.add_argument("--data", type=Path, required=True)
    a.add_argument("--split", choices=("train", "val", "test"), default="test")
    a.add_argument("--mi-bins", type=int, default=analysis.DEFAULT_MI_BINS)
    a.add_argument("--mi-threshold", type=float, default=0.15, help="highlight cutoff in reports")
    return parser


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    fractions = tuple(float(f) for f in args.fractions.split(","))
    spec = SyntheticSpec(
        n_features=args.features,
        n_informative=args.informative,
        n_samples=args.samples,
        label_noise=args.noise,
        nuisance_correlation=args.correlation,
        missing_rate=args.missing_rate,
        seed=seed,
    )
    dataset = split(generate_synthetic(spec), fractions, seed)
    args.out.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, args.out / "dataset.dsd")
    balance = float(dataset.labels.mean())
    summary = {
        "n_features": dataset.n_features,
        "n_informative": args.informative,
        "n_samples": dataset.n_samples,
        "class_balance": balance,
        "informative_set": list(dataset.informative_set),
        "splits": {name: int(idx.size) for name, idx in dataset.splits.items()},
        "seed": seed,
    }
    _write_json(args.out / "dataset_summary.json", summary)
    print(
        f"generated {dataset.n_samples} samples, {dataset.n_features} features "
        f"({args.informative} informative), positive rate {balance:.3f}"
    )
    return EXIT_OK


def _train_config(args, n_features: int) -> TrainConfig:
    values = {"n_features": n_features, "seed": _default_seed()}
    if args.config is not None:
        values.update(_read_config_file(args.config))
    flag_map = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "beta1": args.beta1,
        "beta2": args.beta2,
        "alpha": args.alpha,
        "tau0": args.tau0,
        "k_p": args.kp,
        "k_i": args.ki,
        "k_d": args.kd,
        "latent_dim": args.latent_dim,
        "n_heads": args.heads,
        "seed": args.seed,
    }
    if args.layers is not None:
        flag_map["n_encoder_layers"] = args.layers
        flag_map["n_decoder_layers"] = args.layers
    values.update({k: v for k, v in flag_map.items() if v is not None})
    known = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in values.items() if k in known})


def _cmd_train(args) -> int:
    dataset = _load_data(args.data)
    config = _train_config(args, dataset.n_features)
    params, report = train(dataset, config)
    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, args.out / "checkpoint.dsc")
    (args.out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (args.out / "tau_trajectory.csv").write_text(report.tau_trajectory_csv(), encoding="utf-8")
    state = compute_selection(params.tensors["dgfs.log_pi"], params.tau, None)
    _write_json(args.out / "support.json", support_report(state, dataset.feature_names))
    print(
        f"trained {config.epochs} epochs; final tau {params.tau:.4f}, "
        f"support size {len(state.support)}"
    )
    return EXIT_OK


def _checked_eval_inputs(args):
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise ArtifactError(f"checkpoint not found: {ckpt_path}")
    params = load_checkpoint(ckpt_path)
    dataset = _load_data(args.data)
    if dataset.n_features != params.config.n_features:
        raise ArtifactError(
            f"feature count mismatch: dataset has {dataset.n_features}, "
            f"checkpoint expects {params.config.n_features}"
        )
    X = dataset.split_features(args.split)
    y = dataset.split_labels(args.split)
    if X.shape[0] == 0:
        raise DataError(f"split {args.split!r} is empty")
    return params, dataset, X, y


def _cmd_eval(args) -> int:
    params, _, X, y = _checked_eval_inputs(args)
    scores, _, _, _ = predict_batched(params, X)
    metrics = analysis.metric_set(y, scores)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "metrics.json", {"split": args.split, **metrics.to_dict()})
    print(
        f"auroc {metrics.auroc:.4f}  auprc {metrics.auprc:.4f}  "
        f"f1 {metrics.f1:.4f}  min(Se,P+) {metrics.min_se_pplus:.4f}"
    )
    return EXIT_OK


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _mi_csv(path: Path, report: analysis.MiReport, feature_names) -> None:
    header = ["feature"] + [f"latent_{j}" for j in range(report.matrix.shape[1])]
    rows = [
        [feature_names[i]] + [repr(v) for v in report.matrix[i]]
        for i in range(report.matrix.shape[0])
    ]
    _write_csv(path, header, rows)


def _pca_csv(path: Path, matrix, labels) -> None:
    projections, ratios = analysis.pca_project(matrix, 2)
    rows = [
        [i, repr(projections[i, 0]), repr(projections[i, 1]), int(labels[i])]
        for i in range(projections.shape[0])
    ]
    _write_csv(path, ["sample_id", "pc1", "pc2", "label"], rows)


def _cmd_analyze(args) -> int:
    params, dataset, X, y = _checked_eval_inputs(args)
    scores, z_r, z_s, support = predict_batched(params, X)
    args.out.mkdir(parents=True, exist_ok=True)

    mi_r = analysis.mi_matrix(X, z_r, bins=args.mi_bins)
    mi_s = analysis.mi_matrix(X, z_s, bins=args.mi_bins)
    _mi_csv(args.out / "mi_zr.csv", mi_r, dataset.feature_names)
    _mi_csv(args.out / "mi_zs.csv", mi_s, dataset.feature_names)

    importance = softmax(Tensor(params.tensors["dgfs.log_pi"].values), axis=-1).values
    sig = analysis.feature_significance(dataset, support)
    _write_csv(
        args.out / "ttest.csv",
        ["feature", "p_value", "t_statistic", "selected", "significant_0.01", "significant_0.05"],
        [
            [
                dataset.feature_names[i],
                repr(float(sig.p_values[i])),
                repr(float(sig.t_statistics[i])),
                int(sig.selected[i]),
                int(sig.p_values[i] < 0.01),
                int(sig.p_values[i] < 0.05),
            ]
            for i in range(dataset.n_features)
        ],
    )
    _pca_csv(args.out / "pca_raw.csv", X, y)
    _pca_csv(args.out / "pca_zr.csv", z_r, y)
    _pca_csv(args.out / "pca_zs.csv", z_s, y)

    high_mi = [
        dataset.feature_names[i]
        for i in range(dataset.n_features)
        if mi_r.feature_means()[i] > args.mi_threshold
    ]
    summary = {
        "split": args.split,
        "support": [int(i) for i in support],
        "importance": [float(v) for v in importance],
        "mi_bins": args.mi_bins,
        "mi_threshold": args.mi_threshold,
        "high_mi_features": high_mi,
        "mean_mi_zr_selected": float(mi_r.feature_means()[list(support)].mean()),
        "mean_mi_zr_all": float(mi_r.feature_means().mean()),
        "n_significant_0.01": int((sig.p_values < 0.01).sum()),
    }
    if dataset.informative_set:
        info = list(dataset.informative_set)
        rest = [i for i in range(dataset.n_features) if i not in dataset.informative_set]
        summary["mean_mi_zr_informative"] = float(mi_r.feature_means()[info].mean())
        summary["mean_mi_zr_nuisance"] = float(mi_r.feature_means()[rest].mean())
        summary["recovered_informative"] = sorted(set(info) & set(int(i) for i in support))
    _write_json(args.out / "analysis.json", summary)
    print(
        f"analyzed split {args.split!r}: |S|={len(support)}, "
        f"{summary['n_significant_0.01']} features with p < 0.01"
    )
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "analyze": _cmd_analyze,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ParameterError, DimensionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SelectionError, MetricError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except ArtifactError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ARTIFACT
    except DeepSelectiveError as err:  # anything else from this package
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
