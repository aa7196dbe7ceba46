"""Command-line experiment runner.

    python -m pltanh run --config configs/mnist.cfg
    python -m pltanh sweep --config configs/mnist.cfg --alphas 1e-9,0.01,0.4
    python -m pltanh gradcheck
    python -m pltanh plot-activation --kind pltanh --alpha 0.01 --out pltanh.csv

Exit codes: 0 success, 1 gradient check failure, 2 usage or config error,
3 dataset I/O error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import activations as act
from . import data as D
from . import gradcheck
from .activations import ActivationKind
from .metrics import MetricsReport
from .train import TrainConfig, TrainingDiverged, alpha_sweep, run_experiment

log = logging.getLogger("pltanh")

DATA_ROOT_ENV = "PLTANH_DATA_ROOT"
CSV_HEADER = ["dataset", "activation", "alpha", "macro_precision", "accuracy", "macro_recall", "auc", "macro_f1", "seconds", "seed"]

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4

# alpha values found per dataset (PLTanh); baselines use 0.01
DATASET_ALPHA = {"mnist": 0.01, "fashion_mnist": 0.01, "flowers": 0.01, "cifar10": 0.4, "histopathology": 1e-9}
DATASET_MODEL = {"mnist": "mnist_cnn", "fashion_mnist": "mnist_cnn", "cifar10": "cifar10_cnn", "synthetic": "mnist_cnn"}


class ConfigError(ValueError):
    pass


class DataError(OSError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    data_root: str = "data"
    model: str = ""
    activations: tuple = ("pltanh", "relu", "lrelu", "alrelu")
    alpha: Optional[float] = None
    baseline_alpha: float = act.DEFAULT_ALPHA
    alphas: tuple = ()
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    folds: int = 5
    subset: Optional[int] = None
    output: str = "results/run"
    synthetic_samples: int = 1000
    synthetic_classes: int = 10
    synthetic_shape: tuple = (28, 28, 1)
    synthetic_noise: float = 0.05

    @property
    def pltanh_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return DATASET_ALPHA.get(self.dataset, act.DEFAULT_ALPHA)

    @property
    def model_name(self) -> str:
        return self.model or DATASET_MODEL.get(self.dataset, "mnist_cnn")

    def activation_kinds(self) -> List[ActivationKind]:
        kinds = []
        for name in self.activations:
            probe = ActivationKind.parse(name)
            a = self.pltanh_alpha if probe.kind is act.Kind.PLTANH else self.baseline_alpha
            kinds.append(ActivationKind(probe.kind, a))
        return kinds

    def train_config(self, kind: ActivationKind) -> TrainConfig:
        return TrainConfig(
            model=self.model_name,
            dataset=self.dataset,
            activation=kind.kind.value,
            alpha=kind.alpha,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            folds=self.folds,
        )

    @property
    def dataset_label(self) -> str:
        return self.dataset if self.subset is None else f"{self.dataset}[:{self.subset}]"


def _split_list(value: str) -> List[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


def parse_config(text: str, base_dir: Path = Path(".")) -> ExperimentConfig:
    """Parse the flat ``key = value`` format (``#`` comments, no sections)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    raw = dict(parser["experiment"])
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "dataset" not in raw:
        raise ConfigError("config must set 'dataset'")
    kw = {}
    try:
        for key, value in raw.items():
            if key in ("epochs", "batch_size", "seed", "folds", "synthetic_samples", "synthetic_classes"):
                kw[key] = int(value)
            elif key == "subset":
                kw[key] = int(value) if value.lower() not in ("", "none") else None
            elif key in ("alpha",):
                kw[key] = float(value) if value.lower() not in ("", "none") else None
            elif key in ("baseline_alpha", "learning_rate", "synthetic_noise"):
                kw[key] = float(value)
            elif key == "activations":
                kw[key] = tuple(_split_list(value))
            elif key == "alphas":
                kw[key] = tuple(float(v) for v in _split_list(value))
            elif key == "synthetic_shape":
                kw[key] = tuple(int(v) for v in value.lower().split("x"))
            elif key in ("data_root", "output"):
                path = Path(value)
                kw[key] = str(path if path.is_absolute() else base_dir / path)
            else:
                kw[key] = value
        cfg = ExperimentConfig(**kw)
        cfg.activation_kinds()
        for k in cfg.activation_kinds():
            cfg.train_config(k)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.subset is not None and cfg.subset < cfg.folds:
        raise ConfigError(f"subset {cfg.subset} is smaller than the number of folds")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


def load_dataset(cfg: ExperimentConfig) -> D.Dataset:
    if cfg.dataset == "synthetic":
        ds = D.synthetic_blobs(cfg.synthetic_samples, cfg.synthetic_classes, cfg.synthetic_shape, cfg.seed, cfg.synthetic_noise)
    else:
        root = os.environ.get(DATA_ROOT_ENV) or cfg.data_root
        try:
            ds = D.load_named(cfg.dataset, root)
        except (OSError, D.DatasetFormatError) as exc:
            raise DataError(str(exc)) from None
    if cfg.subset is not None:
        if cfg.subset > len(ds):
            raise ConfigError(f"subset {cfg.subset} exceeds the {len(ds)} samples of {cfg.dataset}")
        ds = ds.subset(cfg.subset)
    return ds


# -- result rows ---------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    activation: str
    alpha: float
    macro_precision: float
    accuracy: float
    macro_recall: float
    auc: float
    macro_f1: float
    seconds: float
    seed: int

    @classmethod
    def from_report(cls, dataset: str, kind: ActivationKind, report: MetricsReport, seconds: float, seed: int):
        m = report.mean
        return cls(dataset, kind.label, kind.alpha, m.macro_precision, m.accuracy, m.macro_recall, m.macro_auc, m.macro_f1, seconds, seed)

    def csv_values(self) -> List[str]:
        return [v if isinstance(v, str) else repr(v) for v in (getattr(self, c) for c in CSV_HEADER)]

    @classmethod
    def from_csv(cls, record: dict) -> "ResultRow":
        kw = {}
        for f in fields(cls):
            value = record[f.name]
            kw[f.name] = int(value) if f.name == "seed" else (value if f.name in ("dataset", "activation") else float(value))
        return cls(**kw)


def append_csv(path: Path, rows: Sequence[ResultRow], extra: Optional[List[str]] = None, extra_values=None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = CSV_HEADER + (extra or [])
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(header)
        for i, row in enumerate(rows):
            writer.writerow(row.csv_values() + (list(extra_values[i]) if extra_values else []))


def read_csv(path) -> List[ResultRow]:
    with open(path, newline="") as fh:
        return [ResultRow.from_csv(r) for r in csv.DictReader(fh)]


def append_json(path: Path, record: dict) -> None:
    runs = json.loads(path.read_text()) if path.exists() else []
    runs.append(record)
    path.write_text(json.dumps(runs, indent=2, sort_keys=True) + "\n")


def _config_echo(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["pltanh_alpha"] = cfg.pltanh_alpha
    d["model"] = cfg.model_name
    return d


# -- commands ------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    dataset = load_dataset(cfg)
    rows, reports = [], []
    for kind in cfg.activation_kinds():
        start = time.perf_counter()
        report = run_experiment(cfg.train_config(kind), dataset)
        row = ResultRow.from_report(cfg.dataset_label, kind, report, time.perf_counter() - start, cfg.seed)
        log.info("%s: accuracy %.4f", kind, row.accuracy)
        rows.append(row)
        reports.append(report)
    out = Path(cfg.output)
    append_csv(out.with_suffix(".csv"), rows)
    append_json(
        out.with_suffix(".json"),
        {
            "command": "run",
            "config": _config_echo(cfg),
            "rows": [asdict(r) for r in rows],
            "folds": [r.as_dict()["folds"] for r in reports],
        },
    )
    for row in rows:
        print(",".join(row.csv_values()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    alphas = tuple(float(a) for a in _split_list(args.alphas)) if args.alphas is not None else cfg.alphas
    if not alphas:
        raise ConfigError("no alphas given (use --alphas or the 'alphas' config key)")
    dataset = load_dataset(cfg)
    kinds = [k for k in cfg.activation_kinds() if k.kind is act.Kind.PLTANH] or [ActivationKind(act.Kind.PLTANH)]
    base = cfg.train_config(kinds[0])
    start = time.perf_counter()
    result = alpha_sweep(base, alphas, dataset)
    seconds = time.perf_counter() - start
    rows = [
        ResultRow.from_report(cfg.dataset_label, ActivationKind(act.Kind.PLTANH, a), rep, seconds / len(alphas), cfg.seed)
        for a, rep in result.rows
    ]
    best = result.best_alpha
    flags = [["1" if a == best else "0"] for a, _ in result.rows]
    out = Path(cfg.output)
    append_csv(out.with_name(out.name + "_sweep").with_suffix(".csv"), rows, ["best"], flags)
    append_json(
        out.with_name(out.name + "_sweep").with_suffix(".json"),
        {"command": "sweep", "config": _config_echo(cfg), "alphas": list(alphas), "best_alpha": best, "rows": [asdict(r) for r in rows]},
    )
    for row, flag in zip(rows, flags):
        print(",".join(row.csv_values() + flag))
    return EXIT_OK


def cmd_gradcheck(args, derivative=None) -> int:
    models = tuple(args.models) if getattr(args, "models", None) else tuple(gradcheck.TOY_INPUTS)
    report = gradcheck.run_all(models=models, derivative=derivative)
    ok = True
    for section in ("activations", "models"):
        for result in report[section]:
            print(result)
            ok &= result.passed
    print("gradcheck:", "all passed" if ok else "FAILURES")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_plot_activation(args) -> int:
    if args.samples < 2:
        raise ConfigError("--samples must be at least 2")
    lo, hi = args.range
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ConfigError(f"bad range [{lo}, {hi}]")
    try:
        kind = ActivationKind.parse(args.kind, args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    x = np.linspace(lo, hi, args.samples)
    f, df = act.forward_and_derivative(kind, x)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "f", "df"])
        for row in zip(x, f, df):
            writer.writerow([repr(float(v)) for v in row])
    print(f"wrote {args.samples} rows for {kind} to {out}")
    return EXIT_OK


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "out", None):
        changes["output"] = args.out
    if getattr(args, "subset", None) is not None:
        changes["subset"] = args.subset
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return replace(cfg, **changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pltanh", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key = value experiment file")
        p.add_argument("--out", help="output path prefix (overrides 'output')")
        p.add_argument("--subset", type=int, help="use only the first N samples")
        p.add_argument("--seed", type=int)

    run = sub.add_parser("run", help="k-fold run of every configured activation")
    common(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="grid sweep of the PLTanh alpha")
    common(sweep)
    sweep.add_argument("--alphas", help="comma-separated alpha values")
    sweep.set_defaults(func=cmd_sweep)

    gc = sub.add_parser("gradcheck", help="finite-difference checks of activations and toy networks")
    gc.add_argument("--models", nargs="*", choices=sorted(gradcheck.TOY_INPUTS))
    gc.set_defaults(func=cmd_gradcheck)

    plot = sub.add_parser("plot-activation", help="tabulate f(x) and f'(x)")
    plot.add_argument("--kind", default="pltanh")
    plot.add_argument("--alpha", type=float, default=act.DEFAULT_ALPHA)
    plot.add_argument("--range", type=float, nargs=2, default=(-5.0, 5.0), metavar=("LO", "HI"))
    plot.add_argument("--samples", type=int, default=201)
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=cmd_plot_activation)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
