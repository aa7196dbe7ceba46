"""Acceptance suite: one test per criterion, each at its stated tolerance.

A one-line PASS/FAIL summary per criterion is printed at the end of the
pytest run (see ``conftest.py``).  Criteria 4-6 need the real MNIST and
Fashion-MNIST training files under ``$PLTANH_DATA_ROOT`` (default ``data/``)
and fail when those files are missing.  Set ``PLTANH_FULL_MNIST=1`` to run
criterion 4 on all 60,000 images instead of the first 10,000.
"""
import csv
import os
import struct
import time

import numpy as np
import pytest

from conftest import data_root
from pltanh import activations as A
from pltanh import cli, gradcheck
from pltanh import data as D
from pltanh import metrics as MT
from pltanh.activations import ActivationKind, Kind
from pltanh.train import TrainConfig, model_for, run_experiment, train_fold

import oracles

FULL_MNIST = os.environ.get("PLTANH_FULL_MNIST") == "1"
BASELINES = ("relu", "lrelu", "alrelu")

# (activation, seed) -> mean accuracy, shared by criteria 4 and 5
_mnist_runs = {}


def _load(name):
    try:
        return D.load_named(name, data_root())
    except FileNotFoundError as exc:
        missing = str(exc)
    pytest.fail(f"{name} training files not found under {data_root()} ({missing})", pytrace=False)


def _mnist_accuracy(ds, activation, seed, label):
    key = (activation, seed, len(ds))
    if key not in _mnist_runs:
        start = time.perf_counter()
        report = run_experiment(TrainConfig(activation=activation, alpha=0.01, seed=seed), ds)
        _mnist_runs[key] = (report.mean.accuracy, time.perf_counter() - start)
        print(f"{label} {activation} seed {seed}: accuracy {report.mean.accuracy:.4f} in {_mnist_runs[key][1]:.0f} s")
    return _mnist_runs[key]


@pytest.mark.criterion("1 activation gradient checks")
def test_criterion_1_activation_gradcheck():
    start = time.perf_counter()
    results = [gradcheck.check_activation(k, n=1000, h=1e-6, tolerance=1e-6) for k in gradcheck.all_activation_kinds()]
    elapsed = time.perf_counter() - start
    for r in results:
        print(r)
    assert {r.name.split("(")[0] for r in results} == {"ReLU", "LReLU", "ALReLU", "Tanh", "PLTanh"}
    assert all(r.passed for r in results), [str(r) for r in results if not r.passed]
    assert elapsed < 10.0


@pytest.mark.criterion("2 max/piecewise equivalence")
def test_criterion_2_max_equals_piecewise():
    start = time.perf_counter()
    x = np.random.default_rng(2024).uniform(-50.0, 150.0, size=1_000_000)
    for alpha in (1e-9, 0.01, 0.4):
        max_form = A.forward(ActivationKind(Kind.PLTANH, alpha), x)
        assert max_form.dtype == np.float64
        assert np.array_equal(max_form, A.pltanh_piecewise(x, alpha)), alpha
    assert time.perf_counter() - start < 10.0


@pytest.mark.criterion("3 whole-network gradient checks")
def test_criterion_3_network_gradcheck():
    start = time.perf_counter()
    results = []
    for model in gradcheck.TOY_INPUTS:
        for kind in Kind:
            r = gradcheck.check_model(model, ActivationKind(kind, 0.01), batch=4, tolerance=1e-4)
            print(r)
            results.append(r)
    elapsed = time.perf_counter() - start
    assert len(results) == 20
    assert all(r.passed for r in results), [str(r) for r in results if not r.passed]
    assert elapsed < 300.0


@pytest.mark.slow
@pytest.mark.criterion("4 MNIST 5-fold accuracy")
def test_criterion_4_mnist_reproduction():
    ds = _load("mnist")
    assert len(ds) == 60_000 and ds.classes == 10
    if FULL_MNIST:
        label, pl_min, base_min, budget = "full", 0.975, 0.970, 3600.0
    else:
        ds = ds.subset(10_000)
        label, pl_min, base_min, budget = "subset 10000", 0.960, 0.955, 600.0
    failures = []
    for activation, floor in (("pltanh", pl_min), *((b, base_min) for b in BASELINES)):
        acc, seconds = _mnist_accuracy(ds, activation, 0, label)
        if acc < floor:
            failures.append(f"{activation} accuracy {acc:.4f} < {floor}")
        if seconds > budget:
            failures.append(f"{activation} took {seconds:.0f} s > {budget:.0f} s")
    assert not failures, failures


@pytest.mark.slow
@pytest.mark.criterion("5 PLTanh within 0.5 pp of best baseline")
def test_criterion_5_relative_ordering():
    ds = _load("mnist").subset(10_000)
    seeds = (0, 1, 2)
    mean = {a: np.mean([_mnist_accuracy(ds, a, s, "subset 10000")[0] for s in seeds]) for a in ("pltanh",) + BASELINES}
    best = max(mean[b] for b in BASELINES)
    print({k: round(float(v), 4) for k, v in mean.items()})
    assert mean["pltanh"] >= best - 0.005


@pytest.mark.slow
@pytest.mark.criterion("6 Fashion-MNIST smoke")
def test_criterion_6_fashion_smoke():
    ds = _load("fashion_mnist")
    start = time.perf_counter()
    report = run_experiment(TrainConfig(dataset="fashion_mnist", activation="pltanh", alpha=0.01, epochs=3), ds)
    seconds = time.perf_counter() - start
    print(f"fashion_mnist PLTanh 3 epochs: accuracy {report.mean.accuracy:.4f} in {seconds:.0f} s")
    assert report.mean.accuracy >= 0.85
    assert seconds < 1800.0


@pytest.mark.criterion("7 metric oracles")
def test_criterion_7_metric_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for case in range(100):
        n, k = int(rng.integers(2, 101)), int(rng.integers(2, 7))
        probs = rng.dirichlet(np.ones(k), size=n)
        if case % 3 == 0:
            probs = np.round(probs, 1)
        labels = rng.integers(0, k, n)
        labels[:2] = rng.choice(k, 2, replace=False)
        pred = MT.predict(probs)
        got = MT.macro_prf(MT.confusion(labels, pred, k)) + (MT.macro_auc_ovr(probs, labels),)
        ref = oracles.prf_from_counts(labels.tolist(), pred.tolist(), k) + (oracles.macro_auc_pairs(probs, labels),)
        worst = max(worst, max(abs(a - b) for a, b in zip(got, ref)))
    print(f"worst metric deviation {worst:.2e}")
    assert worst <= 1e-12
    assert time.perf_counter() - start < 30.0


@pytest.mark.criterion("8 crossover solver")
def test_criterion_8_crossover():
    for alpha in (0.4, 0.1, 0.01):
        c = A.solve_crossover(alpha)
        assert abs(np.tanh(c.x_star) - alpha * c.x_star) <= 1e-12, alpha
    g = lambda x: np.tanh(x) - 0.4 * x
    assert g(2.4) > 0 > g(2.5)
    assert 2.4 < A.solve_crossover(0.4).x_star < 2.5


@pytest.mark.criterion("9 IDX and CIFAR-10 parser fixtures")
def test_criterion_9_parser_fixtures(tmp_path):
    rng = np.random.default_rng(9)
    for n, r, c in [(1, 1, 1), (2, 3, 5), (4, 28, 28), (7, 2, 9), (3, 4, 4)]:
        px = rng.integers(0, 256, size=(n, r, c), dtype=np.uint8)
        lb = rng.integers(0, 10, size=n, dtype=np.uint8)
        img_raw = struct.pack(">IIII", 0x803, n, r, c) + px.tobytes()
        lab_raw = struct.pack(">II", 0x801, n) + lb.tobytes()
        assert np.array_equal(D.parse_idx_images(img_raw)[..., 0], px)
        assert D.parse_idx_labels(lab_raw).tolist() == lb.tolist()
        assert D.encode_idx_images(px) == img_raw and D.encode_idx_labels(lb) == lab_raw
    for n in (1, 2, 3, 4, 6):
        planes = rng.integers(0, 256, size=(n, 3, 32, 32), dtype=np.uint8)
        lb = rng.integers(0, 10, size=n, dtype=np.uint8)
        raw = b"".join(bytes([lb[i]]) + planes[i].tobytes() for i in range(n))
        images, labels = D.parse_cifar10(raw)
        assert np.array_equal(images, planes.transpose(0, 2, 3, 1)) and labels.tolist() == lb.tolist()
        assert D.encode_cifar10(images, labels) == raw
    good = struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(8)
    with pytest.raises(D.DatasetFormatError, match="magic"):
        D.parse_idx_images(b"\x00\x00\x08\x01" + good[4:])
    with pytest.raises(D.DatasetFormatError, match="magic"):
        D.parse_idx_labels(good)
    with pytest.raises(D.DatasetFormatError, match="truncated"):
        D.parse_idx_images(good[:-1])
    with pytest.raises(D.DatasetFormatError, match="truncated"):
        D.parse_idx_labels(struct.pack(">II", 0x801, 5) + bytes(4))
    with pytest.raises(D.DatasetFormatError, match="3073"):
        D.parse_cifar10(bytes(3073 * 2 - 1))
    (tmp_path / "i").write_bytes(good)
    (tmp_path / "l").write_bytes(struct.pack(">II", 0x801, 3) + bytes(3))
    with pytest.raises(D.DatasetFormatError, match="mismatch"):
        D.load_idx(tmp_path / "i", tmp_path / "l")


def _metric_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    drop = cli.CSV_HEADER.index("seconds")
    return [",".join(v for i, v in enumerate(r) if i != drop) for r in rows]


@pytest.mark.criterion("10 cmd_run determinism")
def test_criterion_10_determinism(tmp_path, monkeypatch):
    # an IDX-backed run exercises the same loader path as the real datasets
    root = tmp_path / "root" / "mnist"
    root.mkdir(parents=True)
    rng = np.random.default_rng(10)
    (root / "train-images-idx3-ubyte").write_bytes(D.encode_idx_images(rng.integers(0, 256, (100, 28, 28))))
    (root / "train-labels-idx1-ubyte").write_bytes(D.encode_idx_labels(np.arange(100) % 10))
    monkeypatch.setenv(cli.DATA_ROOT_ENV, str(tmp_path / "root"))
    configs = {
        "synthetic": "dataset = synthetic\nsynthetic_samples = 150\nsynthetic_classes = 3\nsynthetic_shape = 12x12x1\nepochs = 2\nbatch_size = 16\n",
        "mnist": "dataset = mnist\nepochs = 1\nbatch_size = 32\n",
    }
    for name, text in configs.items():
        cfg = tmp_path / f"{name}.cfg"
        cfg.write_text(text + "activations = pltanh, relu, lrelu, alrelu\nseed = 5\n")
        outs = []
        for rep in range(2):
            out = tmp_path / f"{name}_{rep}"
            assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
            outs.append(_metric_columns(out.with_suffix(".csv")))
        assert len(outs[0]) == 5
        assert "\n".join(outs[0]).encode() == "\n".join(outs[1]).encode(), name


@pytest.mark.criterion("note synthetic-blob smoke (flowers, histo)")
@pytest.mark.parametrize("model,classes", [("flowers_cnn", 5), ("histo_cnn", 2)])
def test_synthetic_blob_smoke(model, classes):
    # 2000 samples at batch 16 give 500 optimizer steps in 5 epochs; with far
    # fewer steps the batch-norm running averages (momentum 0.99) still lag
    # the weights and infer-mode accuracy is unreliable
    ds = D.synthetic_blobs(2000, classes, (32, 32, 3), seed=0, noise=0.05)
    cfg = TrainConfig(model=model, dataset="synthetic", activation="pltanh", alpha=0.01, epochs=5, batch_size=16)
    fold = D.kfold_split(len(ds), 5, 0)[0]
    result = train_fold(model_for(cfg, ds), ds, fold, cfg)
    print(f"{model}: validation accuracy {result.metrics.accuracy:.3f} after {cfg.epochs} epochs")
    assert result.metrics.accuracy >= 0.95
