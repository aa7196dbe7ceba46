"""Adam, the per-fold training loop, k-fold experiments and the alpha grid sweep."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import data as D
from .activations import ActivationKind
from .metrics import Metrics, MetricsReport, evaluate
from .model import ModelParams, ModelSpec, build, forward, init_params, loss_and_grads

log = logging.getLogger(__name__)


def cross_entropy(probabilities: np.ndarray, one_hot: np.ndarray, clamp: float = 1e-12) -> float:
    """Mean over the batch of -log p(true class), with p clamped below at ``clamp``."""
    p = np.maximum(np.asarray(probabilities, dtype=np.float64), clamp)
    return float(-(np.asarray(one_hot) * np.log(p)).sum() / p.shape[0])


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    model: str = "mnist_cnn"
    dataset: str = "mnist"
    activation: str = "pltanh"
    alpha: float = 0.01
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    folds: int = 5
    eval_batch_size: int = 1000

    def __post_init__(self):
        for name in ("epochs", "batch_size", "folds", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        self.activation_kind  # validates name and alpha

    @property
    def activation_kind(self) -> ActivationKind:
        return ActivationKind.parse(self.activation, self.alpha)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float, fold: Optional[int] = None):
        self.epoch, self.batch, self.loss, self.fold = epoch, batch, loss, fold
        where = f"fold {fold}, " if fold is not None else ""
        super().__init__(f"non-finite loss {loss} at {where}epoch {epoch}, batch {batch}")


@dataclass
class FoldResult:
    params: ModelParams
    losses: List[float]
    metrics: Metrics


def model_for(config: TrainConfig, dataset: D.Dataset) -> ModelSpec:
    spec = build(config.model, config.activation_kind, classes=dataset.classes)
    return spec.with_input_shape(dataset.images.shape[1:])


def fit(
    spec: ModelSpec,
    params: ModelParams,
    dataset: D.Dataset,
    indices: np.ndarray,
    config: TrainConfig,
    seed_key: Sequence[int] = (),
) -> List[float]:
    """Train ``params`` in place on ``indices``; returns the mean loss of each epoch."""
    state = AdamState(lr=config.learning_rate)
    dropout_rng = np.random.default_rng([config.seed, *seed_key, 1])
    losses = []
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        shuffle = int(np.random.default_rng([config.seed, *seed_key, 2, epoch]).integers(2**31))
        for b, (x, y) in enumerate(D.batch_iter(dataset, indices, config.batch_size, shuffle)):
            loss, grads, updates = loss_and_grads(spec, params, x, y, dropout_rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
            adam_step(params.weights, grads, state)
            params.stats.update(updates)
            total += loss * x.shape[0]
            count += x.shape[0]
        losses.append(total / count)
        log.debug("epoch %d loss %.5f", epoch, losses[-1])
    return losses


def predict_proba(spec: ModelSpec, params: ModelParams, images: np.ndarray, batch_size: int = 1000) -> np.ndarray:
    return forward(spec, params, images, mode="infer", batch_size=batch_size)


def train_fold(spec: ModelSpec, dataset: D.Dataset, fold: D.FoldSplit, config: TrainConfig) -> FoldResult:
    """Train on ``fold.train`` from a fresh initialization and score ``fold.validation``."""
    params = init_params(spec, seed=[config.seed, fold.fold], dtype=dataset.images.dtype)
    try:
        losses = fit(spec, params, dataset, fold.train, config, seed_key=(fold.fold,))
    except TrainingDiverged as exc:
        raise TrainingDiverged(exc.epoch, exc.batch, exc.loss, fold.fold) from None
    probs = predict_proba(spec, params, dataset.images[fold.validation], config.eval_batch_size)
    metrics = evaluate(probs, dataset.labels[fold.validation], dataset.classes)
    log.info("fold %d %s: acc %.4f", fold.fold, spec.activation, metrics.accuracy)
    return FoldResult(params, losses, metrics)


def run_experiment(config: TrainConfig, dataset: D.Dataset) -> MetricsReport:
    """k-fold cross-validation; the report mean is the per-metric average over folds."""
    spec = model_for(config, dataset)
    folds = D.kfold_split(len(dataset), config.folds, config.seed)
    return MetricsReport.from_folds([train_fold(spec, dataset, f, config).metrics for f in folds])


@dataclass(frozen=True)
class SweepResult:
    rows: tuple  # ((alpha, MetricsReport), ...)

    @property
    def best_alpha(self) -> float:
        # highest mean accuracy; lowest alpha wins ties
        return min(self.rows, key=lambda r: (-r[1].mean.accuracy, r[0]))[0]


def alpha_sweep(config: TrainConfig, alphas: Sequence[float], dataset: D.Dataset) -> SweepResult:
    """Grid search over alpha with everything else (including the seed) held fixed."""
    if not alphas:
        raise ValueError("alpha list is empty")
    if any(a < 0 for a in alphas):
        raise ValueError("alphas must be non-negative")
    return SweepResult(tuple((a, run_experiment(replace(config, alpha=a), dataset)) for a in alphas))
