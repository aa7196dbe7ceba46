"""Finite-difference checks of activation derivatives and whole-network gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from . import activations as act
from .activations import ActivationKind, Kind
from .autodiff import Tape, relative_error
from .model import build, forward_on_tape, init_params, loss_and_grads

ALPHAS = (1e-9, 0.01, 0.4)

# smallest inputs every builder accepts; histo needs five 2x2 pools
TOY_INPUTS = {
    "mnist_cnn": (8, 8, 1),
    "flowers_cnn": (18, 18, 3),
    "cifar10_cnn": (16, 16, 3),
    "histo_cnn": (32, 32, 3),
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    tolerance: float
    checked: int
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.worst <= self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f", {self.skipped} skipped at kinks" if self.skipped else ""
        return (
            f"{status} {self.name}: worst relative error {self.worst:.3e} "
            f"(tol {self.tolerance:g}, {self.checked} points{extra})"
        )


def activation_points(kind: ActivationKind, n: int = 1000, lo: float = -50.0, hi: float = 150.0,
                      exclusion: float = 1e-3, seed: int = 0) -> np.ndarray:
    """``n`` uniform points in [lo, hi] at least ``exclusion`` away from every kink."""
    rng = np.random.default_rng(seed)
    bad = np.array([k for x in act.kinks(kind) for k in (x, -x)])
    out = np.empty(0)
    while out.size < n:
        x = rng.uniform(lo, hi, size=2 * n)
        if bad.size:
            x = x[np.min(np.abs(x[:, None] - bad[None, :]), axis=1) > exclusion]
        out = np.concatenate([out, x])
    return out[:n]


def check_activation(
    kind: ActivationKind,
    n: int = 1000,
    h: float = 1e-6,
    tolerance: float = 1e-6,
    seed: int = 0,
    derivative: Optional[Callable[[ActivationKind, np.ndarray], np.ndarray]] = None,
) -> CheckResult:
    """Compare the analytic derivative with central differences of the forward pass.

    Relative error uses a unit floor in the denominator: these derivatives are
    all O(1) or smaller, and saturated tanh slopes (~1e-40) sit far below what
    a difference quotient in double precision can resolve.
    """
    derivative = derivative or act.derivative
    x = activation_points(kind, n, seed=seed)
    analytic = derivative(kind, x)
    numeric = (act.forward(kind, x + h) - act.forward(kind, x - h)) / (2 * h)
    err = relative_error(analytic, numeric, floor=1.0)
    return CheckResult(str(kind), float(err.max()), tolerance, n)


def all_activation_kinds(alphas: Sequence[float] = ALPHAS):
    kinds = []
    for k in Kind:
        if k in (Kind.RELU, Kind.TANH):
            kinds.append(ActivationKind(k))
        else:
            kinds.extend(ActivationKind(k, a) for a in alphas)
    return kinds


def _loss_and_signature(spec, params, x, y, rng):
    """Loss plus the branch taken by every activation unit and max-pool window."""
    tape = Tape()
    weights = {k: tape.constant(v) for k, v in params.weights.items()}
    probs = forward_on_tape(spec, tape, weights, params.stats, tape.constant(x), "train", rng)
    loss = float(tape.value(tape.record("cross_entropy", probs, tape.constant(y))))
    sig = []
    for entry in tape.entries:
        if entry.op == "maxpool2d":
            sig.append(entry.ctx[0])
        elif entry.op == "activation":
            z = tape.values[entry.inputs[0].index]
            cut = np.array(act.kinks(spec.activation))
            sig.append(np.searchsorted(cut, z, side="right").astype(np.int8) if cut.size else None)
    return loss, sig


def _same_branches(a, b) -> bool:
    return all((u is None and v is None) or np.array_equal(u, v) for u, v in zip(a, b))


def check_model(
    model: str,
    kind: ActivationKind,
    batch: int = 4,
    coords_per_tensor: int = 6,
    steps: Sequence[float] = (1e-5, 1e-6, 1e-7),
    tolerance: float = 1e-4,
    floor: float = 1e-5,
    seed: int = 0,
) -> CheckResult:
    """Backprop vs central differences on sampled coordinates of every weight tensor.

    Runs in float64 and train mode; dropout masks are pinned by re-seeding the
    dropout generator for every loss evaluation.  A difference quotient is only
    trusted when x - h, x and x + h take the same branch at every activation
    unit and max-pool window; otherwise the next smaller step is tried, and a
    coordinate with no kink-free step is counted in ``skipped``.
    """
    shape = TOY_INPUTS[model]
    spec = build(model, kind).with_input_shape(shape)
    params = init_params(spec, seed=seed, dtype=np.float64)
    rng = np.random.default_rng([seed, 7])
    # give biases and batch-norm affine terms non-trivial values
    for k, v in params.weights.items():
        if not k.endswith("kernel"):
            v += rng.normal(0.0, 0.1, size=v.shape)
    x = rng.normal(0.0, 1.0, size=(batch,) + shape)
    y = np.eye(spec.classes)[rng.integers(0, spec.classes, size=batch)]

    def dropout_rng():
        return np.random.default_rng([seed, 11])

    _, grads, _ = loss_and_grads(spec, params, x, y, dropout_rng())
    _, base = _loss_and_signature(spec, params, x, y, dropout_rng())
    worst, checked, skipped = 0.0, 0, 0
    for name, w in params.weights.items():
        flat = w.reshape(-1)
        coords = rng.choice(flat.size, size=min(coords_per_tensor, flat.size), replace=False)
        g = grads[name].reshape(-1)
        for i in coords:
            numeric = None
            orig = flat[i]
            for h in steps:
                flat[i] = orig + h
                fp, sp = _loss_and_signature(spec, params, x, y, dropout_rng())
                flat[i] = orig - h
                fm, sm = _loss_and_signature(spec, params, x, y, dropout_rng())
                flat[i] = orig
                if _same_branches(sp, base) and _same_branches(sm, base):
                    numeric = (fp - fm) / (2 * h)
                    break
            if numeric is None:
                skipped += 1
                continue
            worst = max(worst, float(relative_error(g[i], numeric, floor)))
            checked += 1
    return CheckResult(f"{model} [{kind}]", worst, tolerance, checked, skipped)


def run_all(models: Sequence[str] = tuple(TOY_INPUTS), kinds=None, derivative=None, **model_kwargs) -> Dict[str, list]:
    """Activation suite plus one whole-network check per (model, activation)."""
    kinds = kinds if kinds is not None else all_activation_kinds()
    report = {"activations": [check_activation(k, derivative=derivative) for k in kinds], "models": []}
    for model in models:
        for k in kinds_for_models(kinds):
            report["models"].append(check_model(model, k, **model_kwargs))
    return report


def kinds_for_models(kinds):
    """One representative per activation tag (alpha = 0.01 where it applies)."""
    seen, out = set(), []
    for k in kinds:
        if k.kind not in seen:
            seen.add(k.kind)
            out.append(ActivationKind(k.kind, 0.01))
    return out
