"""Parametric Leaky Tanh and the baseline activations it is compared with.

Scalar forms (``*_fwd`` / ``*_bwd``) take Python floats; :func:`forward` and
:func:`derivative` are the vectorized versions used by the network.

PLTanh is ``max(tanh(x), alpha * |x|)``.  Its derivative is the derivative of
whichever arm of the max is active; where both arms are equal (x = 0 and the
positive crossover) the tanh arm wins, so ``pltanh_bwd(0, a) == 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_ALPHA = 0.01


class Kind(str, Enum):
    RELU = "relu"
    LRELU = "lrelu"
    ALRELU = "alrelu"
    TANH = "tanh"
    PLTANH = "pltanh"


_ALIASES = {
    "relu": Kind.RELU,
    "lrelu": Kind.LRELU,
    "leakyrelu": Kind.LRELU,
    "leaky_relu": Kind.LRELU,
    "alrelu": Kind.ALRELU,
    "tanh": Kind.TANH,
    "pltanh": Kind.PLTANH,
}


@dataclass(frozen=True)
class ActivationKind:
    """An activation tag plus its slope parameter (ignored by ReLU and Tanh)."""

    kind: Kind
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.alpha >= 0.0 or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be a finite non-negative number, got {self.alpha}")

    @classmethod
    def parse(cls, name: str, alpha: float = DEFAULT_ALPHA) -> "ActivationKind":
        key = name.strip().lower()
        if key not in _ALIASES:
            raise ValueError(f"unknown activation {name!r}; expected one of {sorted({k.value for k in Kind})}")
        return cls(_ALIASES[key], alpha)

    @property
    def uses_alpha(self) -> bool:
        return self.kind in (Kind.LRELU, Kind.ALRELU, Kind.PLTANH)

    @property
    def label(self) -> str:
        return {
            Kind.RELU: "ReLU",
            Kind.LRELU: "LReLU",
            Kind.ALRELU: "ALReLU",
            Kind.TANH: "Tanh",
            Kind.PLTANH: "PLTanh",
        }[self.kind]

    def __str__(self) -> str:
        return f"{self.label}(alpha={self.alpha:g})" if self.uses_alpha else self.label


def _check_alpha(alpha: float) -> None:
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")


# -- scalar forms ------------------------------------------------------------


def relu_fwd(x: float) -> float:
    return x if x > 0 else 0.0


def relu_bwd(x: float) -> float:
    return 1.0 if x > 0 else 0.0


def lrelu_fwd(x: float, alpha: float = DEFAULT_ALPHA) -> float:
    return x if x > 0 else alpha * x


def lrelu_bwd(x: float, alpha: float = DEFAULT_ALPHA) -> float:
    return 1.0 if x > 0 else alpha


def alrelu_fwd(x: float, alpha: float = DEFAULT_ALPHA) -> float:
    return x if x > 0 else alpha * abs(x)


def alrelu_bwd(x: float, alpha: float = DEFAULT_ALPHA) -> float:
    return 1.0 if x > 0 else -alpha


# np.tanh rather than math.tanh: the two can differ in the last bit, and the
# scalar and array forms must pick the same PLTanh branch near the crossover.
def _tanh(x: float) -> float:
    return float(np.tanh(np.float64(x)))


def tanh_fwd(x: float) -> float:
    return _tanh(x)


def tanh_bwd(x: float) -> float:
    t = _tanh(x)
    return 1.0 - t * t


def pltanh_fwd(x: float, alpha: float = DEFAULT_ALPHA) -> float:
    _check_alpha(alpha)
    return max(_tanh(x), alpha * abs(x))


def pltanh_bwd(x: float, alpha: float = DEFAULT_ALPHA) -> float:
    _check_alpha(alpha)
    t = _tanh(x)
    if t >= alpha * abs(x):
        return 1.0 - t * t
    return -alpha if x < 0 else alpha


# -- crossover ---------------------------------------------------------------


@dataclass(frozen=True)
class CrossoverPoint:
    """Positive solution of tanh(x) = alpha * x."""

    alpha: float
    x_star: float

    @property
    def residual(self) -> float:
        return abs(math.tanh(self.x_star) - self.alpha * self.x_star)


def solve_crossover(alpha: float, tol: float = 1e-12, max_iter: int = 2000) -> CrossoverPoint:
    """Bisect ``tanh(x) - alpha*x`` on (eps, 2/alpha] for 0 < alpha < 1.

    For alpha >= 1 the tanh arm is active only at x = 0, so there is no
    positive crossover and ValueError is raised.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"no positive crossover for alpha={alpha}; need 0 < alpha < 1")

    def g(x: float) -> float:
        return math.tanh(x) - alpha * x

    hi = 2.0 / alpha
    lo = min(1e-3, 0.5 * math.sqrt(3.0 * (1.0 - alpha)))
    while g(lo) <= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            raise ValueError(f"could not bracket the crossover for alpha={alpha}")
    best = lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        gm = g(mid)
        if abs(gm) < abs(g(best)):
            best = mid
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
    if abs(g(best)) > tol:
        raise ArithmeticError(f"crossover residual {abs(g(best)):.3e} above {tol:g} for alpha={alpha}")
    return CrossoverPoint(alpha, best)


def kinks(kind: ActivationKind) -> tuple:
    """Points where the chosen activation is not differentiable."""
    if kind.kind is Kind.TANH:
        return ()
    if kind.kind is Kind.PLTANH and 0.0 < kind.alpha < 1.0:
        return (0.0, solve_crossover(kind.alpha).x_star)
    return (0.0,)


# -- vectorized forms ----------------------------------------------------------


def forward(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """Apply the activation elementwise, keeping ``x``'s dtype."""
    x = np.asarray(x)
    a = x.dtype.type(kind.alpha)
    k = kind.kind
    if k is Kind.RELU:
        return np.maximum(x, x.dtype.type(0))
    if k is Kind.LRELU:
        return np.where(x > 0, x, a * x)
    if k is Kind.ALRELU:
        return np.where(x > 0, x, a * np.abs(x))
    if k is Kind.TANH:
        return np.tanh(x)
    return np.maximum(np.tanh(x), a * np.abs(x))


def derivative(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """Elementwise derivative matching the scalar ``*_bwd`` conventions."""
    return forward_and_derivative(kind, x)[1]


def forward_and_derivative(kind: ActivationKind, x: np.ndarray):
    """``(f(x), f'(x))`` in one pass; the network's activation op uses this."""
    x = np.asarray(x)
    one = x.dtype.type(1)
    zero = x.dtype.type(0)
    a = x.dtype.type(kind.alpha)
    k = kind.kind
    if k is Kind.RELU:
        pos = x > 0
        return np.where(pos, x, zero), pos.astype(x.dtype)
    if k is Kind.LRELU:
        pos = x > 0
        return np.where(pos, x, a * x), np.where(pos, one, a)
    if k is Kind.ALRELU:
        pos = x > 0
        return np.where(pos, x, a * np.abs(x)), np.where(pos, one, -a)
    t = np.tanh(x)
    sech2 = one - t * t
    if k is Kind.TANH:
        return t, sech2
    lin = a * np.abs(x)
    tanh_arm = t >= lin
    # the linear arm's slope is sign(x) * alpha; x == 0 always takes the tanh arm
    return np.maximum(t, lin), np.where(tanh_arm, sech2, np.copysign(a, x))


def pltanh_piecewise(x: np.ndarray, alpha: float) -> np.ndarray:
    """Three-piece form of PLTanh, written out branch by branch.

    Kept separate from :func:`forward` so the two can be compared.
    """
    x = np.asarray(x, dtype=np.float64)
    if 0.0 < alpha < 1.0:
        x_star = solve_crossover(alpha).x_star
        return np.where(x < 0, -alpha * x, np.where(x <= x_star, np.tanh(x), alpha * x))
    if alpha == 0.0:
        return np.where(x < 0, 0.0, np.tanh(x))
    # alpha >= 1: the linear arm dominates everywhere except x = 0
    return alpha * np.abs(x)


SCALAR = {
    Kind.RELU: (lambda x, a: relu_fwd(x), lambda x, a: relu_bwd(x)),
    Kind.LRELU: (lrelu_fwd, lrelu_bwd),
    Kind.ALRELU: (alrelu_fwd, alrelu_bwd),
    Kind.TANH: (lambda x, a: tanh_fwd(x), lambda x, a: tanh_bwd(x)),
    Kind.PLTANH: (pltanh_fwd, pltanh_bwd),
}
