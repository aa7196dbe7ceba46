"""Define-by-run reverse-mode differentiation over the kernels in :mod:`pltanh.tensor`.

A :class:`Tape` stores values and the operations that produced them.  Ops
are looked up by name in :data:`OPS`; each registered op returns its output
plus a context object, and its backward maps (context, upstream gradient) to
one gradient per input.

    tape = Tape()
    w = tape.parameter(np.ones((2, 2)))
    x = tape.constant(np.eye(2))
    y = tape.record("dense", x, w, tape.constant(np.zeros(2)))
    grads = tape.backward(tape.record("sum", y))
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import activations as act
from . import tensor as T

_tape_ids = itertools.count()


@dataclass(frozen=True)
class NodeId:
    tape: int
    index: int


@dataclass
class _Entry:
    op: str
    inputs: Tuple[NodeId, ...]
    output: NodeId
    ctx: Any


class TapeError(ValueError):
    pass


@dataclass
class Op:
    forward: Callable[..., Tuple[np.ndarray, Any]]
    backward: Callable[[Any, np.ndarray], Sequence[Optional[np.ndarray]]]


OPS: Dict[str, Op] = {}


def register(name: str, forward, backward) -> None:
    OPS[name] = Op(forward, backward)


class Tape:
    """Single-owner record of one forward pass."""

    def __init__(self):
        self.id = next(_tape_ids)
        self.values: List[np.ndarray] = []
        self.entries: List[_Entry] = []
        self._params: List[NodeId] = []

    def _new(self, value: np.ndarray) -> NodeId:
        node = NodeId(self.id, len(self.values))
        self.values.append(value)
        return node

    def _check(self, node: NodeId) -> None:
        if not isinstance(node, NodeId) or node.tape != self.id or node.index >= len(self.values):
            raise TapeError(f"{node!r} does not belong to tape {self.id}")

    def constant(self, value) -> NodeId:
        return self._new(np.asarray(value))

    def parameter(self, value) -> NodeId:
        node = self._new(np.asarray(value))
        self._params.append(node)
        return node

    def value(self, node: NodeId) -> np.ndarray:
        self._check(node)
        return self.values[node.index]

    def record(self, op: str, *inputs: NodeId, **attrs) -> NodeId:
        if op not in OPS:
            raise TapeError(f"unknown op {op!r}")
        for node in inputs:
            self._check(node)
        out, ctx = OPS[op].forward(*(self.values[n.index] for n in inputs), **attrs)
        node = self._new(out)
        self.entries.append(_Entry(op, inputs, node, ctx))
        return node

    def context(self, node: NodeId) -> Any:
        """Saved forward context of the op that produced ``node``."""
        self._check(node)
        for entry in reversed(self.entries):
            if entry.output == node:
                return entry.ctx
        raise TapeError(f"{node!r} was not produced by a recorded op")

    def backward(self, loss: NodeId, wrt: Optional[Sequence[NodeId]] = None) -> Dict[NodeId, np.ndarray]:
        """Gradient of a scalar ``loss`` w.r.t. ``wrt`` (default: every parameter node).

        Nodes the loss does not depend on get an exact zero gradient.
        """
        self._check(loss)
        targets = list(self._params if wrt is None else wrt)
        for node in targets:
            self._check(node)
        loss_value = self.values[loss.index]
        if loss_value.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss_value.shape}")
        grads: Dict[int, np.ndarray] = {loss.index: np.ones_like(loss_value)}
        for entry in reversed(self.entries):
            g = grads.get(entry.output.index)
            if g is None:
                continue
            in_grads = OPS[entry.op].backward(entry.ctx, g)
            for node, ig in zip(entry.inputs, in_grads):
                if ig is None:
                    continue
                if node.index in grads:
                    grads[node.index] = grads[node.index] + ig
                else:
                    grads[node.index] = ig
        return {n: grads.get(n.index, np.zeros_like(self.values[n.index])) for n in targets}


# -- op registry ---------------------------------------------------------------


def _conv_fwd(x, k, b, padding="valid"):
    return T.conv2d(x, k, b, padding), (x, k, padding)


def _conv_bwd(ctx, g):
    x, k, padding = ctx
    return T.conv2d_backward(g, x, k, padding)


register("conv2d", _conv_fwd, _conv_bwd)


def _dense_fwd(x, w, b):
    return T.dense(x, w, b), (x, w)


register("dense", _dense_fwd, lambda ctx, g: T.dense_backward(g, *ctx))


def _pool_fwd(x):
    out, arg = T.maxpool2d(x)
    return out, (arg, x.shape)


register("maxpool2d", _pool_fwd, lambda ctx, g: (T.maxpool2d_backward(g, *ctx),))


def _softmax_fwd(x):
    p = T.softmax(x)
    return p, p


register("softmax", _softmax_fwd, lambda p, g: (T.softmax_backward(g, p),))


def _bn_fwd(x, gamma, beta, running_mean, running_var, mode="train"):
    out, cache, new_mean, new_var = T.batchnorm(x, gamma, beta, running_mean, running_var, mode)
    return out, (cache, new_mean, new_var)


def _bn_bwd(ctx, g):
    dx, dgamma, dbeta = T.batchnorm_backward(g, ctx[0])
    return dx, dgamma, dbeta, None, None


register("batchnorm", _bn_fwd, _bn_bwd)


def _dropout_fwd(x, rate=0.0, mode="train", rng=None):
    out, mask = T.dropout(x, rate, mode, rng)
    return out, mask


register("dropout", _dropout_fwd, lambda mask, g: (g * mask,))


def _gap_fwd(x):
    return T.global_avg_pool(x), x.shape


register("global_avg_pool", _gap_fwd, lambda shape, g: (T.global_avg_pool_backward(g, shape),))


def _flatten_fwd(x):
    return T.flatten(x), x.shape


register("flatten", _flatten_fwd, lambda shape, g: (g.reshape(shape),))


def _activation_fwd(x, kind: act.ActivationKind):
    return act.forward_and_derivative(kind, x)


register("activation", _activation_fwd, lambda slope, g: (g * slope,))


def _cross_entropy_fwd(probs, one_hot, clamp=1e-12):
    p = np.maximum(probs, clamp)
    n = probs.shape[0]
    loss = -(one_hot * np.log(p)).sum() / n
    return np.asarray(loss, dtype=probs.dtype), (probs, one_hot, clamp)


def _cross_entropy_bwd(ctx, g):
    probs, one_hot, clamp = ctx
    n = probs.shape[0]
    live = probs > clamp
    dp = np.where(live, -one_hot / np.maximum(probs, clamp), 0.0) * (g / n)
    return dp.astype(probs.dtype, copy=False), None


register("cross_entropy", _cross_entropy_fwd, _cross_entropy_bwd)

register("sum", lambda x: (np.asarray(x.sum()), x.shape), lambda shape, g: (np.broadcast_to(g, shape).copy(),))
register("add", lambda a, b: (a + b, None), lambda ctx, g: (g, g))
register("mul", lambda a, b: (a * b, (a, b)), lambda ctx, g: (g * ctx[1], g * ctx[0]))
register("square", lambda x: (x * x, x), lambda x, g: (2 * x * g,))


# -- finite differences --------------------------------------------------------


def finite_difference_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    ``indices`` restricts the probe to some flat coordinates; the rest of the
    returned array is left at zero.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    coords = range(flat.size) if indices is None else indices
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)`` elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
