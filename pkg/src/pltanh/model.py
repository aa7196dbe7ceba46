"""Architecture builders, parameter initialization and the tape-backed forward pass.

Four builders cover the five benchmark datasets (MNIST and Fashion-MNIST
share one network).  A :class:`ModelSpec` is an immutable list of
:class:`LayerSpec`; parameters live in a separate :class:`ModelParams` keyed
by ``"<layer index>.<role>"`` so that swapping the activation never changes
parameter shapes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import tensor as T
from .activations import ActivationKind
from .autodiff import NodeId, Tape

LAYER_KINDS = (
    "conv2d",
    "maxpool",
    "dropout",
    "batchnorm",
    "dense",
    "flatten",
    "global_avg_pool",
    "activation",
    "softmax",
)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: Optional[int] = None
    kernel: Optional[int] = None
    padding: str = "valid"
    rate: Optional[float] = None
    units: Optional[int] = None
    activation: Optional[ActivationKind] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: Tuple[LayerSpec, ...]
    input_shape: Tuple[int, int, int]
    classes: int

    def with_input_shape(self, shape: Tuple[int, int, int]) -> "ModelSpec":
        return replace(self, input_shape=tuple(shape))

    def with_activation(self, activation: ActivationKind) -> "ModelSpec":
        layers = tuple(
            replace(l, activation=activation) if l.kind == "activation" else l for l in self.layers
        )
        return replace(self, layers=layers)

    @property
    def activation(self) -> Optional[ActivationKind]:
        for l in self.layers:
            if l.kind == "activation":
                return l.activation
        return None


def conv(filters, kernel=3, padding="valid"):
    return LayerSpec("conv2d", filters=filters, kernel=kernel, padding=padding)


def dense(units):
    return LayerSpec("dense", units=units)


def drop(rate):
    return LayerSpec("dropout", rate=rate)


def activation(kind: ActivationKind):
    return LayerSpec("activation", activation=kind)


POOL = LayerSpec("maxpool")
BN = LayerSpec("batchnorm")
FLATTEN = LayerSpec("flatten")
GAP = LayerSpec("global_avg_pool")
SOFTMAX = LayerSpec("softmax")


def build_mnist_cnn(act: ActivationKind, classes: int = 10, input_shape=(28, 28, 1)) -> ModelSpec:
    layers = (conv(32), activation(act), POOL, FLATTEN, dense(classes), SOFTMAX)
    return ModelSpec("mnist_cnn", layers, tuple(input_shape), classes)


def build_flowers_cnn(act: ActivationKind, classes: int = 5, input_shape=(32, 32, 3)) -> ModelSpec:
    a = activation(act)
    layers = (
        conv(32), a, POOL, drop(0.25),
        conv(64), a, POOL, drop(0.25),
        conv(128), a, drop(0.4),
        FLATTEN, dense(128), a, drop(0.3),
        dense(classes), SOFTMAX,
    )
    return ModelSpec("flowers_cnn", layers, tuple(input_shape), classes)


def build_cifar10_cnn(act: ActivationKind, classes: int = 10, input_shape=(32, 32, 3)) -> ModelSpec:
    a = activation(act)
    layers: List[LayerSpec] = []
    for filters, rate in ((32, 0.2), (64, 0.3), (128, 0.4)):
        layers += [conv(filters, padding="same"), a, BN, conv(filters, padding="same"), a, BN, POOL, drop(rate)]
    layers += [FLATTEN, dense(128), a, BN, drop(0.5), dense(classes), SOFTMAX]
    return ModelSpec("cifar10_cnn", tuple(layers), tuple(input_shape), classes)


def build_histo_cnn(act: ActivationKind, classes: int = 2, input_shape=(96, 96, 3)) -> ModelSpec:
    if classes < 2:
        raise ValueError("histo_cnn needs at least 2 classes")
    a = activation(act)
    layers: List[LayerSpec] = []
    for filters, kernel, rate in ((32, 5, 0.1), (64, 3, 0.2), (128, 3, 0.3), (256, 3, 0.4), (512, 3, 0.5)):
        layers += [conv(filters, kernel, padding="same"), a, POOL, BN, drop(rate)]
    layers += [GAP, a, BN, drop(0.3), dense(256), a, BN, drop(0.4), dense(classes), SOFTMAX]
    return ModelSpec("histo_cnn", tuple(layers), tuple(input_shape), classes)


BUILDERS = {
    "mnist_cnn": build_mnist_cnn,
    "flowers_cnn": build_flowers_cnn,
    "cifar10_cnn": build_cifar10_cnn,
    "histo_cnn": build_histo_cnn,
}


def build(name: str, act: ActivationKind, **kwargs) -> ModelSpec:
    if name not in BUILDERS:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(BUILDERS)}")
    return BUILDERS[name](act, **kwargs)


# -- shapes and parameters -----------------------------------------------------


def layer_shapes(spec: ModelSpec) -> List[Tuple[int, ...]]:
    """Per-sample output shape of every layer, validating that they compose."""
    shape: Tuple[int, ...] = tuple(spec.input_shape)
    out = []
    for i, layer in enumerate(spec.layers):
        try:
            shape = _next_shape(layer, shape)
        except T.ShapeError as exc:
            raise T.ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        out.append(shape)
    return out


def _next_shape(layer: LayerSpec, shape):
    k = layer.kind
    if k == "conv2d":
        if len(shape) != 3:
            raise T.ShapeError(f"expects (H, W, C) input, got {shape}")
        h, w, _ = shape
        if layer.padding == "same":
            return (h, w, layer.filters)
        if layer.kernel > h or layer.kernel > w:
            raise T.ShapeError(f"kernel {layer.kernel} larger than input {h}x{w}")
        return (h - layer.kernel + 1, w - layer.kernel + 1, layer.filters)
    if k == "maxpool":
        if len(shape) != 3 or shape[0] < 2 or shape[1] < 2:
            raise T.ShapeError(f"cannot 2x2-pool {shape}")
        return (shape[0] // 2, shape[1] // 2, shape[2])
    if k == "flatten":
        return (int(np.prod(shape)),)
    if k == "global_avg_pool":
        if len(shape) != 3:
            raise T.ShapeError(f"expects (H, W, C) input, got {shape}")
        return (shape[2],)
    if k == "dense":
        if len(shape) != 1:
            raise T.ShapeError(f"expects a flat input, got {shape}")
        return (layer.units,)
    return shape


@dataclass
class ModelParams:
    """Trainable weights plus batch-norm running statistics."""

    weights: Dict[str, np.ndarray] = field(default_factory=dict)
    stats: Dict[str, np.ndarray] = field(default_factory=dict)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            {k: v.astype(dtype) for k, v in self.weights.items()},
            {k: v.astype(dtype) for k, v in self.stats.items()},
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.stats.items()},
        )

    def count(self) -> int:
        return sum(v.size for v in self.weights.values())


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights, zero biases, unit gamma, zero beta; running var 1."""
    rng = np.random.default_rng(seed)
    params = ModelParams()
    shape: Tuple[int, ...] = tuple(spec.input_shape)
    for i, (layer, out_shape) in enumerate(zip(spec.layers, layer_shapes(spec))):
        if layer.kind == "conv2d":
            k, cin, cout = layer.kernel, shape[-1], layer.filters
            params.weights[f"{i}.kernel"] = _glorot(rng, (k, k, cin, cout), k * k * cin, k * k * cout, dtype)
            params.weights[f"{i}.bias"] = np.zeros(cout, dtype)
        elif layer.kind == "dense":
            d, u = shape[0], layer.units
            params.weights[f"{i}.kernel"] = _glorot(rng, (d, u), d, u, dtype)
            params.weights[f"{i}.bias"] = np.zeros(u, dtype)
        elif layer.kind == "batchnorm":
            c = shape[-1]
            params.weights[f"{i}.gamma"] = np.ones(c, dtype)
            params.weights[f"{i}.beta"] = np.zeros(c, dtype)
            params.stats[f"{i}.running_mean"] = np.zeros(c, dtype)
            params.stats[f"{i}.running_var"] = np.ones(c, dtype)
        shape = out_shape
    return params


# -- forward -------------------------------------------------------------------


def forward_on_tape(
    spec: ModelSpec,
    tape: Tape,
    weights: Dict[str, NodeId],
    stats: Dict[str, np.ndarray],
    x: NodeId,
    mode: str = "train",
    rng: Optional[np.random.Generator] = None,
    stat_updates: Optional[Dict[str, np.ndarray]] = None,
) -> NodeId:
    """Record the network on ``tape`` and return the softmax output node.

    In train mode the new batch-norm running statistics are written into
    ``stat_updates`` (if given) rather than applied.
    """
    h = x
    for i, layer in enumerate(spec.layers):
        try:
            h = _record_layer(i, layer, tape, weights, stats, h, mode, rng, stat_updates)
        except T.ShapeError as exc:
            raise T.ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
    return h


def _record_layer(i, layer, tape, weights, stats, h, mode, rng, stat_updates):
    k = layer.kind
    if k == "conv2d":
        return tape.record("conv2d", h, weights[f"{i}.kernel"], weights[f"{i}.bias"], padding=layer.padding)
    if k == "dense":
        return tape.record("dense", h, weights[f"{i}.kernel"], weights[f"{i}.bias"])
    if k == "activation":
        return tape.record("activation", h, kind=layer.activation)
    if k == "maxpool":
        return tape.record("maxpool2d", h)
    if k == "flatten":
        return tape.record("flatten", h)
    if k == "global_avg_pool":
        return tape.record("global_avg_pool", h)
    if k == "softmax":
        return tape.record("softmax", h)
    if k == "dropout":
        return tape.record("dropout", h, rate=layer.rate, mode=mode, rng=rng)
    if k == "batchnorm":
        rm = tape.constant(stats[f"{i}.running_mean"])
        rv = tape.constant(stats[f"{i}.running_var"])
        out = tape.record("batchnorm", h, weights[f"{i}.gamma"], weights[f"{i}.beta"], rm, rv, mode=mode)
        if mode == "train" and stat_updates is not None:
            _, new_mean, new_var = tape.context(out)
            dtype = stats[f"{i}.running_mean"].dtype
            stat_updates[f"{i}.running_mean"] = new_mean.astype(dtype)
            stat_updates[f"{i}.running_var"] = new_var.astype(dtype)
        return out
    raise ValueError(f"unhandled layer kind {k!r}")


def _check_input(spec: ModelSpec, x: np.ndarray) -> None:
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(spec.input_shape):
        raise T.ShapeError(f"{spec.name} expects input (N, {', '.join(map(str, spec.input_shape))}), got {x.shape}")


def forward(
    spec: ModelSpec,
    params: ModelParams,
    x: np.ndarray,
    mode: str = "infer",
    rng: Optional[np.random.Generator] = None,
    batch_size: Optional[int] = None,
) -> np.ndarray:
    """Class probabilities for ``x``; evaluated in chunks of ``batch_size`` when given."""
    _check_input(spec, x)
    if batch_size is not None and x.shape[0] > batch_size:
        if mode == "train":
            raise ValueError("chunked forward is only meaningful in infer mode")
        return np.concatenate(
            [forward(spec, params, x[s:s + batch_size], mode, rng) for s in range(0, x.shape[0], batch_size)]
        )
    tape = Tape()
    weights = {k: tape.constant(v) for k, v in params.weights.items()}
    out = forward_on_tape(spec, tape, weights, params.stats, tape.constant(x), mode, rng)
    return tape.value(out)


def loss_and_grads(
    spec: ModelSpec,
    params: ModelParams,
    x: np.ndarray,
    one_hot: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    mode: str = "train",
):
    """Mean cross-entropy of a batch and its gradient w.r.t. every weight.

    Returns ``(loss, grads, stat_updates)``.
    """
    _check_input(spec, x)
    tape = Tape()
    weights = {k: tape.parameter(v) for k, v in params.weights.items()}
    updates: Dict[str, np.ndarray] = {}
    probs = forward_on_tape(spec, tape, weights, params.stats, tape.constant(x), mode, rng, updates)
    loss = tape.record("cross_entropy", probs, tape.constant(one_hot.astype(x.dtype, copy=False)))
    grads = tape.backward(loss)
    return float(tape.value(loss)), {k: grads[n] for k, n in weights.items()}, updates


def loss_value(spec, params, x, one_hot, rng=None, mode="train") -> float:
    tape = Tape()
    weights = {k: tape.constant(v) for k, v in params.weights.items()}
    probs = forward_on_tape(spec, tape, weights, params.stats, tape.constant(x), mode, rng)
    return float(tape.value(tape.record("cross_entropy", probs, tape.constant(one_hot.astype(x.dtype)))))


# -- checkpoints ---------------------------------------------------------------

CHECKPOINT_MAGIC = b"PLTCKPT\x00"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ModelParams, meta: Optional[dict] = None) -> None:
    """Write every tensor to a single binary file.

    Layout: 8-byte magic, little-endian u32 version, u32 manifest length, UTF-8
    JSON manifest, then each tensor's row-major little-endian payload in
    manifest order.
    """
    entries, payloads, offset = [], [], 0
    named = [("weights/" + k, v) for k, v in params.weights.items()]
    named += [("stats/" + k, v) for k, v in params.stats.items()]
    for name, arr in named:
        arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        data = arr.tobytes(order="C")
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        payloads.append(data)
        offset += len(data)
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(manifest)))
        fh.write(manifest)
        for data in payloads:
            fh.write(data)


def load_checkpoint(path) -> Tuple[ModelParams, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version, mlen = struct.unpack_from("<II", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    manifest = json.loads(raw[16:16 + mlen])
    base = 16 + mlen
    params = ModelParams()
    for e in manifest["tensors"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(raw):
            raise ValueError(f"{path}: truncated payload for {e['name']}")
        arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)), offset=start)
        arr = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
        group, key = e["name"].split("/", 1)
        (params.weights if group == "weights" else params.stats)[key] = arr
    return params, manifest["meta"]
