"""Reverse-mode differentiation for the fixed computation graph of the model.

This is not a general autodiff system: it supports exactly the operations
the survival mixture needs (dense layers, elementwise activations, squares
and sums for the penalty terms, plus externally supplied fused loss nodes).
Values are numpy arrays; gradients accumulate into a :class:`ParamStore`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "GraphError",
    "ParamStore",
    "ActivationKind",
    "activation",
    "activation_deriv",
    "softmax",
    "log_softmax",
    "Node",
    "backward",
    "leaf",
    "constant",
    "matmul",
    "add_row",
    "add",
    "apply_activation",
    "square",
    "total",
    "scale",
    "MlpSpec",
    "init_mlp",
    "mlp_forward",
    "mlp_graph",
]

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


class ShapeError(ValueError):
    """Raised when an input does not match the recorded layer shapes."""


class GraphError(RuntimeError):
    """Raised when backward is requested without a recorded forward pass."""


class ParamStore:
    """Named parameter arrays with parallel gradient accumulators."""

    def __init__(self) -> None:
        self._params: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        arr = np.array(value, dtype=np.float64)
        self._params[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g.fill(0.0)

    def parameter_count(self) -> int:
        return sum(p.size for p in self._params.values())

    def check_finite(self) -> None:
        for name, p in self._params.items():
            if not np.all(np.isfinite(p)):
                raise FloatingPointError(f"parameter {name!r} is not finite")

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, p in snap.items():
            self._params[name][...] = p


class ActivationKind(enum.Enum):
    RELU6 = "relu6"
    SELU = "selu"
    TANH = "tanh"
    SOFTMAX = "softmax"


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis."""
    x = np.asarray(logits, dtype=np.float64)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Log of softmax computed directly (shift + log-sum-exp)."""
    x = np.asarray(logits, dtype=np.float64)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def activation(kind: ActivationKind, x):
    """Apply an activation elementwise; softmax over the last axis."""
    if kind is ActivationKind.SOFTMAX:
        return softmax(x)
    scalar = np.isscalar(x)
    arr = np.asarray(x, dtype=np.float64)
    if kind is ActivationKind.RELU6:
        out = np.minimum(np.maximum(arr, 0.0), 6.0)
    elif kind is ActivationKind.SELU:
        out = SELU_LAMBDA * np.where(arr > 0.0, arr, SELU_ALPHA * np.expm1(arr))
    elif kind is ActivationKind.TANH:
        out = np.tanh(arr)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return float(out) if scalar else out


def activation_deriv(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """Elementwise derivative at the pre-activation input ``x``."""
    arr = np.asarray(x, dtype=np.float64)
    if kind is ActivationKind.RELU6:
        return ((arr > 0.0) & (arr < 6.0)).astype(np.float64)
    if kind is ActivationKind.SELU:
        return SELU_LAMBDA * np.where(arr > 0.0, 1.0, SELU_ALPHA * np.exp(arr))
    if kind is ActivationKind.TANH:
        t = np.tanh(arr)
        return 1.0 - t * t
    raise ValueError(f"no elementwise derivative for {kind!r}")


class Node:
    """One value in the recorded computation graph."""

    __slots__ = ("value", "parents", "backprop", "grad")

    def __init__(
        self,
        value,
        parents: tuple["Node", ...] = (),
        backprop: Callable | None = None,
    ) -> None:
        self.value = value
        self.parents = parents
        self.backprop = backprop
        self.grad = None

    def accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return order


def backward(root: Node) -> None:
    """Propagate d(root)/d(leaf) into every leaf's gradient sink.

    ``root`` must be scalar-valued.  Gradients accumulate: calling backward
    twice without clearing the store doubles the leaf gradients.
    """
    if not isinstance(root, Node):
        raise GraphError("backward requires a recorded forward pass (got no graph node)")
    value = np.asarray(root.value)
    if value.size != 1:
        raise GraphError(f"backward root must be scalar, got shape {value.shape}")
    order = _topo_order(root)
    for node in order:
        node.grad = None
    root.grad = 1.0
    for node in reversed(order):
        if node.backprop is not None and node.grad is not None:
            node.backprop(node.grad)


def leaf(store: ParamStore, name: str) -> Node:
    """Graph node for a stored parameter; backward adds into its accumulator."""
    sink = store.grad(name)

    def backprop(g):
        sink[...] += g

    return Node(store[name], (), backprop)


def constant(value) -> Node:
    return Node(np.asarray(value, dtype=np.float64))


def matmul(a: Node, b: Node) -> Node:
    out = Node(a.value @ b.value, (a, b))

    def backprop(g):
        a.accumulate(g @ b.value.T)
        b.accumulate(a.value.T @ g)

    out.backprop = backprop
    return out


def add_row(a: Node, row: Node) -> Node:
    """Broadcast-add a vector to every row of a matrix."""
    out = Node(a.value + row.value, (a, row))

    def backprop(g):
        a.accumulate(g)
        row.accumulate(g.sum(axis=0))

    out.backprop = backprop
    return out


def add(a: Node, b: Node) -> Node:
    """Elementwise add of two same-shape (or scalar) nodes."""
    out = Node(a.value + b.value, (a, b))

    def backprop(g):
        a.accumulate(g)
        b.accumulate(g)

    out.backprop = backprop
    return out


def apply_activation(kind: ActivationKind, a: Node) -> Node:
    out = Node(activation(kind, a.value), (a,))

    def backprop(g):
        a.accumulate(g * activation_deriv(kind, a.value))

    out.backprop = backprop
    return out


def square(a: Node) -> Node:
    out = Node(a.value * a.value, (a,))

    def backprop(g):
        a.accumulate(2.0 * g * a.value)

    out.backprop = backprop
    return out


def total(a: Node) -> Node:
    """Sum all entries down to a scalar."""
    out = Node(float(np.sum(a.value)), (a,))

    def backprop(g):
        a.accumulate(g * np.ones_like(a.value))

    out.backprop = backprop
    return out


def scale(a: Node, c: float) -> Node:
    out = Node(a.value * c, (a,))

    def backprop(g):
        a.accumulate(g * c)

    out.backprop = backprop
    return out


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes of the shared representation network."""

    in_dim: int
    hidden: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= len(self.hidden) <= 2:
            raise ValueError("hidden layer count must be 1 or 2")

    @property
    def out_dim(self) -> int:
        return self.hidden[-1]

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.in_dim,) + self.hidden
        return [(dims[i], dims[i + 1]) for i in range(len(self.hidden))]


def init_mlp(store: ParamStore, spec: MlpSpec, rng: np.random.Generator) -> None:
    """Glorot-uniform weights, zero biases, under names ``mlp.<i>.W / .b``."""
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        store.add(f"mlp.{i}.W", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        store.add(f"mlp.{i}.b", np.zeros(fan_out))


def _check_input(x: np.ndarray, spec: MlpSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ShapeError(
            f"layer 0 expects inputs of dimension {spec.in_dim}, got {x.shape}"
        )
    return x


def mlp_forward(x: np.ndarray, store: ParamStore, spec: MlpSpec) -> np.ndarray:
    """Hidden representation for a batch (or single vector) of features."""
    single = np.asarray(x).ndim == 1
    h = _check_input(x, spec)
    for i in range(len(spec.hidden)):
        h = activation(ActivationKind.RELU6, h @ store[f"mlp.{i}.W"] + store[f"mlp.{i}.b"])
    return h[0] if single else h


def mlp_graph(x: np.ndarray, store: ParamStore, spec: MlpSpec) -> Node:
    """Tape version of :func:`mlp_forward` over a batch."""
    h = constant(_check_input(x, spec))
    for i in range(len(spec.hidden)):
        pre = add_row(matmul(h, leaf(store, f"mlp.{i}.W")), leaf(store, f"mlp.{i}.b"))
        h = apply_activation(ActivationKind.RELU6, pre)
    return h
