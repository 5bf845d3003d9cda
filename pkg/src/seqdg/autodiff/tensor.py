"""Tensor type and the reverse-mode graph walk.

A ``Tensor`` wraps an immutable numpy array.  Operations that involve at least
one tensor with ``requires_grad`` record their inputs and a closure computing
the vector-Jacobian product; :func:`backward` walks that graph once in reverse
topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractError

_DEFAULT_DTYPE = np.dtype(np.float64)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ContractError(f"unsupported precision {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def resolve_dtype(precision) -> np.dtype:
    """Map ``"f32"``/``"f64"``/``32``/``64`` or a numpy dtype to a float dtype."""
    aliases = {"f32": np.float32, "float32": np.float32, 32: np.float32,
               "f64": np.float64, "float64": np.float64, 64: np.float64}
    if isinstance(precision, (str, int)) and precision in aliases:
        return np.dtype(aliases[precision])
    dtype = np.dtype(precision)
    if dtype not in (np.float32, np.float64):
        raise ContractError(f"unsupported precision {precision!r}")
    return dtype


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(resolve_dtype(dtype), copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        arr.flags.writeable = False
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, params: Optional[Iterable["Tensor"]] = None) -> dict:
        return backward(self, params)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4, threshold=8)}, op={self.op}{flag})"

    # identity semantics: tensors are dict keys in gradient maps
    __hash__ = object.__hash__


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Wrap an op result; record a graph node only if some parent needs gradients."""
    out = Tensor.__new__(Tensor)
    data = np.asarray(data)
    data.flags.writeable = False
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _topological_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> dict:
    """Reverse-mode sweep from a scalar ``loss``.

    Returns a map from every requires-grad leaf reached (plus any tensor in
    ``params``, which gets zeros if disconnected) to its gradient.  Leaf
    ``.grad`` attributes are overwritten, not accumulated across calls.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict = {}
    leaves: dict = {}
    if loss.requires_grad:
        order = _topological_order(loss)
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node._backward is None:
                if g is not None:
                    leaves[node] = g
                continue
            if g is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                prev = grads.get(key)
                grads[key] = pg if prev is None else prev + pg
    result = {}
    for leaf, g in leaves.items():
        g = np.array(g, dtype=leaf.dtype, copy=True).reshape(leaf.shape)
        leaf.grad = g
        result[leaf] = g
    if params is not None:
        for p in params:
            if p not in result:
                p.grad = np.zeros_like(p.data)
                result[p] = p.grad
    return result
