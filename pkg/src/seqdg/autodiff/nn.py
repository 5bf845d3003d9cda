"""Minimal module system: parameter registration, train/eval mode, common layers."""
from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from . import functional as F
from ..errors import ContractError, ShapeError
from .tensor import Tensor


def parameter(data: np.ndarray, dtype, name: Optional[str] = None) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True, dtype=dtype, name=name)


class Module:
    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        """Yield ``(dotted_name, tensor)`` in attribute-definition order."""
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> dict:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        params = dict(self.named_parameters())
        if set(params) != set(state):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ContractError(f"state mismatch; missing={missing} unexpected={extra}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=p.dtype)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {p.shape}")
            arr = arr.copy()
            arr.flags.writeable = False
            p.data = arr

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype, bias: bool = True):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = parameter(rng.uniform(-bound, bound, (n_in, n_out)), dtype)
        self.bias = parameter(np.zeros(n_out), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, dtype,
                 stride: int = 1, padding: Optional[int] = None):
        bound = 1.0 / np.sqrt(c_in * kernel)
        self.weight = parameter(rng.uniform(-bound, bound, (kernel, c_in, c_out)), dtype)
        self.bias = parameter(np.zeros(c_out), dtype)
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, dtype,
                 stride: int = 1, padding: int = 0, output_padding: int = 0):
        bound = 1.0 / np.sqrt(c_in * kernel)
        self.weight = parameter(rng.uniform(-bound, bound, (kernel, c_out, c_in)), dtype)
        self.bias = parameter(np.zeros(c_out), dtype)
        self.stride, self.padding, self.output_padding = stride, padding, output_padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose1d(x, self.weight, self.bias, self.stride, self.padding, self.output_padding)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype, eps: float = 1e-5):
        self.gamma = parameter(np.ones(dim), dtype)
        self.beta = parameter(np.zeros(dim), dtype)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, self.eps)
