"""Parameter containers on top of the tensor engine."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from .tensor import Tensor, conv2d, matmul


class Module:
    """Anything holding named parameters, possibly nested in sub-modules."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Conv2d(Module):
    def __init__(
        self,
        cin: int,
        cout: int,
        ksize: int = 3,
        stride: int = 1,
        rng: Optional[np.random.Generator] = None,
        bias: bool = True,
        bias_init: float = 0.0,
        gain: float = 1.0,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = cin * ksize * ksize
        std = gain / np.sqrt(fan_in)
        self.weight = Tensor(rng.normal(0.0, std, size=(cout, cin, ksize, ksize)), requires_grad=True)
        self.bias = Tensor(np.full((1, cout, 1, 1), bias_init), requires_grad=True) if bias else None
        self._stride = stride
        self._padding = ksize // 2

    def __call__(self, x: Tensor) -> Tensor:
        y = conv2d(x, self.weight, self._stride, self._padding)
        return y + self.bias if self.bias is not None else y


class Dense(Module):
    def __init__(self, nin: int, nout: int, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(rng.normal(0.0, 1.0 / np.sqrt(nin), size=(nin, nout)), requires_grad=True)
        self.bias = Tensor(np.zeros((1, nout)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias
