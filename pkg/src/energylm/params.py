"""Flat named collection of trainable parameter tensors."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Parameters:
    """name -> Tensor(requires_grad=True), iterated in sorted-name order so
    reductions and checkpoints are deterministic."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, array) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return sorted(self._tensors)

    def items(self):
        for name in self.names():
            yield name, self._tensors[name]

    def merge(self, other: "Parameters", prefix: str = "") -> None:
        for name, t in other._tensors.items():
            key = prefix + name
            if key in self._tensors:
                raise ValueError(f"duplicate parameter name {key!r}")
            self._tensors[key] = t

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_arrays(self, arrays: dict) -> None:
        missing = set(self._tensors) - set(arrays)
        if missing:
            raise ValueError(f"missing parameter arrays: {sorted(missing)}")
        for name, t in self._tensors.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: {arr.shape} vs {t.data.shape}"
                )
            t.data = arr.copy()
