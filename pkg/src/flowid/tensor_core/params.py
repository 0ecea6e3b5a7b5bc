"""Named trainable parameters and their initializers."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from ..rng import Rng
from .engine import Tensor


def glorot_uniform(shape: tuple[int, ...], rng: Rng, fan_in: int | None = None,
                   fan_out: int | None = None) -> np.ndarray:
    """Uniform in +/- sqrt(6/(fan_in+fan_out)); fans default to the 2-D dims."""
    if fan_in is None or fan_out is None:
        if len(shape) == 2:
            fan_in, fan_out = shape
        elif len(shape) == 3:  # conv kernels (C_out, C_in, k)
            fan_out = shape[0] * shape[2]
            fan_in = shape[1] * shape[2]
        else:
            fan_in = fan_out = int(np.prod(shape))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


class ParameterStore:
    """name -> trainable Tensor; every tensor carries a same-shape gradient."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def get(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ConfigError(f"unknown parameter: {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def set_trainable(self, prefix: str, trainable: bool) -> int:
        """Toggle updates for every parameter whose name starts with prefix."""
        hit = 0
        for name, t in self._params.items():
            if name.startswith(prefix):
                t.trainable = trainable
                hit += 1
        return hit

    def freeze(self, prefix: str) -> int:
        """Exclude matching parameters from both gradients and updates."""
        hit = 0
        for name, t in self._params.items():
            if name.startswith(prefix):
                t.trainable = False
                t.requires_grad = False
                hit += 1
        return hit

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for name, t in self._params.items():
            c = out.add(name, t.data.copy())
            c.grad[...] = t.grad
            c.trainable = t.trainable
            c.requires_grad = t.requires_grad
        return out

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        """Overwrite tensor data in place; shapes must match exactly."""
        for name, arr in values.items():
            t = self.get(name)
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(
                    f"parameter {name}: expected shape {t.data.shape}, got {arr.shape}"
                )
            t.data[...] = arr

    def total_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def grad_norms(self) -> dict[str, float]:
        return {n: float(np.linalg.norm(t.grad)) for n, t in self._params.items()}

    def value_norms(self) -> dict[str, float]:
        return {n: float(np.linalg.norm(t.data)) for n, t in self._params.items()}
