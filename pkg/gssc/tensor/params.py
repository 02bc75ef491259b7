"""
Named, seeded parameter collections.
"""

import hashlib
import logging
import zlib
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ConfigurationError, DimensionError
from .tensor import Tensor, default_dtype


class ParamSet:
    """Ordered mapping of stable names to trainable leaf tensors.

    Initial values depend only on the seed and the parameter's name, so two
    sets built with the same seed and the same layers are bit-identical no
    matter in which order sub-networks register their weights.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._params: Dict[str, Tensor] = {}
        self._buffers: Dict[str, np.ndarray] = {}
        self.logger = logging.getLogger(__name__)

    def _rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode("utf-8"))])

    def add(self,
            name: str,
            shape: Sequence[int],
            init: str = "he",
            fan_in: Optional[int] = None,
            value: Union[float, np.ndarray, None] = None) -> Tensor:
        """Register a parameter, or return the existing one with that name.

        Args:
            name: dotted parameter name
            shape: tensor shape
            init: "he", "normal", "zeros", "constant"
            fan_in: fan-in for "he"; defaults to the product of all but the first dim
            value: fill value for "constant"

        Returns:
            The registered leaf tensor
        """
        shape = tuple(int(s) for s in shape)
        if name in self._params:
            existing = self._params[name]
            if existing.shape != shape:
                raise DimensionError(f"parameter '{name}' re-registered with another shape",
                                     details={"existing": existing.shape, "requested": shape})
            return existing

        if init == "he":
            fan = fan_in if fan_in is not None else int(np.prod(shape[1:])) or 1
            data = self._rng(name).normal(0.0, np.sqrt(2.0 / fan), size=shape)
        elif init == "normal":
            data = self._rng(name).normal(0.0, 0.02, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "constant":
            data = np.broadcast_to(np.asarray(value, dtype=np.float64), shape).copy()
        else:
            raise ConfigurationError(f"unknown initializer '{init}'")

        tensor = Tensor(data, requires_grad=True, name=name, dtype=default_dtype())
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ConfigurationError(f"no parameter named '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def names(self) -> List[str]:
        return list(self._params)

    def scope(self, prefix: str) -> "ParamScope":
        return ParamScope(self, prefix)

    # Buffers hold frozen, non-trainable arrays such as fixed-point CDF tables.
    def set_buffer(self, name: str, array: np.ndarray) -> None:
        self._buffers[name] = np.ascontiguousarray(array)

    def buffer(self, name: str) -> Optional[np.ndarray]:
        return self._buffers.get(name)

    def buffers(self) -> Dict[str, np.ndarray]:
        return dict(self._buffers)

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        """Gradients by name; parameters the loss never touched report zeros."""
        return {
            name: t.grad if t.grad is not None else np.zeros_like(t.data)
            for name, t in self._params.items()
        }

    def num_parameters(self, prefix: str = "") -> int:
        return sum(t.size for n, t in self._params.items() if n.startswith(prefix))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        missing = [n for n in self._params if n not in state]
        unexpected = [n for n in state if n not in self._params]
        if strict and (missing or unexpected):
            raise ConfigurationError("parameter names do not match",
                                     details={"missing": missing, "unexpected": unexpected})
        for name, array in state.items():
            if name not in self._params:
                continue
            tensor = self._params[name]
            if tuple(array.shape) != tensor.shape:
                raise DimensionError(f"shape mismatch for '{name}'",
                                     details={"expected": tensor.shape, "got": array.shape})
            tensor.data = np.ascontiguousarray(array, dtype=tensor.dtype)
            tensor.zero_grad()

    def astype(self, dtype: type) -> None:
        """Convert every parameter in place (fp64 for gradient checks)."""
        for tensor in self._params.values():
            tensor.data = tensor.data.astype(dtype)
            tensor.zero_grad()

    def fingerprint(self) -> int:
        """64-bit hash over names, shapes, values and buffers."""
        digest = hashlib.sha256()
        for name in sorted(self._params):
            data = self._params[name].data.astype("<f4")
            digest.update(name.encode("utf-8"))
            digest.update(repr(data.shape).encode("ascii"))
            digest.update(data.tobytes())
        for name in sorted(self._buffers):
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(self._buffers[name]).tobytes())
        return int.from_bytes(digest.digest()[:8], "little")


class ParamScope:
    """A prefixed view of a ParamSet; two scopes with one prefix share weights."""

    def __init__(self, params: ParamSet, prefix: str):
        self.params = params
        self.prefix = prefix.rstrip(".")

    def _full(self, name: str) -> str:
        return f"{self.prefix}.{name}" if self.prefix else name

    def add(self, name: str, shape: Sequence[int], init: str = "he",
            fan_in: Optional[int] = None,
            value: Union[float, np.ndarray, None] = None) -> Tensor:
        return self.params.add(self._full(name), shape, init, fan_in, value)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[self._full(name)]

    def __contains__(self, name: str) -> bool:
        return self._full(name) in self.params

    def scope(self, prefix: str) -> "ParamScope":
        return ParamScope(self.params, self._full(prefix))

    def set_buffer(self, name: str, array: np.ndarray) -> None:
        self.params.set_buffer(self._full(name), array)

    def buffer(self, name: str) -> Optional[np.ndarray]:
        return self.params.buffer(self._full(name))
