"""
Dense tensors with taped reverse-mode differentiation.

Every op records its parents and a closure that pushes the output gradient
back into them; ``Tensor.backward`` replays the tape in reverse topological
order. Only first-order derivatives are supported.
"""

import contextlib
import threading
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import DimensionError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_state = threading.local()


def default_dtype() -> type:
    """Floating point type used for newly created tensors."""
    return getattr(_state, "dtype", np.float32)


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def precision(dtype: type) -> Iterator[None]:
    """Create tensors in ``dtype`` inside the block (fp64 for gradient checks)."""
    previous = default_dtype()
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """A numpy array with an optional gradient and a link into the tape."""

    def __init__(self,
                 data: ArrayLike,
                 requires_grad: bool = False,
                 name: Optional[str] = None,
                 dtype: Optional[type] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.ascontiguousarray(data, dtype=dtype or default_dtype())
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError("item() needs a single-element tensor",
                                 details={"shape": self.shape})
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def accumulate(self, grad: np.ndarray) -> None:
        """Add ``grad`` into this tensor's gradient buffer."""
        if grad.shape != self.data.shape:
            grad = np.reshape(grad, self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Back-propagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise DimensionError("backward() needs a scalar loss",
                                 details={"shape": self.shape})

        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # Operator sugar, resolved lazily to avoid an import cycle with ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other) if isinstance(other, Tensor) else ops.add_const(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other) if isinstance(other, Tensor) else ops.add_const(self, -other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other) if isinstance(other, Tensor) else ops.mul_const(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul_const(self, -1.0)

    __radd__ = __add__
    __rmul__ = __mul__


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap constants; tensors pass through untouched."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_result(data: np.ndarray,
                parents: Sequence[Tensor],
                backward: Callable[[np.ndarray], None]) -> Tensor:
    """Create an op output and hook it into the tape when any parent needs grads."""
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track, dtype=data.dtype)
    if track:
        out._parents = tuple(parents)
        out._backward = backward
    return out
