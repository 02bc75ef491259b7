"""
Central finite-difference gradient checking.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .tensor import Tensor

STEP = 1e-3
MAGNITUDE_FLOOR = 1e-2


def relative_error(analytic: np.ndarray, numeric: np.ndarray,
                   floor: float = MAGNITUDE_FLOOR) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(fn: Callable[[], Tensor], tensor: Tensor,
                     indices: Optional[Sequence[Tuple[int, ...]]] = None,
                     step: float = STEP) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``tensor``."""
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    targets = indices if indices is not None else list(np.ndindex(*tensor.shape))
    for index in targets:
        original = tensor.data[index]
        tensor.data[index] = original + step
        plus = fn().item()
        tensor.data[index] = original - step
        minus = fn().item()
        tensor.data[index] = original
        grad[index] = (plus - minus) / (2 * step)
    return grad


def check_gradients(fn: Callable[[], Tensor],
                    inputs: List[Tensor],
                    samples: Optional[int] = None,
                    seed: int = 0,
                    step: float = STEP) -> Dict[str, float]:
    """Compare taped gradients with central differences.

    Inputs must be float64 leaf tensors with ``requires_grad`` set.

    Args:
        fn: closure recomputing the scalar loss from the inputs
        inputs: tensors to differentiate against
        samples: if given, number of random elements checked in total
        seed: seed for the random element choice
        step: finite-difference step

    Returns:
        Maximum relative error per input (keyed by name or position)
    """
    for t in inputs:
        t.zero_grad()
    fn().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    chosen: List[List[Tuple[int, ...]]] = [[] for _ in inputs]
    if samples is None:
        chosen = [list(np.ndindex(*t.shape)) for t in inputs]
    else:
        rng = np.random.default_rng(seed)
        sizes = np.array([t.size for t in inputs])
        for _ in range(samples):
            which = int(rng.choice(len(inputs), p=sizes / sizes.sum()))
            flat = int(rng.integers(inputs[which].size))
            chosen[which].append(np.unravel_index(flat, inputs[which].shape))

    report = {}
    for i, (t, idx) in enumerate(zip(inputs, chosen)):
        if not idx:
            continue
        numeric = numeric_gradient(fn, t, idx, step)
        errors = [relative_error(analytic[i][j], numeric[j]) for j in idx]
        report[t.name or str(i)] = float(np.max(errors))
    return report
