"""Central finite-difference gradient checking."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import tensor as _t
from .tensor import Tensor

# Relative errors are measured against max(|analytic|, |numeric|, floor) so
# entries whose true gradient is ~0 are judged on absolute scale.
DEFAULT_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)
    worst_index: dict[str, tuple] = field(default_factory=dict)

    @property
    def failures(self) -> list[str]:
        return [k for k, e in self.max_rel_error.items() if not e <= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(
    function: Callable[[dict[str, Tensor]], Tensor],
    inputs: Mapping[str, np.ndarray],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    floor: float = DEFAULT_FLOOR,
) -> GradCheckReport:
    """Compare analytic gradients of a scalar function with central differences.

    ``function`` receives a dict of tensors (same keys as ``inputs``) and must
    return a scalar tensor.
    """
    base = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    leaves = {k: Tensor(v, requires_grad=True) for k, v in base.items()}
    function(leaves).backward()
    report = GradCheckReport(tolerance=tolerance)

    def evaluate(name: str, idx: tuple, delta: float) -> float:
        arr = base[name].copy()
        arr[idx] += delta
        args = {k: Tensor(arr if k == name else v) for k, v in base.items()}
        return function(args).item()

    for name, arr in base.items():
        analytic = leaves[name].grad
        if analytic is None:
            analytic = np.zeros_like(arr)
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            numeric[idx] = (evaluate(name, idx, step) - evaluate(name, idx, -step)) / (2 * step)
        if arr.size == 0:
            report.max_rel_error[name] = 0.0
            continue
        err = relative_error(analytic, numeric, floor)
        flat = int(np.argmax(err))
        report.max_rel_error[name] = float(err.reshape(-1)[flat])
        report.worst_index[name] = np.unravel_index(flat, arr.shape)
    return report


@contextmanager
def inject_wrong_gradient(op: str):
    """Flip the sign of one op's backward rule for the duration of the block."""
    _t._FAULTS.add(op)
    try:
        yield
    finally:
        _t._FAULTS.discard(op)
