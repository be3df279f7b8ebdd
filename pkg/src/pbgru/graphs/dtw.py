from __future__ import annotations

import numpy as np

from ..errors import DataError


def dtw_distance(x, y) -> float:
    """Dynamic time warping distance with |a - b| local cost.

    Full band, steps (match, insertion, deletion). The accumulated-cost matrix
    is filled one anti-diagonal at a time so each diagonal is a single numpy
    expression.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n, m = x.size, y.size
    if n == 0 or m == 0:
        raise DataError("dtw_distance needs two non-empty series")
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for s in range(2, n + m + 1):
        i = np.arange(max(1, s - m), min(n, s - 1) + 1)
        j = s - i
        best = np.minimum(np.minimum(acc[i - 1, j - 1], acc[i - 1, j]), acc[i, j - 1])
        acc[i, j] = np.abs(x[i - 1] - y[j - 1]) + best
    return float(acc[n, m])


def dtw_matrix(series: np.ndarray) -> np.ndarray:
    """Symmetric pairwise DTW distances between the rows of ``series``."""
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = dtw_distance(series[i], series[j])
    return out
