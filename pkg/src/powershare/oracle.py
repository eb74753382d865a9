"""Brute-force references for the test suite.

Nothing here imports the modules it is used to check.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def exact_consensus(L, k: int, h: float, p_t: float, delta: float, t: float) -> np.ndarray:
    """Estimates at time ``t`` after the event, via a dense matrix exponential."""
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    A = -L.copy()
    A[k - 1, k - 1] -= h
    return (p_t + delta) + scipy.linalg.expm(A * t) @ np.full(n, -float(delta))


def direct_average(values) -> float:
    values = list(values)
    if not values:
        raise ValueError("empty input")
    return sum(values) / len(values)


def direct_sum_excluding(values, k: int) -> float:
    """Sum of ``values`` except the 1-based entry ``k``."""
    return sum(v for i, v in enumerate(values, start=1) if i != k)
