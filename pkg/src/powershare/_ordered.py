"""Matrix-vector products with a pinned summation order.

The centralized simulation and the message-passing agents must produce
bit-identical trajectories. Both accumulate ``sum_j M[i, j] * x[j]`` left to
right in ascending ``j``; zero entries contribute an exact ``+0.0`` so an agent
that skips non-neighbors reproduces the same floating-point result.
"""

import numpy as np


def ordered_matvec(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    acc = np.zeros(M.shape[0] if x.ndim == 1 else (M.shape[0],) + x.shape[1:])
    if x.ndim == 1:
        for j in range(M.shape[1]):
            acc += M[:, j] * x[j]
    else:
        for j in range(M.shape[1]):
            acc += M[:, j, None] * x[j]
    return acc


def ordered_dot(terms) -> float:
    """Scalar counterpart: ``terms`` is an iterable of ``(coef, value)`` in ascending index."""
    acc = 0.0
    for coef, value in terms:
        acc += coef * value
    return acc
