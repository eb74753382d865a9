"""Spectral certificates for the perturbed-Laplacian consensus.

The consensus matrix is ``-(L + Delta)`` where ``Delta`` adds the gain ``h`` on
the diagonal entry of the informed agent ``k``. Everything here works on dense
symmetric matrices; agent indices ``k`` are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from powershare.errors import GraphError
from powershare.graph import graph_from_laplacian, is_connected

SYMMETRY_RTOL = 1e-9
HURWITZ_RTOL = 1e-12
ZERO_EIG_RTOL = 1e-9


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray  # ascending
    dominant: float  # largest eigenvalue


@dataclass(frozen=True)
class DeltaBound:
    """Admissible capacity change for a margin ``theta``.

    Any ``|delta| < delta_max`` keeps all estimates inside
    ``[(1 - theta) P_T, (1 + theta) P_T]`` for the whole transient.
    """

    theta: float
    delta_max: float


def _check_index(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"agent index {k} out of range 1..{n}")


def perturbed_system_matrix(L: np.ndarray, k: int, h: float) -> np.ndarray:
    """Return ``-(L + h e_k e_k^T)``."""
    if not h > 0:
        raise ValueError("h must be positive")
    L = np.asarray(L, dtype=float)
    _check_index(k, L.shape[0])
    M = -L
    M[k - 1, k - 1] -= h
    return M


def eigenvalues_sym(M: np.ndarray) -> SpectralReport:
    M = np.asarray(M, dtype=float)
    scale = np.abs(M).max() if M.size else 0.0
    if np.abs(M - M.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix not symmetric")
    lam = np.linalg.eigvalsh(M)
    return SpectralReport(eigenvalues=lam, dominant=float(lam[-1]))


def _require_connected(L: np.ndarray) -> None:
    if not is_connected(graph_from_laplacian(L)):
        raise GraphError("graph not connected")


def verify_hurwitz(L: np.ndarray, k: int, h: float) -> tuple[bool, SpectralReport]:
    """Check that every eigenvalue of ``-(L + Delta)`` is strictly negative.

    ``h = 0`` is accepted and always fails: ``-L`` keeps its zero eigenvalue.
    """
    L = np.asarray(L, dtype=float)
    _require_connected(L)
    if h < 0:
        raise ValueError("h must be nonnegative")
    _check_index(k, L.shape[0])
    M = -L.copy()
    M[k - 1, k - 1] -= h
    report = eigenvalues_sym(M)
    norm = np.abs(report.eigenvalues).max()
    return bool(report.dominant < -HURWITZ_RTOL * norm), report


def dominant_eigenvalue_sweep(L: np.ndarray, k: int, h_grid: Sequence[float]) -> np.ndarray:
    """Dominant eigenvalue of ``-(L + Delta(h))`` for each gain in ``h_grid``.

    Larger gains give more negative values, i.e. faster consensus.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    if h_grid.ndim != 1 or h_grid.size == 0:
        raise ValueError("h_grid must be a nonempty 1-D sequence")
    if np.any(h_grid <= 0):
        raise ValueError("h must be positive")
    if np.any(np.diff(h_grid) <= 0):
        raise ValueError("h_grid must be strictly ascending")
    L = np.asarray(L, dtype=float)
    _require_connected(L)
    return np.array([eigenvalues_sym(perturbed_system_matrix(L, k, h)).dominant for h in h_grid])


def weyl_lower_bound(L: np.ndarray) -> float:
    """Second-largest eigenvalue of ``-L``; lower bound on the dominant eigenvalue."""
    lam = np.linalg.eigvalsh(-np.asarray(L, dtype=float))
    return float(lam[-2])


def laplacian_zero_eigenvalues(L: np.ndarray) -> int:
    """Number of eigenvalues of ``L`` with ``|lambda| <= 1e-9 * ||L||_inf``."""
    L = np.asarray(L, dtype=float)
    lam = np.linalg.eigvalsh(L)
    tol = ZERO_EIG_RTOL * np.abs(L).sum(axis=1).max()
    return int(np.sum(np.abs(lam) <= tol))


def delta_bound(p_t: float, p_l: float, n: int, theta: float) -> DeltaBound:
    if p_l >= p_t:
        raise ValueError("load exceeds capacity")
    if not 0 < theta < 1 - p_l / p_t:
        raise ValueError("theta out of range")
    return DeltaBound(theta=theta, delta_max=theta * p_t / (1 + math.sqrt(n)))


def sup_delta_bound(p_t: float, p_l: float, n: int) -> float:
    """Supremum of ``delta_max`` over admissible ``theta`` (open bound, not attained)."""
    if p_l >= p_t:
        raise ValueError("load exceeds capacity")
    return (1 - p_l / p_t) * p_t / (1 + math.sqrt(n))


def transient_band(p_t: float, theta: float) -> tuple[float, float]:
    return (1 - theta) * p_t, (1 + theta) * p_t


def capacity_addition_threshold(p_t: float, n: int) -> float:
    """Smallest capacity of an added DG for which the admissible ``|delta|`` grows."""
    if n < 1 or p_t <= 0:
        raise ValueError("need n >= 1 and p_t > 0")
    return (math.sqrt(n + 1) - math.sqrt(n)) / (1 + math.sqrt(n)) * p_t


def addition_ratio(n: int) -> float:
    """Threshold of ``capacity_addition_threshold`` relative to the mean DG capacity."""
    if n < 1:
        raise ValueError("need n >= 1")
    # sqrt(n+1) - sqrt(n) rewritten to avoid cancellation at large n
    return n / ((math.sqrt(n + 1) + math.sqrt(n)) * (1 + math.sqrt(n)))
