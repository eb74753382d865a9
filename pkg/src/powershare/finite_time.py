"""Finite-time average consensus by Hankel rank detection.

Each agent ``i`` mixes two quantities with column-stochastic weights for
``2N + 1`` rounds: a numerator started at its own value and a denominator
started at one. From its own history alone it builds Hankel matrices of
successive differences, waits for the first rank-deficient one, and reads the
network average off the kernel ``beta``::

    C_a = [gbar(0..M)] . beta / [g(0..M)] . beta

The kernel must annihilate *both* difference sequences. On regular graphs the
denominator never moves (``g == 1``), its Hankel matrix is identically zero and
any vector lies in its kernel; accepting that kernel alone gives the agent's
own value instead of the average. The default ``rule="joint"`` therefore looks
for the first ``m`` at which the two Hankel matrices share a kernel, which is
the stacked ``2(m+1) x (m+1)`` matrix losing column rank. ``rule="either"``
keeps the first-matrix-to-go-defective reading for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from powershare._ordered import ordered_matvec
from powershare.errors import FiniteTimeError, GraphError
from powershare.graph import CommGraph, is_connected

RANK_EPS = 1e-11
NORMALIZE_EPS = 1e-10
DENOM_EPS = 1e-12


@dataclass(frozen=True)
class FtWeights:
    """Column-stochastic mixing matrix ``p_ij = 1 / (1 + |N_j^+|)``."""

    p: np.ndarray


@dataclass(frozen=True)
class FiniteTimeRun:
    gbar: np.ndarray  # (2N+2, N): row m holds every agent's numerator iterate
    g: np.ndarray  # (2N+2, N): denominator iterates
    M: dict[int, int]  # 0-based agent -> detected defect index
    beta: dict[int, np.ndarray]
    c_a: dict[int, float]


def build_ft_weights(g: CommGraph) -> FtWeights:
    if not is_connected(g):
        raise GraphError("graph not connected")
    adj = g.weights > 0
    p = np.zeros((g.n, g.n))
    for j in range(g.n):
        # undirected: out-neighbors of j are its neighbors
        share = 1.0 / (1 + int(adj[:, j].sum()))
        p[adj[:, j], j] = share
        p[j, j] = share
    p.setflags(write=False)
    return FtWeights(p)


def iterate(weights: FtWeights, gbar0, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Run ``steps`` mixing rounds; returns ``(gbar, g)`` with ``steps + 1`` rows."""
    gbar0 = np.asarray(gbar0, dtype=float)
    if not np.all(np.isfinite(gbar0)):
        raise ValueError("gbar0 must be finite")
    n = gbar0.size
    x = np.empty((steps + 1, n, 2))
    x[0, :, 0] = gbar0
    x[0, :, 1] = 1.0
    for m in range(steps):
        x[m + 1] = ordered_matvec(weights.p, x[m])
    return x[:, :, 0], x[:, :, 1]


def difference_vectors(seq, m: int) -> np.ndarray:
    """``[seq(t) - seq(t-1) for t = 1..2m+1]``."""
    seq = np.asarray(seq, dtype=float)
    if seq.size < 2 * m + 2:
        raise ValueError(f"need {2 * m + 2} iterates for m={m}, have {seq.size}")
    return np.diff(seq[: 2 * m + 2])


def hankel(diff) -> np.ndarray:
    diff = np.asarray(diff, dtype=float)
    if diff.size % 2 != 1:
        raise ValueError("Hankel input must have odd length 2m+1")
    size = (diff.size + 1) // 2
    idx = np.add.outer(np.arange(size), np.arange(size))
    return diff[idx]


def _kernel_with_unit_tail(mat: np.ndarray, eps: float) -> np.ndarray | None:
    """Minimum-norm kernel vector with last entry 1, or ``None`` if full column rank."""
    cols = mat.shape[1]
    scale = np.abs(mat).max() if mat.size else 0.0
    if scale == 0.0:
        basis = np.eye(cols)
    else:
        _, sv, vt = np.linalg.svd(mat)
        if sv[-1] > eps * sv[0]:
            return None
        basis = vt[sv <= eps * sv[0]]
    tail = basis[:, -1]
    if np.linalg.norm(tail) < NORMALIZE_EPS:
        raise FiniteTimeError("kernel normalization failed")
    return basis.T @ tail / (tail @ tail)


def _normalized(mat: np.ndarray) -> np.ndarray:
    scale = np.abs(mat).max()
    return mat / scale if scale > 0 else mat


def find_defect(gbar_seq, g_seq, eps: float = RANK_EPS, rule: str = "joint") -> tuple[int, np.ndarray]:
    """First ``m >= 1`` whose Hankel test fails, and the kernel ``beta`` (last entry 1)."""
    gbar_seq = np.asarray(gbar_seq, dtype=float)
    g_seq = np.asarray(g_seq, dtype=float)
    if gbar_seq.size != g_seq.size or gbar_seq.size < 4 or gbar_seq.size % 2:
        raise ValueError("sequences must have equal even length 2N+2")
    n = (gbar_seq.size - 2) // 2
    for m in range(1, n + 1):
        h_bar = hankel(difference_vectors(gbar_seq, m))
        h_g = hankel(difference_vectors(g_seq, m))
        if rule == "joint":
            beta = _kernel_with_unit_tail(np.vstack([_normalized(h_bar), _normalized(h_g)]), eps)
        elif rule == "either":
            beta = _kernel_with_unit_tail(h_bar, eps)
            if beta is None:
                beta = _kernel_with_unit_tail(h_g, eps)
        else:
            raise ValueError(f"unknown rule {rule!r}")
        if beta is not None:
            return m, beta
    raise FiniteTimeError("no defective Hankel within 2N+1 steps")


def finite_time_average(gbar_seq, g_seq, M: int, beta) -> float:
    gbar_seq = np.asarray(gbar_seq, dtype=float)
    g_seq = np.asarray(g_seq, dtype=float)
    beta = np.asarray(beta, dtype=float)
    num = gbar_seq[: M + 1] @ beta
    den = g_seq[: M + 1] @ beta
    if abs(den) < DENOM_EPS * np.linalg.norm(g_seq[: M + 1]):
        raise FiniteTimeError("degenerate kernel denominator")
    return float(num / den)


def agent_average(gbar_seq, g_seq, eps: float = RANK_EPS, rule: str = "joint") -> tuple[int, np.ndarray, float]:
    """Everything one agent computes from its own history: ``(M, beta, C_a)``."""
    M, beta = find_defect(gbar_seq, g_seq, eps, rule)
    return M, beta, finite_time_average(gbar_seq, g_seq, M, beta)


def run_finite_time(
    weights: FtWeights,
    gbar0,
    agents: Sequence[int] | None = None,
    eps: float = RANK_EPS,
    rule: str = "joint",
) -> FiniteTimeRun:
    """Full protocol: ``2N + 1`` rounds, then each listed agent (0-based) finishes locally."""
    gbar0 = np.asarray(gbar0, dtype=float)
    n = gbar0.size
    gbar, g = iterate(weights, gbar0, 2 * n + 1)
    Ms, betas, avgs = {}, {}, {}
    for i in range(n) if agents is None else agents:
        Ms[i], betas[i], avgs[i] = agent_average(gbar[:, i], g[:, i], eps, rule)
    return FiniteTimeRun(gbar=gbar, g=g, M=Ms, beta=betas, c_a=avgs)


def sum_excluding_k(c_a: float, n: int, p_k_max: float, s_k: float) -> float:
    """``sum_{i != k} P_i,max / s_i`` recovered by agent ``k`` from the average."""
    if not s_k > 0:
        raise ValueError("s_k must be positive")
    return n * c_a - p_k_max / s_k
