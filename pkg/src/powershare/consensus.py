"""Capacity-estimation consensus with a single informed agent.

Every agent holds an estimate ``s_i`` of the microgrid's total capacity. After
agent ``k`` sees its own capacity change by ``delta`` it pins itself to the new
total ``P_T + delta`` with gain ``h`` while all agents run Laplacian consensus::

    dS/dt = -(L + Delta) S + h d_k P~_T

The simulator integrates this with explicit Euler steps of size ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from powershare._ordered import ordered_matvec
from powershare.errors import ConsensusError, GraphError
from powershare.graph import graph_from_laplacian, is_connected


@dataclass(frozen=True)
class ConsensusState:
    """Estimates plus the informed agent's private target.

    ``k`` is 1-based, or ``None`` before any capacity event (plain consensus).
    ``last_update`` is the inf-norm of the most recent Euler increment; at
    initialization it holds the increment the first step will apply.
    """

    s: np.ndarray
    h: float
    k: int | None
    p_tilde_t: float
    dt: float
    w: int = 0
    last_update: float = 0.0


def system_matrix(L: np.ndarray, k: int | None, h: float) -> np.ndarray:
    M = -np.asarray(L, dtype=float)
    if k is not None:
        M[k - 1, k - 1] -= h
    return M


def input_vector(n: int, k: int | None, h: float, p_tilde_t: float) -> np.ndarray:
    b = np.zeros(n)
    if k is not None:
        b[k - 1] = h * p_tilde_t
    return b


def init_consensus(p_t: float, n: int, k: int, delta: float, h: float, dt: float) -> ConsensusState:
    if n < 2:
        raise ValueError("consensus needs at least 2 agents")
    if not h > 0:
        raise ValueError("h must be positive")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not 1 <= k <= n:
        raise ValueError(f"agent index {k} out of range 1..{n}")
    return ConsensusState(
        s=np.full(n, float(p_t)),
        h=float(h),
        k=k,
        p_tilde_t=float(p_t) + float(delta),
        dt=float(dt),
        last_update=abs(dt * h * delta),
    )


def retarget(state: ConsensusState, k: int, p_tilde_t: float) -> ConsensusState:
    """Start a new consensus from the current estimates with a new informed agent."""
    if not 1 <= k <= state.s.size:
        raise ValueError(f"agent index {k} out of range 1..{state.s.size}")
    pending = state.dt * state.h * abs(p_tilde_t - state.s[k - 1])
    return replace(state, k=k, p_tilde_t=float(p_tilde_t), last_update=max(state.last_update, pending))


def step(state: ConsensusState, L: np.ndarray) -> ConsensusState:
    """One explicit Euler step ``S + dt * (-(L + Delta) S + h d_k P~_T)``."""
    n = state.s.size
    if np.shape(L) != (n, n):
        raise ValueError(f"Laplacian shape {np.shape(L)} does not match {n} agents")
    M = system_matrix(L, state.k, state.h)
    b = input_vector(n, state.k, state.h, state.p_tilde_t)
    with np.errstate(over="ignore", invalid="ignore"):
        s_new = state.s + state.dt * (ordered_matvec(M, state.s) + b)
    if not np.all(np.isfinite(s_new)):
        raise ConsensusError(f"numerical divergence at step {state.w}")
    return replace(state, s=s_new, w=state.w + 1, last_update=float(np.abs(s_new - state.s).max()))


def has_converged(state: ConsensusState, eps_rel: float) -> bool:
    if not eps_rel > 0:
        raise ValueError("eps_rel must be positive")
    scale = eps_rel * abs(float(np.mean(state.s)))
    spread = float(state.s.max() - state.s.min())
    return spread <= scale and state.last_update <= scale


def max_stable_dt(L: np.ndarray, k: int | None, h: float) -> float:
    """Largest Euler step for which the iteration matrix is a contraction."""
    lam = np.linalg.eigvalsh(system_matrix(L, k, h))
    return 2.0 / abs(lam[0])


def check_step_size(L: np.ndarray, k: int | None, h: float, dt: float) -> None:
    limit = max_stable_dt(L, k, h)
    if not dt < limit:
        raise ConsensusError(f"dt={dt} violates forward-Euler stability limit {limit:.6g}")


def closed_form_solution(L, k: int, h: float, p_t: float, delta: float, t) -> np.ndarray:
    """Exact ``S(t) = P~_T 1 + exp(-(L + Delta) t) (-delta 1)`` by eigendecomposition.

    ``t`` may be a scalar (returns shape ``(n,)``) or a 1-D array (``(len(t), n)``).
    """
    L = np.asarray(L, dtype=float)
    if not is_connected(graph_from_laplacian(L)):
        raise GraphError("graph not connected")
    if not h > 0:
        raise ValueError("h must be positive")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    lam, V = np.linalg.eigh(system_matrix(L, k, h))
    n = L.shape[0]
    coeff = V.T @ np.full(n, -float(delta))
    decay = np.exp(np.multiply.outer(np.atleast_1d(t_arr), lam))
    y = (decay * coeff) @ V.T
    out = (p_t + delta) + y
    return out[0] if t_arr.ndim == 0 else out
