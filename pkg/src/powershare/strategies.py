"""Power command laws.

Agents other than ``k`` always command ``P_i = P_L * P_i,max / s_i`` from their
own estimate. The strategies differ only in what the informed agent ``k``
commands while the estimates are still converging. The per-agent functions
take exactly the information that agent holds; the vector functions assemble
a whole-network :class:`PowerCommand` from them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from powershare.errors import ConsensusError, NegativeCommandWarning

STRATEGIES = ("strategy1", "strategy2", "strategy3", "transient_match")


@dataclass(frozen=True)
class MicrogridModel:
    """Capacities before the event, load, and the pending change ``delta`` at agent ``k``.

    ``k`` is 1-based; ``None`` means no event has happened and every agent
    dispatches proportionally.
    """

    capacities: np.ndarray
    p_l: float
    k: int | None = None
    delta: float = 0.0

    def __post_init__(self):
        caps = np.array(self.capacities, dtype=float)
        if caps.ndim != 1 or caps.size == 0 or np.any(caps <= 0):
            raise ValueError("capacities must be positive")
        if self.k is not None and not 1 <= self.k <= caps.size:
            raise ValueError(f"agent index {self.k} out of range 1..{caps.size}")
        if not 0 <= self.p_l < caps.sum() + self.delta:
            raise ValueError("load exceeds capacity")
        caps.setflags(write=False)
        object.__setattr__(self, "capacities", caps)

    @property
    def n(self) -> int:
        return self.capacities.size

    @property
    def p_t(self) -> float:
        return float(self.capacities.sum())

    @property
    def p_tilde_t(self) -> float:
        return self.p_t + self.delta

    @property
    def new_capacity(self) -> float:
        """Capacity of agent ``k`` after the change."""
        return float(self.capacities[self.k - 1]) + self.delta


@dataclass(frozen=True)
class PowerCommand:
    p: np.ndarray
    p_o: float
    e: float

    @classmethod
    def from_powers(cls, p: np.ndarray, p_l: float) -> "PowerCommand":
        p_o = math.fsum(p)
        return cls(p=p, p_o=p_o, e=p_o - p_l)


@dataclass(frozen=True)
class TransientMatchState:
    p_k_max_prime: float


def share_ratio(p_l: float, p_t: float) -> float:
    if not p_t > 0:
        raise ValueError("total capacity must be positive")
    return p_l / p_t


def check_estimate(s_i: float, p_l: float, p_t: float) -> None:
    if not s_i > max(p_l, 1e-9 * p_t):
        raise ConsensusError(f"estimate below load: s={s_i!r}, P_L={p_l!r}")


# per-agent laws


def follower_command(p_l: float, s_i: float, capacity: float) -> float:
    return p_l * capacity / s_i


def strategy1_command(p_l: float, s_k: float, new_capacity: float) -> float:
    return p_l * new_capacity / s_k


def strategy2_command(p_l: float, p_tilde_t: float, new_capacity: float) -> float:
    return p_l * new_capacity / p_tilde_t


def strategy3_command(p_l: float, s_k: float, capacity: float, p_t: float) -> float:
    return p_l * (capacity + s_k - p_t) / s_k


def modulated_capacity(s_k: float, sum_excl_k: float) -> float:
    """Auxiliary capacity ``P'_k,max`` that makes total delivery equal the load."""
    return s_k * (1.0 - sum_excl_k)


def transient_match_command(p_l: float, s_k: float, p_k_max_prime: float) -> float:
    return p_l * p_k_max_prime / s_k


# network-wide assembly


def _followers(model: MicrogridModel, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (model.n,):
        raise ValueError(f"estimate vector must have {model.n} entries")
    p_t = model.p_t
    for s_i in s:
        check_estimate(s_i, model.p_l, p_t)
    return model.p_l * model.capacities / s


def _finish(p: np.ndarray, model: MicrogridModel) -> PowerCommand:
    if np.any(p < 0):
        warnings.warn(f"negative power command {p.min():.6g} kW", NegativeCommandWarning, stacklevel=3)
    return PowerCommand.from_powers(p, model.p_l)


def proportional(model: MicrogridModel, s) -> PowerCommand:
    return _finish(_followers(model, s), model)


def strategy1(model: MicrogridModel, s) -> PowerCommand:
    p = _followers(model, s)
    if model.k is not None:
        k = model.k - 1
        p[k] = strategy1_command(model.p_l, float(s[k]), model.new_capacity)
    return _finish(p, model)


def strategy2(model: MicrogridModel, s) -> PowerCommand:
    p = _followers(model, s)
    if model.k is not None:
        p[model.k - 1] = strategy2_command(model.p_l, model.p_tilde_t, model.new_capacity)
    return _finish(p, model)


def strategy3(model: MicrogridModel, s) -> PowerCommand:
    p = _followers(model, s)
    if model.k is not None:
        k = model.k - 1
        p[k] = strategy3_command(model.p_l, float(s[k]), float(model.capacities[k]), model.p_t)
    return _finish(p, model)


def transient_match(model: MicrogridModel, s, sum_excl_k: float) -> tuple[PowerCommand, TransientMatchState]:
    """Agent ``k`` modulates its capacity so that ``P_O == P_L`` at every instant.

    ``sum_excl_k`` must be ``sum_{i != k} P_i,max / s_i`` for the current ``s``,
    as recovered through finite-time average consensus.
    """
    if model.k is None:
        raise ValueError("transient match needs an informed agent")
    p = _followers(model, s)
    k = model.k - 1
    prime = modulated_capacity(float(s[k]), sum_excl_k)
    p[k] = transient_match_command(model.p_l, float(s[k]), prime)
    return _finish(p, model), TransientMatchState(prime)


def initial_error_oracle(strategy: str, model: MicrogridModel, h: float | None = None) -> tuple[float, float | None]:
    """``(E(t0), dE/dt(t0))`` right after the event, from the closed forms.

    The slope is known in closed form only for Strategy 3 (which needs the
    gain ``h``) and the transient match; ``None`` marks it unspecified.
    """
    if model.k is None:
        return 0.0, 0.0
    p_l, p_t, delta = model.p_l, model.p_t, model.delta
    p_k = float(model.capacities[model.k - 1])
    if strategy == "strategy1":
        return p_l * delta / p_t, None
    if strategy == "strategy2":
        return p_l * delta * (p_t - p_k) / (p_t * (p_t + delta)), None
    if strategy == "strategy3":
        if h is None:
            raise ValueError("strategy3 slope needs the consensus gain h")
        return 0.0, p_l * h * delta * (p_t - p_k) / p_t**2
    if strategy == "transient_match":
        return 0.0, 0.0
    raise ValueError(f"unknown strategy {strategy!r}")


def evaluate(strategy: str, model: MicrogridModel, s, sum_excl_k: float | None = None) -> PowerCommand:
    """Dispatch on the strategy selector used in scenario files."""
    if model.k is None:
        return proportional(model, s)
    if strategy == "strategy1":
        return strategy1(model, s)
    if strategy == "strategy2":
        return strategy2(model, s)
    if strategy == "strategy3":
        return strategy3(model, s)
    if strategy == "transient_match":
        if sum_excl_k is None:
            raise ValueError("transient_match needs sum_excl_k")
        return transient_match(model, s, sum_excl_k)[0]
    raise ValueError(f"unknown strategy {strategy!r}")
