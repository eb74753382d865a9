"""Message-passing cyber layer.

Each agent only sees its own capacity, its own estimate, the weights of its
own links and whatever arrives in its inbox. Rounds are synchronous: every
agent posts its payload to its neighbors, then every agent updates from a
frozen inbox. Summation order matches :func:`powershare._ordered.ordered_matvec`,
so the consensus trajectory is bit-identical to the centralized Euler update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from powershare import finite_time, strategies
from powershare.errors import ConsensusError, GraphError
from powershare.graph import CommGraph, is_connected

CONSENSUS = "consensus"
FINITE_TIME = "finite_time"


class RoundMessage(NamedTuple):
    round: int
    sender: int  # 0-based
    receiver: int
    kind: str  # "estimate" or "ft_value"
    value: float | tuple[float, float]
    weight: float = 1.0  # sender's mixing share, finite-time only


@dataclass
class AgentState:
    id: int  # 0-based
    own_capacity: float
    estimate: float
    links: dict[int, float]  # neighbor -> a_ij, ascending
    inbox: list[RoundMessage] = field(default_factory=list)
    # private to the informed agent
    delta: float | None = None
    p_tilde_t: float | None = None
    prior_capacity: float | None = None
    prior_total: float | None = None
    # finite-time history of the current outer step
    ft_history: list[tuple[float, float]] = field(default_factory=list)
    c_a: float | None = None

    @property
    def informed(self) -> bool:
        return self.p_tilde_t is not None

    @property
    def degree(self) -> float:
        acc = 0.0
        for a in self.links.values():
            acc += a
        return acc

    @property
    def ft_share(self) -> float:
        return 1.0 / (1 + len(self.links))


MessageSink = Callable[[RoundMessage], None]


def make_agents(g: CommGraph, capacities, p_t: float) -> list[AgentState]:
    if g.n > 1 and not is_connected(g):
        raise GraphError("graph not connected")
    if g.n < 2:
        raise GraphError("graph not connected: a single agent has no neighbors")
    caps = np.asarray(capacities, dtype=float)
    return [
        AgentState(
            id=i,
            own_capacity=float(caps[i]),
            estimate=float(p_t),
            links={j: float(g.weights[i, j]) for j in g.neighbors(i)},
        )
        for i in range(g.n)
    ]


def _post(agents: list[AgentState], g: CommGraph, msg: RoundMessage, sink: MessageSink | None) -> None:
    if g.weights[msg.sender, msg.receiver] <= 0:
        raise GraphError(f"locality violation: {msg.sender + 1} -> {msg.receiver + 1}")
    agents[msg.receiver].inbox.append(msg)
    if sink is not None:
        sink(msg)


def run_round(
    agents: list[AgentState],
    g: CommGraph,
    phase: str,
    *,
    round_index: int = 0,
    h: float = 0.0,
    dt: float = 0.0,
    sink: MessageSink | None = None,
) -> list[AgentState]:
    """One synchronous round; updates ``agents`` in place and returns them.

    ``consensus`` advances every estimate by one Euler step of size ``dt``
    (the informed agent also pulls toward its private target with gain ``h``).
    ``finite_time`` appends one mixing iterate to every agent's history.
    """
    if len(agents) < 2:
        raise GraphError("graph not connected: a single agent has no neighbors")
    for agent in agents:
        agent.inbox = []
    for agent in agents:
        if phase == CONSENSUS:
            payload, weight = agent.estimate, 1.0
            kind = "estimate"
        elif phase == FINITE_TIME:
            payload, weight = agent.ft_history[-1], agent.ft_share
            kind = "ft_value"
        else:
            raise ValueError(f"unknown phase {phase!r}")
        for j in agent.links:
            _post(agents, g, RoundMessage(round_index, agent.id, j, kind, payload, weight), sink)

    if phase == CONSENSUS:
        updates = [_consensus_update(agent, h, dt) for agent in agents]
        for agent, s_new in zip(agents, updates):
            agent.estimate = s_new
    else:
        updates = [_mixing_update(agent) for agent in agents]
        for agent, pair in zip(agents, updates):
            agent.ft_history.append(pair)
    return agents


def _consensus_update(agent: AgentState, h: float, dt: float) -> float:
    own = -agent.degree
    if agent.informed:
        own -= h
    received = {m.sender: m.value for m in agent.inbox}
    acc = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in sorted([agent.id, *received]):
            acc += own * agent.estimate if j == agent.id else agent.links[j] * received[j]
        drive = h * agent.p_tilde_t if agent.informed else 0.0
        s_new = agent.estimate + dt * (acc + drive)
    if not math.isfinite(s_new):
        raise ConsensusError(f"numerical divergence at agent {agent.id + 1}")
    return s_new


def _mixing_update(agent: AgentState) -> tuple[float, float]:
    received = {m.sender: (m.weight, m.value) for m in agent.inbox}
    received[agent.id] = (agent.ft_share, agent.ft_history[-1])
    acc_bar = acc_g = 0.0
    for j in sorted(received):
        weight, (gbar, g) = received[j]
        acc_bar += weight * gbar
        acc_g += weight * g
    return acc_bar, acc_g


class CyberLayer:
    """All agents plus the round bookkeeping needed to run a scenario distributedly."""

    def __init__(self, g: CommGraph, capacities, p_t: float, h: float, dt: float, sink: MessageSink | None = None):
        self.graph = g
        self.agents = make_agents(g, capacities, p_t)
        self.h = h
        self.dt = dt
        self.sink = sink
        self.round = 0
        self.last_update = 0.0

    @property
    def n(self) -> int:
        return len(self.agents)

    def estimates(self) -> np.ndarray:
        return np.array([a.estimate for a in self.agents])

    def informed_agent(self) -> AgentState | None:
        return next((a for a in self.agents if a.informed), None)

    def consensus_round(self) -> None:
        before = self.estimates()
        run_round(self.agents, self.graph, CONSENSUS, round_index=self.round, h=self.h, dt=self.dt, sink=self.sink)
        self.round += 1
        self.last_update = float(np.abs(self.estimates() - before).max())

    def converged(self, eps_rel: float) -> bool:
        s = self.estimates()
        scale = eps_rel * abs(float(np.mean(s)))
        return float(s.max() - s.min()) <= scale and self.last_update <= scale

    def inject_capacity_event(self, k: int, delta: float, prior_total: float, eps_rel: float) -> None:
        """Agent ``k`` (1-based) learns its capacity changed by ``delta``.

        ``prior_total`` is the total capacity the network last agreed on.
        Estimates are left where the previous consensus put them.
        """
        if not 1 <= k <= self.n:
            raise ValueError(f"agent index {k} out of range 1..{self.n}")
        if not self.converged(eps_rel):
            raise ConsensusError("consensus in progress")
        for agent in self.agents:
            agent.delta = agent.p_tilde_t = agent.prior_capacity = agent.prior_total = None
        agent = self.agents[k - 1]
        agent.delta = float(delta)
        agent.prior_capacity = agent.own_capacity
        agent.prior_total = float(prior_total)
        agent.p_tilde_t = float(prior_total) + float(delta)
        agent.own_capacity = agent.prior_capacity + float(delta)
        self.last_update = max(self.last_update, self.dt * self.h * abs(agent.p_tilde_t - agent.estimate))

    def finite_time_average(self, eps: float = finite_time.RANK_EPS) -> float:
        """Run the 2N+1 mixing rounds; every agent finishes locally. Returns agent k's C_a."""
        for agent in self.agents:
            capacity = agent.prior_capacity if agent.informed else agent.own_capacity
            agent.ft_history = [(capacity / agent.estimate, 1.0)]
        for _ in range(2 * self.n + 1):
            run_round(self.agents, self.graph, FINITE_TIME, round_index=self.round, sink=self.sink)
            self.round += 1
        for agent in self.agents:
            hist = np.array(agent.ft_history)
            _, _, agent.c_a = finite_time.agent_average(hist[:, 0], hist[:, 1], eps)
        k_agent = self.informed_agent()
        return k_agent.c_a if k_agent is not None else self.agents[0].c_a

    def commands(self, strategy: str, p_l: float, p_t_floor: float) -> np.ndarray:
        """Each agent computes its own power command from local information."""
        p = np.empty(self.n)
        informed = self.informed_agent()
        for agent in self.agents:
            strategies.check_estimate(agent.estimate, p_l, p_t_floor)
            if agent is not informed:
                p[agent.id] = strategies.follower_command(p_l, agent.estimate, agent.own_capacity)
            elif strategy == "strategy1":
                p[agent.id] = strategies.strategy1_command(p_l, agent.estimate, agent.own_capacity)
            elif strategy == "strategy2":
                p[agent.id] = strategies.strategy2_command(p_l, agent.p_tilde_t, agent.own_capacity)
            elif strategy == "strategy3":
                p[agent.id] = strategies.strategy3_command(
                    p_l, agent.estimate, agent.prior_capacity, agent.prior_total
                )
            elif strategy == "transient_match":
                excl = finite_time.sum_excluding_k(agent.c_a, self.n, agent.prior_capacity, agent.estimate)
                prime = strategies.modulated_capacity(agent.estimate, excl)
                p[agent.id] = strategies.transient_match_command(p_l, agent.estimate, prime)
            else:
                raise ValueError(f"unknown strategy {strategy!r}")
        return p
