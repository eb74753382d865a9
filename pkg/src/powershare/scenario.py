"""Scenario files, the outer simulation loop and CSV telemetry.

Scenario format, one directive per line, ``#`` starts a comment::

    agents 6
    edge 1 2 6.0            # i j weight
    capacity 1 600          # agent kW
    load 0 1600             # breakpoint time, kW (piecewise constant)
    event 3 1 300           # time, agent, delta kW
    h 10
    dt 0.001
    t_end 18
    strategy transient_match
    plant ideal             # or: plant ideal 0.01 / plant first_order 0.05 0.01
    eps_rel 1e-4

Each outer step ``w`` (time ``w * dt``) applies any due capacity event,
computes the power commands from the current estimates, passes them through
the plant, emits a telemetry record, and advances the consensus one step.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import IO, Callable, Iterable, Iterator

import numpy as np

from powershare import consensus, finite_time, plant, spectral, strategies
from powershare.agents import CyberLayer, MessageSink
from powershare.errors import ConsensusError, DeltaBoundWarning, GraphError, ScenarioError
from powershare.graph import CommGraph, build_graph, is_connected, laplacian

DEFAULT_H = 10.0
DEFAULT_DT = 1e-3
DEFAULT_EPS_REL = 1e-6


@dataclass(frozen=True)
class CapacityEvent:
    t: float
    k: int  # 1-based
    delta: float


@dataclass(frozen=True)
class Scenario:
    graph: CommGraph
    capacities: np.ndarray
    load_profile: tuple[tuple[float, float], ...]
    events: tuple[CapacityEvent, ...]
    t_end: float
    h: float = DEFAULT_H
    dt: float = DEFAULT_DT
    strategy: str = "transient_match"
    plant: plant.PlantConfig = field(default_factory=plant.PlantConfig)
    eps_rel: float = DEFAULT_EPS_REL

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def p_t(self) -> float:
        return float(np.sum(self.capacities))

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def load_at(self, t: float) -> float:
        times = [bp[0] for bp in self.load_profile]
        return self.load_profile[bisect.bisect_right(times, t) - 1][1]


@dataclass(frozen=True)
class TelemetryRecord:
    t: float
    s: np.ndarray
    p_cmd: np.ndarray
    p_delivered: np.ndarray
    p_o: float
    p_l: float
    e: float
    r: np.ndarray
    c_a: float = math.nan


# parsing


def _number(tok: str, lineno: int, what: str) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise ScenarioError(f"line {lineno}: {what} must be a number, got {tok!r}") from None
    if not math.isfinite(value):
        raise ScenarioError(f"line {lineno}: {what} must be finite")
    return value


def _index(tok: str, lineno: int, n: int | None = None) -> int:
    try:
        i = int(tok)
    except ValueError:
        raise ScenarioError(f"line {lineno}: agent index must be an integer, got {tok!r}") from None
    if n is not None and not 1 <= i <= n:
        raise ScenarioError(f"line {lineno}: bad index {i} for {n} agents")
    return i


_ARITY = {
    "agents": (1, 1),
    "edge": (3, 3),
    "capacity": (2, 2),
    "load": (2, 2),
    "event": (3, 3),
    "h": (1, 1),
    "dt": (1, 1),
    "t_end": (1, 1),
    "strategy": (1, 1),
    "plant": (1, 3),
    "eps_rel": (1, 1),
}


def parse_scenario(text: str) -> Scenario:
    n = None
    edges, caps, loads, events = [], {}, [], []
    scalars: dict[str, float] = {}
    strategy = "transient_match"
    plant_cfg = plant.PlantConfig()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key not in _ARITY:
            raise ScenarioError(f"line {lineno}: unknown directive {key!r}")
        lo, hi = _ARITY[key]
        if not lo <= len(args) <= hi:
            raise ScenarioError(f"line {lineno}: {key} takes {lo if lo == hi else f'{lo}-{hi}'} arguments")
        if key == "agents":
            if n is not None:
                raise ScenarioError(f"line {lineno}: agents given twice")
            n = _index(args[0], lineno)
            if n < 2:
                raise ScenarioError(f"line {lineno}: need at least 2 agents")
        elif key == "edge":
            edges.append((lineno, _index(args[0], lineno, n), _index(args[1], lineno, n), _number(args[2], lineno, "weight")))
        elif key == "capacity":
            i = _index(args[0], lineno, n)
            if i in caps:
                raise ScenarioError(f"line {lineno}: capacity of agent {i} given twice")
            caps[i] = (lineno, _number(args[1], lineno, "capacity"))
        elif key == "load":
            loads.append((lineno, _number(args[0], lineno, "load time"), _number(args[1], lineno, "load")))
        elif key == "event":
            events.append(
                (lineno, _number(args[0], lineno, "event time"), _index(args[1], lineno, n), _number(args[2], lineno, "delta"))
            )
        elif key == "strategy":
            if args[0] not in strategies.STRATEGIES:
                raise ScenarioError(f"line {lineno}: unknown strategy {args[0]!r}")
            strategy = args[0]
        elif key == "plant":
            mode, rest = args[0], args[1:]
            try:
                if mode == "ideal":
                    if len(rest) > 1:
                        raise ValueError("plant ideal takes at most a loss fraction")
                    loss = _number(rest[0], lineno, "loss") if rest else 0.0
                    plant_cfg = plant.PlantConfig("ideal", None, loss)
                elif mode == "first_order":
                    if not rest:
                        raise ValueError("plant first_order needs tau")
                    tau = _number(rest[0], lineno, "tau")
                    loss = _number(rest[1], lineno, "loss") if len(rest) > 1 else 0.0
                    plant_cfg = plant.PlantConfig("first_order", tau, loss)
                else:
                    raise ValueError(f"unknown plant mode {mode!r}")
            except ValueError as exc:
                raise ScenarioError(f"line {lineno}: {exc}") from None
        else:
            scalars[key] = _number(args[0], lineno, key)

    if n is None:
        raise ScenarioError("missing 'agents' directive")
    seen = set()
    for lineno, i, j, w in edges:
        if not 1 <= i <= n or not 1 <= j <= n:
            raise ScenarioError(f"line {lineno}: bad index: edge ({i}, {j}) with {n} agents")
        if i == j:
            raise ScenarioError(f"line {lineno}: self-loop at agent {i}")
        if (min(i, j), max(i, j)) in seen:
            raise ScenarioError(f"line {lineno}: duplicate edge ({i}, {j})")
        if not w > 0:
            raise ScenarioError(f"line {lineno}: edge weight must be positive")
        seen.add((min(i, j), max(i, j)))
    try:
        graph = build_graph(n, [(i, j, w) for _, i, j, w in edges])
    except GraphError as exc:
        raise ScenarioError(f"graph: {exc}") from None
    if not is_connected(graph):
        raise ScenarioError("disconnected graph")

    for i, (lineno, value) in caps.items():
        if not 1 <= i <= n:
            raise ScenarioError(f"line {lineno}: bad index {i} for {n} agents")
        if value <= 0:
            raise ScenarioError(f"line {lineno}: capacity must be positive")
    missing = [i for i in range(1, n + 1) if i not in caps]
    if missing:
        raise ScenarioError(f"missing capacity for agents {missing}")
    capacities = np.array([caps[i][1] for i in range(1, n + 1)])

    if not loads:
        raise ScenarioError("missing 'load' directive")
    loads.sort(key=lambda x: x[1])
    if loads[0][1] != 0:
        raise ScenarioError(f"line {loads[0][0]}: first load breakpoint must be at t=0")
    for (_, t0, _), (lineno, t1, _) in zip(loads, loads[1:]):
        if t1 == t0:
            raise ScenarioError(f"line {lineno}: duplicate load breakpoint at t={t1}")
    for lineno, _, value in loads:
        if value < 0:
            raise ScenarioError(f"line {lineno}: load must be nonnegative")

    if "t_end" not in scalars:
        raise ScenarioError("missing 't_end' directive")
    h = scalars.get("h", DEFAULT_H)
    dt = scalars.get("dt", DEFAULT_DT)
    t_end = scalars["t_end"]
    eps_rel = scalars.get("eps_rel", DEFAULT_EPS_REL)
    if h <= 0:
        raise ScenarioError("h must be positive")
    if dt <= 0:
        raise ScenarioError("dt must be positive")
    if eps_rel <= 0:
        raise ScenarioError("eps_rel must be positive")

    parsed_events = []
    for lineno, t, k, delta in events:
        if not 1 <= k <= n:
            raise ScenarioError(f"line {lineno}: bad index: event agent {k} of {n}")
        if t < 0:
            raise ScenarioError(f"line {lineno}: event time must be nonnegative")
        parsed_events.append((lineno, CapacityEvent(t, k, delta)))
    for (_, prev), (lineno, ev) in zip(parsed_events, parsed_events[1:]):
        if not ev.t > prev.t:
            raise ScenarioError(f"line {lineno}: events must be strictly increasing in time")
    if parsed_events and not t_end > parsed_events[-1][1].t:
        raise ScenarioError("t_end must exceed the last event time")

    sc = Scenario(
        graph=graph,
        capacities=capacities,
        load_profile=tuple((t, v) for _, t, v in loads),
        events=tuple(ev for _, ev in parsed_events),
        t_end=t_end,
        h=h,
        dt=dt,
        strategy=strategy,
        plant=plant_cfg,
        eps_rel=eps_rel,
    )
    _check_capacity_timeline(sc)
    return sc


def _check_capacity_timeline(sc: Scenario) -> None:
    """Every load segment must stay below every total capacity in force during it."""
    caps = sc.capacities.astype(float).copy()
    totals = [(0.0, float(caps.sum()))]
    for ev in sc.events:
        caps[ev.k - 1] += ev.delta
        if caps[ev.k - 1] <= 0:
            raise ScenarioError(f"event at t={ev.t}: capacity of agent {ev.k} would become nonpositive")
        totals.append((ev.t, float(caps.sum())))
    bounds = [bp[0] for bp in sc.load_profile[1:]] + [math.inf]
    for (start, load), stop in zip(sc.load_profile, bounds):
        in_force = [tot for i, (t, tot) in enumerate(totals) if t < stop and (i + 1 == len(totals) or totals[i + 1][0] > start)]
        if any(load >= tot for tot in in_force):
            raise ScenarioError(f"load exceeds capacity: {load} kW from t={start}")


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def bundled_scenario_text(name: str = "paper_6dg.scn") -> str:
    return resources.files("powershare").joinpath("data", name).read_text(encoding="utf-8")


def bundled_scenario(name: str = "paper_6dg.scn") -> Scenario:
    return parse_scenario(bundled_scenario_text(name))


# simulation


class _CentralBackend:
    def __init__(self, sc: Scenario):
        self.L = laplacian(sc.graph)
        self.ft_weights = finite_time.build_ft_weights(sc.graph)
        self.state = consensus.ConsensusState(
            s=np.full(sc.n, sc.p_t), h=sc.h, k=None, p_tilde_t=sc.p_t, dt=sc.dt
        )
        self.last_ft: finite_time.FiniteTimeRun | None = None

    def estimates(self) -> np.ndarray:
        return self.state.s

    def inject(self, model: strategies.MicrogridModel, eps_rel: float) -> None:
        if not consensus.has_converged(self.state, eps_rel):
            raise ConsensusError("consensus in progress")
        self.state = consensus.retarget(self.state, model.k, model.p_tilde_t)

    def commands(self, strategy: str, model: strategies.MicrogridModel) -> tuple[strategies.PowerCommand, float]:
        s = self.state.s
        if strategy != "transient_match" or model.k is None:
            return strategies.evaluate(strategy, model, s), math.nan
        k = model.k - 1
        run = finite_time.run_finite_time(self.ft_weights, model.capacities / s, agents=[k])
        self.last_ft = run
        c_a = run.c_a[k]
        excl = finite_time.sum_excluding_k(c_a, model.n, float(model.capacities[k]), float(s[k]))
        cmd, _ = strategies.transient_match(model, s, excl)
        return cmd, c_a

    def advance(self) -> None:
        self.state = consensus.step(self.state, self.L)


class _DistributedBackend:
    def __init__(self, sc: Scenario, sink: MessageSink | None):
        self.layer = CyberLayer(sc.graph, sc.capacities, sc.p_t, sc.h, sc.dt, sink)
        self.last_ft = None

    def estimates(self) -> np.ndarray:
        return self.layer.estimates()

    def inject(self, model: strategies.MicrogridModel, eps_rel: float) -> None:
        self.layer.inject_capacity_event(model.k, model.delta, model.p_t, eps_rel)

    def commands(self, strategy: str, model: strategies.MicrogridModel) -> tuple[strategies.PowerCommand, float]:
        c_a = math.nan
        if strategy == "transient_match" and model.k is not None:
            c_a = self.layer.finite_time_average()
            hist = [np.array(a.ft_history) for a in self.layer.agents]
            self.last_ft = np.stack(hist, axis=1)
        p = self.layer.commands(strategy if model.k is not None else "proportional", model.p_l, model.p_t)
        return strategies._finish(p, model), c_a

    def advance(self) -> None:
        self.layer.consensus_round()


def _warn_if_outside_bound(model: strategies.MicrogridModel, t: float) -> None:
    bound = spectral.sup_delta_bound(model.p_t, model.p_l, model.n)
    if abs(model.delta) >= bound:
        warnings.warn(
            f"event at t={t}: |delta|={abs(model.delta):g} kW is not below the in-band bound "
            f"{bound:.6g} kW; estimates may leave the band and commands may exceed capacity",
            DeltaBoundWarning,
            stacklevel=3,
        )


FtSink = Callable[[int, np.ndarray, np.ndarray], None]


def run(
    sc: Scenario,
    *,
    distributed: bool = False,
    message_sink: MessageSink | None = None,
    ft_sink: FtSink | None = None,
) -> Iterator[TelemetryRecord]:
    """Simulate ``sc`` and yield one record per outer step ``w = 0 .. t_end/dt``.

    ``distributed=True`` runs every round through the message-passing agents
    (required for ``message_sink``); the centralized path is faster and
    produces an identical trajectory.
    """
    if message_sink is not None:
        distributed = True
    L = laplacian(sc.graph)
    for k in [None, *sorted({ev.k for ev in sc.events})]:
        consensus.check_step_size(L, k, sc.h, sc.dt)
    sc.plant.check_step(sc.dt)

    backend = _DistributedBackend(sc, message_sink) if distributed else _CentralBackend(sc)
    due = {int(round(ev.t / sc.dt)): ev for ev in sc.events}
    caps = np.array(sc.capacities, dtype=float)
    model = strategies.MicrogridModel(caps.copy(), sc.load_at(0.0))
    delivered = None

    for w in range(sc.steps + 1):
        t = w * sc.dt
        p_l = sc.load_at(t)
        if p_l != model.p_l:
            model = replace(model, p_l=p_l)
        ev = due.get(w)
        if ev is not None:
            model = strategies.MicrogridModel(caps.copy(), p_l, ev.k, ev.delta)
            _warn_if_outside_bound(model, t)
            try:
                backend.inject(model, sc.eps_rel)
            except ConsensusError as exc:
                raise ConsensusError(f"event at t={ev.t}: {exc}") from None
            caps[ev.k - 1] += ev.delta

        s = backend.estimates().copy()
        try:
            cmd, c_a = backend.commands(sc.strategy, model)
        except ConsensusError as exc:
            raise ConsensusError(f"step {w} (t={t:g}): {exc}") from None
        if ft_sink is not None and backend.last_ft is not None and not math.isnan(c_a):
            ft = backend.last_ft
            if isinstance(ft, finite_time.FiniteTimeRun):
                ft_sink(w, ft.gbar, ft.g)
            else:
                ft_sink(w, ft[:, :, 0], ft[:, :, 1])

        prev = delivered if delivered is not None else (1.0 - sc.plant.loss_fraction) * cmd.p
        delivered = plant.deliver(cmd, sc.plant, prev, sc.dt)
        p_o = math.fsum(delivered)
        record = TelemetryRecord(
            t=t,
            s=s,
            p_cmd=cmd.p,
            p_delivered=delivered,
            p_o=p_o,
            p_l=p_l,
            e=p_o - p_l,
            r=p_l / s,
            c_a=c_a,
        )
        if w < sc.steps:
            try:
                backend.advance()
            except ConsensusError as exc:
                raise ConsensusError(f"step {w}: {exc}") from None
        yield record


def simulate(sc: Scenario, **kwargs) -> list[TelemetryRecord]:
    return list(run(sc, **kwargs))


# telemetry output


def csv_header(n: int) -> list[str]:
    cols = ["t"]
    for name in ("s", "p_cmd", "p_del"):
        cols += [f"{name}_{i}" for i in range(1, n + 1)]
    cols += ["p_o", "p_l", "e"]
    cols += [f"r_{i}" for i in range(1, n + 1)]
    cols.append("c_a")
    return cols


def _fmt(x: float) -> str:
    return f"{x:.17e}"


def write_csv(records: Iterable[TelemetryRecord], sink: IO[str], n: int | None = None) -> int:
    """Write a header and one row per record; returns the number of data rows."""
    records = iter(records)
    first = next(records, None)
    if first is not None:
        n = first.s.size
    sink.write(",".join(csv_header(n or 0)) + "\n")
    if first is None:
        return 0
    rows = 0
    for rec in _chain(first, records):
        values = [rec.t, *rec.s, *rec.p_cmd, *rec.p_delivered, rec.p_o, rec.p_l, rec.e, *rec.r, rec.c_a]
        sink.write(",".join(_fmt(float(v)) for v in values) + "\n")
        rows += 1
    return rows


def _chain(first, rest):
    yield first
    yield from rest
