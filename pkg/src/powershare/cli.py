"""Command-line entry point: ``powershare simulate`` and ``powershare analyze``."""

from __future__ import annotations

import argparse
import contextlib
import sys
import warnings

import numpy as np

from powershare import scenario, spectral
from powershare.agents import RoundMessage
from powershare.errors import ConsensusError, FiniteTimeError, GraphError, ScenarioError
from powershare.graph import laplacian

DEFAULT_H_GRID = (0.1, 1.0, 10.0, 100.0)


def _fmt(x: float) -> str:
    return f"{x:.17e}"


@contextlib.contextmanager
def _open_sink(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _message_writer(fh):
    fh.write("round,sender,receiver,kind,value\n")

    def sink(msg: RoundMessage) -> None:
        value = ";".join(_fmt(v) for v in msg.value) if isinstance(msg.value, tuple) else _fmt(msg.value)
        fh.write(f"{msg.round},{msg.sender + 1},{msg.receiver + 1},{msg.kind},{value}\n")

    return sink


def _ft_writer(fh):
    fh.write("step,agent,m,gbar,g\n")

    def sink(w: int, gbar: np.ndarray, g: np.ndarray) -> None:
        for i in range(gbar.shape[1]):
            for m in range(gbar.shape[0]):
                fh.write(f"{w},{i + 1},{m},{_fmt(gbar[m, i])},{_fmt(g[m, i])}\n")

    return sink


def cmd_simulate(args) -> int:
    sc = scenario.load_scenario(args.scenario)
    with contextlib.ExitStack() as stack:
        out = stack.enter_context(_open_sink(args.out))
        msg_sink = ft_sink = None
        if args.dump_messages is not None:
            msg_sink = _message_writer(stack.enter_context(open(args.dump_messages, "w", encoding="utf-8")))
        if args.dump_ft is not None:
            ft_sink = _ft_writer(stack.enter_context(open(args.dump_ft, "w", encoding="utf-8")))
        records = scenario.run(sc, distributed=args.distributed, message_sink=msg_sink, ft_sink=ft_sink)
        scenario.write_csv(records, out, n=sc.n)
    return 0


def _informed_agents(sc: scenario.Scenario) -> list[int]:
    return sorted({ev.k for ev in sc.events}) or [1]


def cmd_analyze(args) -> int:
    sc = scenario.load_scenario(args.scenario)
    L = laplacian(sc.graph)
    p_t, p_l = sc.p_t, sc.load_profile[0][1]
    out = sys.stdout

    out.write("# spectral\n")
    out.write("k,h,hurwitz,dominant,weyl_lower," + ",".join(f"lambda_{i}" for i in range(1, sc.n + 1)) + "\n")
    weyl = spectral.weyl_lower_bound(L)
    for k in _informed_agents(sc):
        ok, report = spectral.verify_hurwitz(L, k, sc.h)
        row = [str(k), _fmt(sc.h), str(ok).lower(), _fmt(report.dominant), _fmt(weyl)]
        row += [_fmt(v) for v in report.eigenvalues]
        out.write(",".join(row) + "\n")

    out.write("# delta_bound\n")
    out.write("p_t,p_l,n,theta,delta_max\n")
    sup = spectral.sup_delta_bound(p_t, p_l, sc.n)
    out.write(f"{_fmt(p_t)},{_fmt(p_l)},{sc.n},sup,{_fmt(sup)}\n")
    if args.theta is not None:
        bound = spectral.delta_bound(p_t, p_l, sc.n, args.theta)
        out.write(f"{_fmt(p_t)},{_fmt(p_l)},{sc.n},{_fmt(bound.theta)},{_fmt(bound.delta_max)}\n")

    out.write("# sweep\n")
    out.write("k,h,dominant\n")
    grid = sorted(set(DEFAULT_H_GRID) | {sc.h})
    for k in _informed_agents(sc):
        for h, lam in zip(grid, spectral.dominant_eigenvalue_sweep(L, k, grid)):
            out.write(f"{k},{_fmt(h)},{_fmt(lam)}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="powershare", description="Distributed proportional power sharing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write telemetry CSV")
    sim.add_argument("scenario")
    sim.add_argument("--out", help="telemetry CSV path (default: stdout)")
    sim.add_argument(
        "--dump-messages",
        nargs="?",
        const="messages.csv",
        metavar="PATH",
        help="log every round message (forces the message-passing backend)",
    )
    sim.add_argument("--dump-ft", nargs="?", const="finite_time.csv", metavar="PATH", help="log gbar/g sequences")
    sim.add_argument("--distributed", action="store_true", help="run through the message-passing agents")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="spectral report, delta bound and gain sweep as CSV")
    ana.add_argument("scenario")
    ana.add_argument("--theta", type=float, help="also report the bound for this margin")
    ana.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.simplefilter("default")
    try:
        return args.func(args)
    except (ScenarioError, GraphError, ConsensusError, FiniteTimeError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"ValueError: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"OSError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
