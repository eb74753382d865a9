import dataclasses
import io
import warnings

import numpy as np
import pytest

from powershare import oracle, scenario, strategies as S
from powershare.errors import ConsensusError, DeltaBoundWarning, ScenarioError

SMALL = """\
agents 3
edge 1 2 2.0
edge 2 3 1.5
capacity 1 100
capacity 2 200
capacity 3 300
load 0 300
h 5
dt 0.01
t_end {t_end}
strategy {strategy}
eps_rel 1e-4
{extra}
"""


def small(t_end=2.0, strategy="transient_match", extra=""):
    return scenario.parse_scenario(SMALL.format(t_end=t_end, strategy=strategy, extra=extra))


def test_bundled_scenario(golden_scenario):
    sc = golden_scenario
    assert sc.p_t == 2400 and sc.load_at(0.0) == 1600 and sc.h == 10
    assert [(e.t, e.k, e.delta) for e in sc.events] == [(3, 1, 300), (9, 1, -600)]
    assert sc.dt == 1e-3 and sc.t_end == 18 and sc.strategy == "transient_match"
    assert sc.plant.mode == "ideal" and sc.plant.loss_fraction == 0


def test_defaults():
    sc = scenario.parse_scenario("agents 2\nedge 1 2 1\ncapacity 1 1\ncapacity 2 1\nload 0 1\nt_end 1\n")
    assert (sc.h, sc.dt, sc.eps_rel, sc.strategy) == (10.0, 1e-3, 1e-6, "transient_match")


def test_no_events_is_steady():
    recs = scenario.simulate(small())
    for rec in recs:
        np.testing.assert_array_equal(rec.p_cmd, [50, 100, 150])
        np.testing.assert_array_equal(rec.s, 600)
        assert np.isnan(rec.c_a)


@pytest.mark.parametrize(
    "text, msg",
    [
        ("agents 6\nevent 1 7 10\n", "bad index"),
        ("agents 2\nedge 1 2 1\ncapacity 1 1\ncapacity 2 1\nload 0 1\nt_end 2\nevent 1 3 1\n", "line 7: bad index"),
        ("agents 3\nedge 1 2 1\ncapacity 1 1\ncapacity 2 1\ncapacity 3 1\nload 0 1\nt_end 1\n", "disconnected graph"),
        ("agents 2\nedge 1 2 1\ncapacity 1 1\ncapacity 2 1\nload 0 2\nt_end 1\n", "load exceeds capacity"),
        ("agents 2\nedge 1 2 1\ncapacity 1 1\ncapacity 2 1\nload 0 1\nload 1 3\nt_end 2\n", "load exceeds capacity"),
        ("agents 2\nedge 1 2 one\n", "line 2: weight must be a number"),
        ("agents 2\nfoo 3\n", "line 2: unknown directive"),
        ("agents 3\nedge 1 2 1\nedge 2 1 1\n", "line 3: duplicate edge"),
        ("agents 3\nedge 2 2 1\n", "line 2: self-loop"),
        ("agents 3\nedge 1 4 1\n", "line 2: bad index"),
        ("agents 2\nedge 1 2\n", "line 2: edge takes 3 arguments"),
        ("agents 2\nstrategy best\n", "line 2: unknown strategy"),
        ("agents 2\nplant first_order\n", "line 2: plant first_order needs tau"),
        ("agents 2\nedge 1 2 1\ncapacity 1 1\nload 0 1\nt_end 1\n", "missing capacity"),
    ],
)
def test_parse_errors(text, msg):
    with pytest.raises(ScenarioError, match=msg):
        scenario.parse_scenario(text)


def test_event_ordering_rules():
    with pytest.raises(ScenarioError, match="strictly increasing"):
        small(extra="event 1 1 10\nevent 1 2 10")
    with pytest.raises(ScenarioError, match="t_end must exceed"):
        small(t_end=1.0, extra="event 1 1 10")


@pytest.mark.filterwarnings("ignore::powershare.errors.DeltaBoundWarning")
def test_load_checked_against_capacity_in_force():
    # 700 kW is fine once agent 1 has gained 200 kW, not before
    recs = scenario.simulate(small(t_end=10, extra="event 1 1 200\nload 8 700"))
    assert recs[-1].p_l == 700 and max(abs(r.e) for r in recs) <= 1e-9 * 700
    with pytest.raises(ScenarioError, match="load exceeds capacity"):
        small(t_end=4, extra="event 1 3 -200\nload 0.5 450")


def test_event_before_convergence_rejected():
    sc = small(t_end=2.0, extra="event 0.5 1 20\nevent 0.6 2 20")
    with pytest.raises(ConsensusError, match="consensus in progress"):
        scenario.simulate(sc)


def test_bound_warning_emitted(golden_scenario):
    sc = dataclasses.replace(golden_scenario, t_end=3.5, events=golden_scenario.events[:1])
    with pytest.warns(DeltaBoundWarning):
        next(iter(scenario.run(dataclasses.replace(sc, events=(scenario.CapacityEvent(0.0, 1, 300.0),)))))


def test_unstable_step_rejected(golden_scenario):
    with pytest.raises(ConsensusError, match="stability"):
        next(iter(scenario.run(dataclasses.replace(golden_scenario, dt=0.06))))


@pytest.mark.parametrize("strategy", ["strategy1", "strategy2", "strategy3"])
def test_event_record_reflects_new_command(strategy):
    sc = small(t_end=1.0, strategy=strategy, extra="event 0.5 2 30")
    recs = scenario.simulate(sc)
    model = S.MicrogridModel(np.array([100.0, 200.0, 300.0]), 300.0, 2, 30.0)
    e0, _ = S.initial_error_oracle(strategy, model, h=5)
    assert recs[49].e == pytest.approx(0, abs=1e-12)
    assert recs[50].e == pytest.approx(e0, rel=1e-9, abs=1e-12)


def test_transient_match_small():
    recs = scenario.simulate(small(t_end=12.0, extra="event 0.5 3 -60"))
    assert max(abs(r.e) for r in recs) <= 1e-9 * 300
    assert recs[-1].p_cmd[2] == pytest.approx(300 * 240 / 540, rel=1e-3)
    assert all(np.isnan(r.c_a) for r in recs[:50]) and not np.isnan(recs[50].c_a)


def test_distributed_matches_central():
    sc = small(t_end=3.0, extra="event 0.5 3 -60\nload 1.5 250")
    a, b = io.StringIO(), io.StringIO()
    scenario.write_csv(scenario.run(sc), a)
    scenario.write_csv(scenario.run(sc, distributed=True), b)
    assert a.getvalue() == b.getvalue()


def test_load_change_leaves_estimates_alone():
    const = scenario.simulate(small(t_end=3.0, extra="event 0.5 3 -60"))
    varied = scenario.simulate(small(t_end=3.0, extra="event 0.5 3 -60\nload 0.8 200\nload 1.7 420"))
    for a, b in zip(const, varied):
        np.testing.assert_array_equal(a.s, b.s)
    assert max(abs(r.e) for r in varied) <= 1e-9 * 420
    assert varied[100].p_l == 200 and varied[200].p_l == 420


def test_plant_loss_in_telemetry():
    recs = scenario.simulate(small(extra="plant ideal 0.01"))
    assert recs[0].p_o == pytest.approx(297, rel=1e-14)
    assert recs[0].e == pytest.approx(-3, rel=1e-12)


def test_write_csv_shapes():
    buf = io.StringIO()
    assert scenario.write_csv([], buf, n=3) == 0
    assert buf.getvalue().count("\n") == 1
    assert buf.getvalue().startswith("t,s_1,s_2,s_3,p_cmd_1")
    buf = io.StringIO()
    rec = next(iter(scenario.run(small())))
    assert scenario.write_csv([rec], buf) == 1
    lines = buf.getvalue().splitlines()
    assert len(lines) == 2
    assert len(lines[0].split(",")) == len(lines[1].split(",")) == 1 + 3 * 3 + 3 + 3 + 1
    assert lines[1].split(",")[1] == "6.00000000000000000e+02"
    assert lines[1].endswith("nan")


def test_golden_row_count(golden_scenario, golden_records):
    assert len(golden_records) == round(golden_scenario.t_end / golden_scenario.dt) + 1


def test_golden_settling_follows_exact_dynamics(golden_scenario, golden_records, golden_laplacian):
    # the slowest mode of the golden graph limits how close s gets to the new total
    for t_after, t_abs, p_t, delta in ((5.0, 8.0, 2400.0, 300.0), (6.0, 15.0, 2700.0, -600.0)):
        exact = oracle.exact_consensus(golden_laplacian, 1, 10.0, p_t, delta, t_after)
        target = p_t + delta
        exact_dev = np.abs(exact - target).max() / target
        sim = golden_records[int(round(t_abs / golden_scenario.dt))].s
        sim_dev = np.abs(sim - target).max() / target
        assert sim_dev == pytest.approx(exact_dev, rel=0.05)
        assert exact_dev > 1e-4
