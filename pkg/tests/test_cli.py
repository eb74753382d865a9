import csv

import pytest

from powershare import cli, scenario

SCN = """\
agents 3
edge 1 2 2.0
edge 2 3 1.5
capacity 1 100
capacity 2 200
capacity 3 300
load 0 300
event 0.2 1 20
h 5
dt 0.01
t_end 0.5
"""


@pytest.fixture
def scn_file(tmp_path):
    p = tmp_path / "small.scn"
    p.write_text(SCN)
    return p


def test_simulate_writes_csv(scn_file, tmp_path):
    out = tmp_path / "out.csv"
    assert cli.main(["simulate", str(scn_file), "--out", str(out)]) == 0
    with out.open() as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 52
    assert rows[0][0] == "t"


def test_simulate_dumps(scn_file, tmp_path):
    out, msgs, ftd = tmp_path / "o.csv", tmp_path / "m.csv", tmp_path / "f.csv"
    rc = cli.main(["simulate", str(scn_file), "--out", str(out), "--dump-messages", str(msgs), "--dump-ft", str(ftd)])
    assert rc == 0
    with msgs.open() as fh:
        mrows = list(csv.DictReader(fh))
    edges = {("1", "2"), ("2", "1"), ("2", "3"), ("3", "2")}
    assert {(r["sender"], r["receiver"]) for r in mrows} == edges
    assert {r["kind"] for r in mrows} == {"estimate", "ft_value"}
    assert ";" in next(r["value"] for r in mrows if r["kind"] == "ft_value")
    with ftd.open() as fh:
        frows = list(csv.DictReader(fh))
    assert frows[0].keys() == {"step", "agent", "m", "gbar", "g"}
    assert int(frows[0]["step"]) == 20
    # with and without the message backend the telemetry is identical
    out2 = tmp_path / "o2.csv"
    cli.main(["simulate", str(scn_file), "--out", str(out2)])
    assert out.read_bytes() == out2.read_bytes()


def test_analyze(capsys):
    path = scenario.resources.files("powershare").joinpath("data", "paper_6dg.scn")
    assert cli.main(["analyze", str(path), "--theta", "0.3"]) == 0
    text = capsys.readouterr().out
    assert "# spectral" in text and "# delta_bound" in text and "# sweep" in text
    assert "2.08726522960777658e+02" in text
    assert "1,1.00000000000000000e+01,true,-1.1258" in text


def test_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("agents 2\nedge 1 2 x\n")
    assert cli.main(["simulate", str(bad)]) != 0
    assert "ScenarioError: line 2" in capsys.readouterr().err
    assert cli.main(["simulate", str(tmp_path / "missing.scn")]) != 0
    assert "OSError" in capsys.readouterr().err
    disc = tmp_path / "disc.scn"
    disc.write_text("agents 3\nedge 1 2 1\ncapacity 1 1\ncapacity 2 1\ncapacity 3 1\nload 0 1\nt_end 1\n")
    assert cli.main(["analyze", str(disc)]) != 0
    assert "disconnected graph" in capsys.readouterr().err
