import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from twospeed.cli import main
from twospeed.config import load_config
from twospeed.potentials import ConfigurationError


@pytest.fixture(scope="module")
def ex24_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex24")
    assert main(["run", "--scenario", "ex24", "--lambda", "0.1,0.05,0.01", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def ex27_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex27")
    assert main(["run", "--scenario", "ex27", "--out", str(out)]) == 0
    return out


def _copy(src, dst):
    dst.mkdir()
    for f in src.rglob("*"):
        if f.is_file():
            target = dst / f.relative_to(src)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(f.read_bytes())
    return dst


def test_run_ex24_summary(ex24_run):
    s = json.loads((ex24_run / "summary.json").read_text())
    assert s["jump_time"] == pytest.approx(3.0, abs=0.05)
    assert s["mu_ri"] == pytest.approx(2.0, abs=0.02)
    assert s["mu_rd"] == pytest.approx(4.0, abs=0.04)
    for name in ("trajectory.csv", "jumps.json", "measures.csv", "certificates.json",
                 "summary.json", "config.ini", "manifest.json", "slow.csv"):
        assert (ex24_run / name).is_file()
    assert list((ex24_run / "plots").glob("*.svg"))


def test_run_ex27_jumps(ex27_run):
    j = json.loads((ex27_run / "jumps.json").read_text())["jumps"][0]
    assert [x["kind"] for x in j["segments"]] == ["transient", "slide"]
    assert j["transients"][0]["left_state"] == [0.0]
    assert j["transients"][0]["right_state"][0] == pytest.approx(0.25, abs=1e-3)
    assert j["slides"][0]["left_state"][0] == pytest.approx(0.25, abs=1e-3)
    assert j["slides"][0]["right_state"][0] == pytest.approx(1.0, abs=1e-3)
    assert j["slides"][0]["var"] == pytest.approx(0.75, abs=1e-3)


def test_json_sorted_keys(ex27_run):
    text = (ex27_run / "summary.json").read_text(encoding="utf-8")
    keys = list(json.loads(text))
    assert keys == sorted(keys)


def test_verify_fresh_run(ex24_run, capsys):
    assert main(["verify", str(ex24_run)]) == 0
    assert "verified" in capsys.readouterr().out


def test_verify_detects_tampered_energy(ex24_run, tmp_path, capsys):
    d = _copy(ex24_run, tmp_path / "run")
    path = d / "slow.csv"
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    col = rows[0].index("energy")
    rows[len(rows) // 2][col] = repr(float(rows[len(rows) // 2][col]) + 0.01)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\r\n").writerows(rows)
    assert main(["verify", str(d)]) == 2
    assert "energy_ledger" in capsys.readouterr().err


def test_verify_detects_truncation(ex27_run, tmp_path):
    d = _copy(ex27_run, tmp_path / "run")
    data = (d / "trajectory.csv").read_bytes()
    (d / "trajectory.csv").write_bytes(data[: len(data) // 2])
    assert main(["verify", str(d)]) == 4
    d2 = _copy(ex27_run, tmp_path / "run2")
    (d2 / "jumps.json").unlink()
    assert main(["verify", str(d2)]) == 4


def test_run_is_deterministic(ex27_run, tmp_path):
    out = tmp_path / "again"
    assert main(["run", "--scenario", "ex27", "--out", str(out)]) == 0
    a = sorted(p.relative_to(ex27_run) for p in ex27_run.rglob("*") if p.is_file())
    b = sorted(p.relative_to(out) for p in out.rglob("*") if p.is_file())
    assert a == b
    for rel in a:
        if rel.name != "config.ini":
            assert (ex27_run / rel).read_bytes() == (out / rel).read_bytes(), rel


def test_oracle_table(capsys):
    assert main(["oracle", "ex24", "--lambda", "1", "--samples", "11"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    h = rows[0]
    row = [r for r in rows[1:] if float(r[h.index("theta")]) == 0.5][0]
    assert float(row[h.index("u_jump")]) == pytest.approx(2 - 2 * np.exp(-1), abs=1e-15)
    assert row[h.index("u_jump")].startswith("1.2642")
    assert main(["oracle", "ex25"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert {r[-1] for r in rows[1:]} == {format(5 / 3, ".17g")}


def test_oracle_unknown_scenario():
    assert main(["oracle", "nope"]) == 1


def test_run_config_errors(tmp_path, capsys):
    assert main(["run", "--scenario", "ex24", "--lambda", "", "--out", str(tmp_path / "x")]) == 1
    assert "--lambda" in capsys.readouterr().err
    assert main(["run", "--scenario", "nope"]) == 1
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[problem]\nscenario = ex24\n[solver]\nlambdas =\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "y")]) == 1
    assert "solver.lambdas" in capsys.readouterr().err
    cfg.write_text("[solver]\nlambdas = 0.1\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "problem.density" in capsys.readouterr().err


def test_config_schema_paths():
    with pytest.raises(ConfigurationError, match="grid.n_nodes"):
        load_config("[problem]\nscenario = smoke1d\n[grid]\nn_nodes = 2.5\n", env={})
    with pytest.raises(ConfigurationError, match="two_speed.bogus"):
        load_config("[problem]\nscenario = ex24\n[two_speed]\nbogus = 1\n", env={})
    with pytest.raises(ConfigurationError, match="unknown section"):
        load_config("[extra]\nx = 1\n", env={})
    with pytest.raises(ConfigurationError, match="output.formats"):
        load_config("[problem]\nscenario = ex24\n[output]\nformats = pdf\n", env={})


def test_config_precedence():
    text = "[problem]\nscenario = ex24\n[solver]\nlambdas = 0.2, 0.1\n"
    assert load_config(text, env={}).two_speed.lambdas == (0.2, 0.1)
    env = {"TSRIS_SOLVER_LAMBDAS": "0.3", "TSRIS_TWO_SPEED_M_MAX": "4"}
    rc = load_config(text, env=env)
    assert rc.two_speed.lambdas == (0.3,) and rc.two_speed.m_max == 4
    rc = load_config(text, env=env, overrides={"lambdas": (0.05,)})
    assert rc.two_speed.lambdas == (0.05,)
    with pytest.raises(ConfigurationError):
        load_config(text, env={"TSRIS_NOPE_X": "1"})


def test_config_ini_round_trip():
    rc = load_config("[problem]\nscenario = smoke1d\n", env={})
    again = load_config(rc.to_ini(), env={})
    assert again.two_speed == rc.two_speed and again.directory == rc.directory
    assert again.to_ini() == rc.to_ini()
    assert again.build_problem().horizon == rc.build_problem().horizon


def test_list_scenarios_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "twospeed", "list-scenarios"],
                         capture_output=True, text=True, check=True)
    names = [line.split("\t")[0] for line in res.stdout.splitlines()]
    assert names == sorted(names) and {"ex24", "ex27", "smoke1d"} <= set(names)
