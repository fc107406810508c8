import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from conftest import frozen_config
from dosetc.cli import main
from dosetc.config import case_study_config

DATA = Path(__file__).parent / "data"


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def write(tmp_path, cfg_dict, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg_dict, sort_keys=False))
    return p


def test_bounds_triples():
    r = invoke("bounds", "--triple", 10, 10, 0.1, "--triple", 5, 5, 0.1)
    assert r.exit_code == 0
    vals = [float(line.split()[-1]) for line in r.output.splitlines()[1:]]
    assert vals == pytest.approx([0.0818, 0.1636], abs=1e-4)
    assert invoke("bounds", "--triple", 1, 1, 1.5).exit_code == 2


def test_bounds_table():
    r = invoke("bounds", "--phi-miet", "override")
    assert r.exit_code == 0
    head, *rows = r.output.splitlines()
    assert head.split()[-1] == "beta_hat" and len(rows) == 4
    assert float(rows[0].split()[-1]) == pytest.approx(0.0621, abs=1e-4)


def test_check_exit_codes(tmp_path):
    ok = write(tmp_path, case_study_config("override").to_dict(), "ok.yaml")
    r = invoke("check", ok, "--out", tmp_path / "o1")
    assert r.exit_code == 0
    doc = json.loads((tmp_path / "o1" / "conditions.json").read_text())
    assert set(doc) == {"0", "1", "2", "3"}
    r = invoke("check", ok, "--phi-miet", "derived")
    assert r.exit_code == 1 and "C3    FAIL" in r.output
    d = case_study_config().to_dict()
    d["networks"][0]["lambda"] = 1.5
    assert invoke("check", write(tmp_path, d, "bad.yaml")).exit_code == 2
    d = case_study_config().to_dict()
    d["networks"][2]["tau_mad"] = 0.02
    r = invoke("check", write(tmp_path, d, "c1.yaml"))
    assert r.exit_code == 1 and "net 2 C1    FAIL" in r.output
    assert invoke("check", tmp_path / "missing.yaml").exit_code == 2


SCHEMA = ("t,j,event,net,U,tau_e_0,k_0,l_0,m_0,chi_0,tau_e_1,k_1,l_1,m_1,chi_1,"
          "x0,x1,x2,x3,x4")


def _frozen_cfg(tmp_path):
    cfg = frozen_config((2, 3), protocol="try-once-discard", nodes=[[1, 1], [2, 1]],
                        e0=[0.3, -0.4, 0.1, 0.2, -0.5], seed=11, horizon=0.1, sample_dt=0.02)
    return write(tmp_path, cfg.to_dict(), "frozen.yaml")


def test_trace_schema_golden(tmp_path):
    p = _frozen_cfg(tmp_path)
    r = invoke("run", p, "--out", tmp_path / "out")
    assert r.exit_code == 0, r.output
    text = (tmp_path / "out" / "trace.csv").read_text()
    assert text.splitlines()[0] == SCHEMA
    assert text == (DATA / "frozen_trace.csv").read_text()
    ev = (tmp_path / "out" / "events.csv").read_text().splitlines()
    assert ev[0] == "t,j,event,net,k,l,m,tau_delay,window_hit,U_pre,U_post"
    assert (tmp_path / "out" / "certificate.csv").read_text().startswith("t,j,U,mode\n")


def test_run_byte_identical(tmp_path):
    p = _frozen_cfg(tmp_path)
    for o in ("a", "b"):
        assert invoke("run", p, "--out", tmp_path / o).exit_code == 0
    for f in ("trace.csv", "events.csv", "chi.csv", "attacks.txt", "certificate.csv",
              "attack_intervals.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_run_without_attacks(tmp_path):
    d = case_study_config().to_dict()
    for n in d["networks"]:
        n["attack_rate"] = 1e-9
    d["sim"]["relax_attack_rate"] = True
    p = write(tmp_path, d)
    r = invoke("run", p, "--horizon", 0.05, "--seed", 0, "--out", tmp_path / "o")
    assert r.exit_code == 0
    rows = (tmp_path / "o" / "events.csv").read_text().splitlines()[1:]
    per = {}
    for row in rows:
        f = row.split(",")
        per.setdefault(f[3], []).append(f[2])
    assert per
    for seq in per.values():
        for a, b in zip(seq, seq[1:]):
            if a == "transmission":
                assert b == "update-success"
        assert "update-fail" not in seq


def test_run_attitude_short_with_warning(tmp_path):
    r = CliRunner().invoke(main, ["run", "--phi-miet", "derived", "--horizon", "0.2",
                                  "--out", str(tmp_path / "o")])
    assert r.exit_code == 0
    assert "warning: design conditions fail" in r.output
    assert sum(1 for _ in open(tmp_path / "o" / "events.csv")) > 1


def test_run_divergence_exit(tmp_path):
    d = {"networks": [{"phi_miet_mode": "override", "phi_miet0": 1.928, "phi_miet1": 0.6869}],
         "plant": {"kind": "decay", "n": 1, "rate": -50.0, "x0": [1.0]},
         "sim": {"bound": 10.0, "horizon": 1.0}}
    r = invoke("run", write(tmp_path, d), "--out", tmp_path / "o")
    assert r.exit_code == 3


def test_mc_single_matches_trace(tmp_path):
    p = _frozen_cfg(tmp_path)
    r = invoke("mc", p, "--count", 1, "--out", tmp_path / "mc")
    assert r.exit_code == 0
    summary = json.loads((tmp_path / "mc" / "summary.json").read_text())
    assert summary["count"] == 1
    invoke("run", p, "--out", tmp_path / "run")
    import csv
    with open(tmp_path / "run" / "certificate.csv") as fh:
        rows = list(csv.DictReader(fh))
    grid = summary["decay"]["grid"]
    # last certificate value at or before each grid time
    want = []
    for g in grid:
        want.append(float([r for r in rows if float(r["t"]) <= g + 1e-15][-1]["U"]))
    assert summary["decay"]["mean_U"] == want
    runs = (tmp_path / "mc" / "runs.csv").read_text().splitlines()
    assert len(runs) == 2 and runs[0].startswith("seed,")
    assert invoke("mc", p, "--count", 0).exit_code == 2
