import csv
import json
import math
import subprocess
import sys

import pytest

from ahvortex.cli import RunConfig, counted_configuration, main, run_solve
from ahvortex.geometry import DomainSpec, parse_configuration


def _report(path):
    return json.loads((path / "report.json").read_text())


def _rows(path):
    with open(path / "aggregate.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_vacuum_torus_bundle(tmp_path):
    assert main(["solve", "--grid", "64", "--out", str(tmp_path / "r")]) == 0
    rep = _report(tmp_path / "r")
    assert abs(rep["chern_charge"]) < 1e-10 and abs(rep["thom_charge_total"]) < 1e-10
    assert abs(rep["total_energy"]) < 1e-10
    names = json.loads((tmp_path / "r/fields/index.json").read_text())["fields"]
    for name in names:
        assert (tmp_path / "r/fields" / f"{name}.csv").is_file()
    assert (tmp_path / "r/manifest.json").is_file()


def test_bradlow_exit_and_message(tmp_path, capsys):
    code = main(["solve", "--box", "5", "10", "--grid", "64", "--vortices", "v:1,1,8",
                 "--out", str(tmp_path / "r")])
    assert code == 2
    assert "7.96" in capsys.readouterr().err


def test_forced_violation_fails_in_c_bracket(tmp_path, capsys):
    code = main(["solve", "--box", "5", "10", "--grid", "64", "--vortices", "v:1,1,8", "--force",
                 "--out", str(tmp_path / "r")])
    assert code == 2
    err = capsys.readouterr().err
    assert "forced solve failed" in err and "bracket" in err


def test_malformed_configuration(tmp_path, capsys):
    assert main(["solve", "--vortices", "v 0.3", "--out", str(tmp_path / "r")]) == 1
    assert "malformed" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"grid": 64, "vortices": "v:1,1", "out": str(tmp_path / "a")}))
    assert main(["solve", "--config", str(cfg_file), "--grid", "128"]) == 0
    man = json.loads((tmp_path / "a/manifest.json").read_text())
    assert man["run_config"]["grid"] == [128, 128]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"gird": 64}))
    assert main(["solve", "--config", str(bad)]) == 1


def test_manifest_roundtrip_and_determinism(tmp_path):
    args = ["solve", "--domain", "plane", "--box", "20", "--grid", "128", "--vortices", "v:-2,0;a:2,0"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert main(["solve", "--config", str(tmp_path / "a/manifest.json"), "--out", str(tmp_path / "c")]) == 0
    first = (tmp_path / "a/report.json").read_bytes()
    assert first == (tmp_path / "b/report.json").read_bytes() == (tmp_path / "c/report.json").read_bytes()
    assert (tmp_path / "a/shells.csv").is_file()


def test_vortex_file_is_inlined_in_manifest(tmp_path):
    f = tmp_path / "conf.txt"
    f.write_text("v 1 1\na 4 4 2\n")
    assert main(["solve", "--grid", "64", "--vortices", str(f), "--out", str(tmp_path / "r")]) == 0
    man = json.loads((tmp_path / "r/manifest.json").read_text())
    assert parse_configuration(man["run_config"]["vortices"]) == parse_configuration(f.read_text())


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("AHVORTEX_OUTPUT_ROOT", str(tmp_path / "root"))
    assert run_solve(RunConfig(grid=(32, 32))) == 0
    assert len(list((tmp_path / "root").glob("run-*/report.json"))) == 1


def test_minus_branch_flips_charges(tmp_path):
    base = ["solve", "--grid", "128", "--vortices", "v:1,1;v:2,5;a:5,5"]
    assert main(base + ["--out", str(tmp_path / "p")]) == 0
    assert main(base + ["--branch", "minus", "--out", str(tmp_path / "m")]) == 0
    p, m = _report(tmp_path / "p"), _report(tmp_path / "m")
    assert m["chern_charge"] == -p["chern_charge"]
    assert m["thom_charge_total"] == pytest.approx(-p["thom_charge_total"], rel=1e-12)
    assert m["total_energy"] == p["total_energy"]


def test_grid_sweep_energy_error_decreases(tmp_path):
    code = main(["sweep", "--axis", "grid", "--values", "128,256,512", "--vortices", "v:1,1",
                 "--box", str(math.sqrt(50)), "--jobs", "2", "--out", str(tmp_path / "s")])
    assert code == 0
    errs = [float(r["energy_error"]) for r in _rows(tmp_path / "s")]
    assert errs[0] > errs[1] > errs[2]
    assert all((tmp_path / "s" / f"grid-{n}" / "report.json").is_file() for n in (128, 256, 512))


def test_m_sweep_decay_rates(tmp_path):
    code = main(["sweep", "--axis", "m", "--values", "1,2,4", "--domain", "plane", "--box", "40",
                 "--grid", "256", "--vortices", "v:0,0", "--out", str(tmp_path / "s")])
    assert code == 0
    rates = [float(r["decay_rate"]) for r in _rows(tmp_path / "s")]
    for got, want in zip(rates, (1.0, math.sqrt(2), 2.0)):
        assert got == pytest.approx(want, rel=0.1)


def test_sweep_failure_semantics(tmp_path):
    assert main(["sweep", "--axis", "grid", "--values", "", "--out", str(tmp_path / "e")]) == 1
    # all points infeasible: nonzero exit; one feasible point: success with failures recorded
    base = ["sweep", "--axis", "M", "--box", "5", "10", "--grid", "64"]
    assert main(base + ["--values", "8,9", "--out", str(tmp_path / "a")]) == 1
    assert main(base + ["--values", "1,8", "--out", str(tmp_path / "b")]) == 0
    codes = [int(r["exit_code"]) for r in _rows(tmp_path / "b")]
    assert codes == [0, 2]


def test_thermo_sweep_axis(tmp_path):
    assert main(["sweep", "--axis", "B", "--values", "0,0.5,2", "--box", "5", "10", "--grid", "32",
                 "--out", str(tmp_path / "t")]) == 0
    rows = _rows(tmp_path / "t")
    assert [float(r["value"]) for r in rows] == [0.0, 0.5, 2.0]
    assert all(r["log_Z"] for r in rows)


def test_counted_configuration_placement():
    for kind, L in (("torus", 7.0), ("plane", 40.0)):
        spec = DomainSpec(kind, (L, L), (32, 32))
        cfg = parse_configuration(counted_configuration(3, 2, spec)).reduced(spec)
        assert cfg.M == 3 and cfg.N == 2


def test_oracle_subcommand(tmp_path):
    assert main(["oracle-radial", "--out", str(tmp_path / "o")]) == 0
    header = (tmp_path / "o/profile.csv").read_text().splitlines()[0]
    assert header == "r,v,w,energy_density"
    summ = json.loads((tmp_path / "o/summary.json").read_text())
    assert summ["flux"] == pytest.approx(2 * math.pi, rel=1e-8)
    assert summ["decay_rate_fit"] == pytest.approx(1.0, rel=0.05)


def test_thermo_subcommand(tmp_path, capsys):
    assert main(["thermo", "--area", "50", "--kT", "1", "--B", "0.5", "--nmax", "20",
                 "--weights-csv", str(tmp_path / "w.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["regime"] == "subcritical" and (tmp_path / "w.csv").is_file()
    assert main(["thermo", "--area", "-1", "--kT", "1"]) == 1


def test_validate_subcommand(tmp_path, capsys):
    assert main(["validate-coupling", "--model", "m:3"]) == 0
    assert json.loads(capsys.readouterr().out)["plane_conditions"]["c2_equality"] is True
    bad = tmp_path / "bad.txt"
    bad.write_text("sf_log = expit(0.5 * t)\n")
    assert main(["validate-coupling", "--model", f"custom:{bad}"]) == 4
    assert main(["validate-coupling", "--model", "m:0"]) == 1


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "ahvortex.cli", "thermo", "--area", "50", "--kT", "2"],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["argmin_energy"] == [0, 0]
