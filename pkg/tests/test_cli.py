import json
import subprocess
import sys

import pytest

from peanolap.cli import main, read_config, UsageError


def run(*args, cwd=None):
    # python -m peanolap exercises __main__ as well
    return subprocess.run([sys.executable, "-m", "peanolap", *args], capture_output=True, text=True, cwd=cwd)


def rows(text):
    return [ln.split(",") for ln in text.splitlines() if not ln.startswith("#")]


def test_help():
    cp = run("--help")
    assert cp.returncode == 0
    for cmd in ("curve", "spectrum", "eigenfunction", "renorm", "gaps", "weyl", "verify"):
        assert cmd in cp.stdout


def test_curve_mc():
    cp = run("curve", "--fractal", "mc", "--level", "1")
    assert cp.returncode == 0, cp.stderr
    r = rows(cp.stdout)
    assert len(r) == 17
    assert {int(x[0]) for x in r[1:] if x[5] == "2"} == {2, 3, 7, 8, 11, 14}


def test_curve_counts():
    assert len(rows(run("curve", "--fractal", "sg", "--level", "0").stdout)) == 4
    assert len(rows(run("curve", "--fractal", "og", "--level", "2").stdout)) == 1025
    js = json.loads(run("curve", "--fractal", "triangle", "--curve-level", "1", "--format", "json").stdout)
    assert len(js) == 12


def test_spectrum_pg():
    cp = run("spectrum", "--fractal", "pg", "--level", "1", "--display")
    assert cp.returncode == 0, cp.stderr
    assert rows(cp.stdout)[2][:3] == ["2", "2", "28.6410"]


def test_spectrum_torus_and_count():
    r = rows(run("spectrum", "--fractal", "torus", "--level", "1", "--display").stdout)
    assert [x[2] for x in r[1:]] == ["0.0000"] + ["3.0000"] * 4 + ["6.0000"] * 4
    r = rows(run("spectrum", "--fractal", "torus", "--level", "2", "--count", "3").stdout)
    assert len(r) == 4


def test_spectrum_og_renorm():
    r = rows(run("spectrum", "--fractal", "og", "--level", "2", "--scheme", "renorm").stdout)
    # printed table value 1.662; see the acceptance suite for the factor discussion
    assert float(r[2][3]) == pytest.approx(1.662, abs=2.5e-3)


def test_out_writes_manifest_and_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.csv"
        cp = run("spectrum", "--fractal", "mc", "--level", "2", "--out", str(out), "--cache", str(tmp_path / "cache"))
        assert cp.returncode == 0, cp.stderr
        assert cp.stdout == ""
        outs.append(out.read_bytes())
        man = json.loads((tmp_path / f"{name}.manifest.json").read_text())
        assert man["fractal"] == "MC" and man["level"] == 2 and man["dimension"] == 46
    assert outs[0] == outs[1]
    assert len(list((tmp_path / "cache").glob("*.json"))) == 1


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nfractal = mc\nlevel = 1\ntol-rel = 1e-7\n")
    out = tmp_path / "s.csv"
    cp = run("spectrum", "--config", str(cfg), "--level", "2", "--out", str(out))
    assert cp.returncode == 0, cp.stderr
    man = json.loads((tmp_path / "s.manifest.json").read_text())
    assert man["level"] == 2 and man["relTol"] == 1e-7
    assert man["config"]["fractal"] == "MC"
    assert man["config"]["level"] == 2


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    with pytest.raises(UsageError):
        read_config(cfg)
    assert main(["spectrum", "--config", str(cfg)]) == 2


def test_eigenfunction(tmp_path):
    out = tmp_path / "u.csv"
    cp = run("eigenfunction", "--fractal", "og", "--level", "2", "--index", "9", "--out", str(out))
    assert cp.returncode == 0, cp.stderr
    assert out.read_text().splitlines()[0] == "k,t,class_id,value"
    report = json.loads((tmp_path / "u.symmetry.json").read_text())
    assert report["period"] == "1/16"
    assert report["multiplicity"] == 2


def test_eigenfunction_periods():
    cp = run("eigenfunction", "--fractal", "pg", "--level", "3", "--index", "11")
    assert json.loads(cp.stderr)["period"] == "1/5"
    cp = run("eigenfunction", "--fractal", "sg", "--level", "2", "--index", "1")
    vals = {float(r[3]) for r in rows(cp.stdout)[1:]}
    assert max(vals) - min(vals) < 1e-12


def test_renorm():
    cp = run("renorm")
    assert cp.returncode == 0
    assert cp.stdout.strip() == "b = 1.368858, r = 0.461072"


def test_gaps():
    cp = run("gaps", "--fractal", "og", "--level", "3", "--threshold", "1.15")
    assert cp.returncode == 0, cp.stderr
    got = {int(k): float(q) for k, q in rows(cp.stdout)[1:]}
    assert got[16] == pytest.approx(1.8350, abs=1e-4)


def test_weyl():
    cp = run("weyl", "--fractal", "pg", "--level", "2", "--format", "json")
    d = json.loads(cp.stdout)
    assert d["beta"] == pytest.approx(0.675, abs=5e-4)
    assert len(d["x"]) == len(d["rho"]) == len(d["weyl_ratio"])
    assert run("weyl", "--fractal", "torus", "--level", "1").returncode == 2


def test_verify_selection():
    cp = run("verify", "--select", "MC-level-1", "--format", "json")
    assert cp.returncode == 0
    assert len(json.loads(cp.stdout)) == 6
    assert run("verify", "--select", "nope").returncode == 2
    assert run("verify", "--select", "OG-gaps", "--strict").returncode == 3


def test_verify_all():
    cp = run("verify", "--all")
    assert cp.returncode == 0, cp.stdout[-2000:]
    assert cp.stdout.strip().endswith("0 failed")


def test_exit_codes():
    assert run("spectrum", "--fractal", "og", "--level", "9").returncode == 4
    assert run("spectrum", "--fractal", "koch", "--level", "1").returncode == 2
    assert run("spectrum", "--fractal", "og").returncode == 2
    assert run("spectrum", "--fractal", "mc", "--curve-level", "0").returncode == 2
    assert run("eigenfunction", "--fractal", "mc", "--level", "1", "--index", "99").returncode == 2
    assert run("bogus").returncode == 2


def test_threads_flag():
    cp = run("spectrum", "--fractal", "sg", "--level", "2", "--threads", "1", "--format", "json")
    assert cp.returncode == 0, cp.stderr
    assert json.loads(cp.stdout)["fractal"] == "SG"
