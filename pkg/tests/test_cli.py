import csv
import json

import pytest

from peel_lab import __version__
from peel_lab.cli import ConfigError, RunConfig, main, read_config_file, thread_cap


def run(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_thresholds_exact(capsys):
    code, out, _ = run(capsys, "thresholds", "--model", "2p:2", "--exact")
    assert code == 0
    assert "thresholds = 5/9 1/3 3/4" in out
    code, out, _ = run(capsys, "thresholds", "--model", "2p:4", "--exact")
    assert "thresholds = 5197/8085 11/21 21/32" in out


def test_thresholds_json_has_fraction_strings(capsys):
    code, out, _ = run(capsys, "thresholds", "--exact", "--out", "json")
    doc = json.loads(out)
    assert doc["result"]["site"] == "5/9"
    assert doc["provenance"]["version"] == __version__
    assert doc["provenance"]["config"]["exact"] is True


@pytest.mark.parametrize("model,line", [("2p:2", "thresholds = 5/9 1/3 3/4"),
                                        ("2p:3", "thresholds = 76/125 5/11 11/16")])
def test_verify_identities(capsys, model, line):
    code, out, _ = run(capsys, "verify", "--model", model, "--no-mc")
    assert code == 0, out
    assert line in out
    assert "FAIL" not in out


def test_verify_broken_tolerance(capsys, tmp_path):
    cfg = tmp_path / "broken.cfg"
    cfg.write_text("model = 2p:2\ntol = 0\nmc = false\n", encoding="utf-8")
    code, out, err = run(capsys, "verify", "--config", str(cfg))
    assert code == 1
    assert "first failing check: exposure = 2 gulp + 1" in err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nseed = 5\nreplicas = 7  # inline\nradius = 2,4\n", encoding="utf-8")
    values = read_config_file(str(cfg))
    c = RunConfig().update(values).update({"seed": 9}).validate()
    assert c.seed == 9 and c.replicas == 7 and c.radii() == [2, 4]


@pytest.mark.parametrize("args", [
    ("thresholds", "--model", "2p:x"),
    ("percolate", "--grid", "1:0:3"),
    ("percolate", "--kind", "plaquette"),
    ("thresholds", "--bogus"),
])
def test_configuration_errors_exit_2(capsys, args):
    code, _, _ = run(capsys, *args)
    assert code == 2


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = red\n", encoding="utf-8")
    assert run(capsys, "thresholds", "--config", str(cfg))[0] == 2
    cfg.write_text("no equals sign\n", encoding="utf-8")
    assert run(capsys, "thresholds", "--config", str(cfg))[0] == 2
    assert run(capsys, "thresholds", "--config", str(tmp_path / "missing.cfg"))[0] == 2


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("PEEL_LAB_THREADS", "2")
    assert thread_cap(RunConfig(threads=8)) == 2
    assert thread_cap(RunConfig()) == 2
    monkeypatch.setenv("PEEL_LAB_THREADS", "x")
    with pytest.raises(ConfigError):
        thread_cap(RunConfig())
    monkeypatch.delenv("PEEL_LAB_THREADS")
    assert thread_cap(RunConfig()) == 1


def read_rows(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_percolate_csv_schema_and_determinism(tmp_path, capsys):
    out = tmp_path / "perc.csv"
    args = ["percolate", "--radius", "2,3,4", "--replicas", "12", "--grid", "0.2:0.8:4",
            "--kind", "site,face", "--seed", "3", "--out", "csv", "-o", str(out)]
    assert run(capsys, *args)[0] == 0
    first = out.read_bytes()
    rows = read_rows(out)
    assert len(rows) == 2 * 4 * 3
    assert set(rows[0]) == {"kind", "p", "r", "one_arm", "ci_lo", "ci_hi"}
    assert len({(r["kind"], r["p"], r["r"]) for r in rows}) == len(rows)
    assert first.decode().startswith(f"# peel-lab {__version__}\n# config ")
    assert run(capsys, *args)[0] == 0
    assert out.read_bytes() == first


def test_parallel_replicas_match_serial(tmp_path, capsys, monkeypatch):
    base = ["simulate", "core", "--replicas", "40", "--seed", "2", "--out", "json"]
    _, serial, _ = run(capsys, *base)
    monkeypatch.setenv("PEEL_LAB_THREADS", "2")
    _, parallel, _ = run(capsys, *base, "--threads", "2")
    a, b = json.loads(serial), json.loads(parallel)
    assert a["result"]["replicas"] == b["result"]["replicas"]


def test_simulate_commands(capsys):
    code, out, _ = run(capsys, "simulate", "ball", "--radius", "2", "--replicas", "3",
                       "--export", "--out", "json")
    doc = json.loads(out)
    assert code == 0 and len(doc["result"]["replicas"]) == 3
    assert {"vertices", "edges", "faces", "holes", "root"} <= set(doc["result"]["replicas"][0]["map"])
    code, out, _ = run(capsys, "simulate", "halfplane", "--law", "hat", "--replicas", "5",
                       "--out", "csv")
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert code == 0 and rows[0] == "replica,k,exposure,gulp_left,gulp_right" and len(rows) == 6
    code, out, _ = run(capsys, "simulate", "halfplane", "--law", "tilde", "--radius", "2",
                       "--replicas", "2", "--out", "csv")
    assert code == 0


def test_weights_series_walks(capsys):
    code, out, _ = run(capsys, "weights", "--model", "2p:2", "--out", "json")
    doc = json.loads(out)
    assert code == 0 and doc["result"]["c"] == "8" and doc["result"]["W"][2] == "4"
    code, out, _ = run(capsys, "series", "--model", "2p:2", "--L", "20", "--simple", "--out", "csv")
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert code == 0 and lines[0] == "l,W,W_ratio,W_simple,W_simple_ratio" and len(lines) == 22
    code, out, _ = run(capsys, "walks", "--check", "--p-max", "20")
    assert code == 0 and "FAIL" not in out
    code, out, _ = run(capsys, "walks", "--check", "--p-max", "20", "--tol", "0")
    assert code == 1


def test_report_files(tmp_path, capsys):
    out = tmp_path / "rep"
    code, listing, _ = run(capsys, "report", "--no-mc", "--radius", "2,3,4", "--replicas", "8",
                           "--grid", "0.2:0.8:4", "-o", str(out))
    assert code == 0
    for name in ("checks.csv", "checks.json", "thresholds.json", "percolation.csv", "one_arm.png"):
        assert (out / name).exists()
    rows = read_rows(out / "checks.csv")
    assert set(rows[0]) == {"check", "target", "value", "tolerance", "pass"}
    assert json.loads((out / "thresholds.json").read_text())["result"]["site"] == "5/9"
    before = (out / "checks.csv").read_bytes(), (out / "percolation.csv").read_bytes()
    run(capsys, "report", "--no-mc", "--radius", "2,3,4", "--replicas", "8",
        "--grid", "0.2:0.8:4", "-o", str(out))
    assert before == ((out / "checks.csv").read_bytes(), (out / "percolation.csv").read_bytes())


def test_report_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "report", "--no-mc", "--replicas", "0", "-o", str(blocker / "sub"))
    assert code == 1 and str(blocker) in err
