import hashlib
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from goe_fluct.cli import main
from goe_fluct.experiments import ExperimentConfig

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE = ROOT / "configs" / "bm_x2.json"
PINNED = {"SOURCE_DATE_EPOCH": "1700000000"}


def run(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env)


def small_config(tmp_path, **over):
    d = {"model": {"kind": "bm"}, "n": 5, "grid": [0.5, 1.0], "functions": ["x", "x^2"], "replicas": 10, "seed": 3}
    d.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p


def digests(folder):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(folder).iterdir())}


def test_simulate_writes_csv(tmp_path):
    cfg = small_config(tmp_path)
    r = run("simulate", cfg, "--out", tmp_path / "o")
    assert r.exit_code == 0, r.output
    ev = (tmp_path / "o" / "eigenvalues.csv").read_bytes()
    assert ev.startswith(b"replica,t,phi_1,phi_2,phi_3,phi_4,phi_5\n")
    assert b"\r" not in ev
    assert len(ev.splitlines()) == 1 + 10 * 2
    st = (tmp_path / "o" / "statistics.csv").read_text().splitlines()
    assert st[0] == "replica,x@t=0.5,x@t=1.0,x^2@t=0.5,x^2@t=1.0"
    # 17 significant digits round-trip exactly
    row = ev.splitlines()[1].split(b",")
    assert all(repr(float(v)) == repr(float(v.decode())) for v in row[2:])
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["outputs"]["eigenvalues.csv"] == hashlib.sha256(ev).hexdigest()


def test_simulate_missing_file(tmp_path):
    assert run("simulate", tmp_path / "nope.json").exit_code == 2


def test_simulate_malformed(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run("simulate", p).exit_code == 2


def test_simulate_degenerate_time(tmp_path):
    cfg = small_config(tmp_path, model={"kind": "fbm", "hurst": 0.7}, grid=[0.0, 1.0])
    r = run("simulate", cfg, "--out", tmp_path / "o")
    assert r.exit_code == 2
    assert "degenerate time t=0.0" in r.output


def test_covariance_values():
    r = run("covariance", "--f", "x", "--g", "x", "--model", "bm", "--s", 1, "--t", 1, "--json")
    assert r.exit_code == 0, r.output
    vals = json.loads(r.output)["values"]
    series = [v for v in vals if v["route"] == "series"]
    assert [v["value"] for v in series] == pytest.approx([2.0, 2.0], abs=1e-12)
    assert all(v["value"] is None for v in vals if v["route"] == "quadrature")

    r = run("covariance", "--f", "x", "--g", "x", "--model", "bm", "--s", 0.5, "--t", 1, "--json")
    vals = {(v["route"], v["variant"], v["normalization"]): v["value"] for v in json.loads(r.output)["values"]}
    assert vals["series", "r_corrected", "-"] == pytest.approx(1.0, abs=1e-12)
    assert vals["series", "paper_literal", "-"] == pytest.approx(2.0, abs=1e-12)
    assert vals["quadrature", "r_corrected", "proof_consistent"] == pytest.approx(1.0, abs=1e-6)
    assert vals["quadrature", "r_corrected", "theorem_stated"] == pytest.approx(2.0, abs=1e-6)


def test_covariance_table_output():
    r = run("covariance", "--f", "x^2", "--g", "sin", "--model", "fbm:0.7", "--s", 0.5, "--t", 1)
    assert r.exit_code == 0, r.output
    assert "series" in r.output and "quadrature" in r.output and "r_corrected" in r.output


def test_covariance_forced_quadrature_refuses():
    r = run("covariance", "--f", "x", "--g", "x", "--model", "bm", "--s", 1, "--t", 1, "--route", "quadrature")
    assert r.exit_code == 3
    assert "refused" in r.output


@pytest.mark.parametrize(
    "args",
    [
        ["--f", "exp", "--g", "x", "--model", "bm", "--s", "1", "--t", "1"],
        ["--f", "x", "--g", "x", "--model", "fbm:2", "--s", "1", "--t", "1"],
        ["--f", "x", "--g", "x", "--model", "bm", "--s", "-1", "--t", "1"],
        ["--f", "x", "--g", "x", "--model", "{bad", "--s", "1", "--t", "1"],
        ["--f", "x", "--g", "x", "--model", "bm", "--s", "1"],
    ],
)
def test_covariance_bad_arguments(args):
    assert run("covariance", *args).exit_code == 2


@pytest.mark.parametrize("suite", ["kernel", "derivatives", "quadrature", "ensemble"])
def test_verify_suites_pass(suite):
    r = run("verify", suite)
    assert r.exit_code == 0, r.output
    assert "FAIL" not in r.output
    assert r.output.count("PASS") >= 3


def test_verify_unknown_suite():
    assert run("verify", "bogus").exit_code == 2


def test_experiment_example_config(tmp_path):
    r = run("experiment", EXAMPLE, "--out", tmp_path / "o", env=PINNED)
    assert r.exit_code == 0, r.output
    assert "r_corrected" in r.output and "paper_literal" in r.output
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["replicas"] == 500 and len(rep["theory_vs_mc"]) == 10
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["config_text"] == EXAMPLE.read_text()
    again = ExperimentConfig.from_dict(json.loads(man["config_text"]))
    assert again.to_dict() == ExperimentConfig.from_dict(json.loads(EXAMPLE.read_text())).to_dict()
    assert "elapsed_seconds" not in man
    assert man["started"] == "2023-11-14T22:13:20+00:00"


def test_experiment_single_replica(tmp_path):
    assert run("experiment", small_config(tmp_path, replicas=1)).exit_code == 2


def test_experiment_bad_threads(tmp_path):
    r = run("experiment", small_config(tmp_path), "--out", tmp_path / "o", env={"GOE_FLUCT_THREADS": "0"})
    assert r.exit_code == 2


def test_experiment_with_convergence(tmp_path):
    cfg = small_config(tmp_path, replicas=150, grid=[1.0], functions=["x^2"], n_list=[3, 6, 12])
    r = run("experiment", cfg, "--out", tmp_path / "o")
    assert r.exit_code == 0, r.output
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert [row["n"] for row in rep["convergence"]["rows"]] == [3, 6, 12]


@pytest.mark.parametrize("command", ["simulate", "experiment"])
def test_outputs_byte_identical_across_threads(tmp_path, command):
    cfg = small_config(tmp_path, replicas=120)
    outs = []
    for i, threads in enumerate(("1", "3")):
        out = tmp_path / f"o{i}"
        r = run(command, cfg, "--out", out, env=dict(PINNED, GOE_FLUCT_THREADS=threads))
        assert r.exit_code == 0, r.output
        outs.append(digests(out))
    assert outs[0] == outs[1]
