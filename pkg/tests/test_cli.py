import io
import math
import subprocess
import sys

import numpy as np
import pytest

from starkecho.cli import main
from starkecho.fit import FitModelParams, model_curve, on_time_scale
from starkecho.io import parse_records, read_records, read_trace_csv

ELECTRIC_SCAN = "scan.samples = 61\nscan.stop = 6\n"


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write(path, text):
    path.write_text(text)
    return str(path)


def test_scan_then_fit_gives_twice_the_shift(workdir, capsys):
    cfg = write(workdir / "b.cfg", ELECTRIC_SCAN)
    assert main(["scan", "--config", cfg, "--out", "b.csv", "--metrics", "b.metrics"]) == 0
    metrics = read_records("b.metrics", typed=True)[0]
    assert metrics["frequency"] == pytest.approx(1.0, rel=1e-2)
    assert main(["fit", "b.csv", "--out", "b.fit"]) == 0
    rec = read_records("b.fit", typed=True)[0]
    trace = read_trace_csv("b.csv")
    assert 2 * rec["delta_s"] * trace.phase_scale() == pytest.approx(1.0, rel=1e-2)
    assert rec["config_hash"] == trace.meta["config_hash"]
    assert len(rec["input_sha256"]) == 64


def test_flags_override_config(workdir):
    cfg = write(workdir / "b.cfg", ELECTRIC_SCAN + "ensemble.count = 3000\n")
    assert main(["scan", "--config", cfg, "--samples", "12", "--out", "s.csv"]) == 0
    assert len(read_trace_csv("s.csv").x) == 12


def test_simulate_writes_echo_dump(workdir, capsys):
    cfg = write(workdir / "s.cfg", "stark.t_on = 0.5\nensemble.count = 3000\n")
    assert main(["simulate", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "# peak_intensity.total" in out and out.splitlines()[-1].count(",") == 9


def test_validation_failure_gives_error_record(workdir, capsys):
    cfg = write(workdir / "bad.cfg", "sequence.tau = 2\n")
    assert main(["scan", "--config", cfg]) == 2
    err = parse_records(capsys.readouterr().err)[0]
    assert err["status"] == "error" and err["error"] == "ConfigError" and err["command"] == "scan"
    assert main(["fit", "missing.csv"]) == 2
    assert parse_records(capsys.readouterr().err)[0]["error"] == "FileNotFoundError"


def _synthetic_experiment(path, seed):
    truth = FitModelParams(A=1.0, delta_s=1.61, phi=0.2, W=0.55)
    t_on = np.linspace(0.1, 18.5, 93)  # us
    y = model_curve(t_on, on_time_scale(10.0, 0.317), truth)
    rng = np.random.default_rng(seed)
    y = y + rng.normal(0, 0.01, y.shape)
    order = rng.permutation(len(t_on))
    lines = ["# shots = 8", "# wait_time = 240 ms", "t_on [ns],area_parallel,area_perp"]
    lines += [f"{t_on[i] * 1e3:.6f},{y[i]:.9g},0" for i in order]
    return write(path, "\n".join(lines) + "\n")


def test_fit_on_ingested_synthetic_experiment(workdir):
    # a 1-sigma statement is a coverage claim, so check it over seeded repeats
    errors = []
    for seed in range(20):
        raw = _synthetic_experiment(workdir / f"raw{seed}.csv", seed)
        assert main(["ingest", raw, "--voltage", "10", "--thickness", "0.317", "--out", "norm.csv"]) == 0
        assert main(["fit", "norm.csv", "--fit-decay", "off", "--out", "norm.fit", "--direction", "C2"]) == 0
        rec = read_records("norm.fit", typed=True)[0]
        errors.append(abs(rec["delta_s"] - 1.61) / rec["delta_s.sigma"])
        assert rec["W"] == pytest.approx(0.55, abs=0.03)
    errors = np.array(errors)
    assert np.mean(errors <= 1.0) >= 0.5
    assert np.all(errors <= 3.0)


def test_table_command(workdir, capsys):
    for i, (d, b, ds) in enumerate([("D1", "lower", 1.61), ("D1", "upper", 2.12)]):
        write(workdir / f"r{i}.fit", f"direction = {d}\nbranch = {b}\ndelta_s = {ds}\ndelta_s.sigma = 0.01\n")
    assert main(["table", "r0.fit", "r1.fit"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1] == "D1,1.61,0.01,2.12,0.01,1.865,0.255"


def test_byte_identical_reruns_with_workers(workdir):
    cfg = write(workdir / "d.cfg", ELECTRIC_SCAN + "ensemble.count = 3000\nscan.noise = 0.01\nrun.seed = 7\n")
    main(["scan", "--config", cfg, "--out", "a.csv"])
    main(["scan", "--config", cfg, "--out", "b.csv", "--workers", "4"])
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()


def test_module_entry_point(workdir):
    res = subprocess.run([sys.executable, "-m", "starkecho", "scan", "--config", "nope.cfg"], capture_output=True, text=True)
    assert res.returncode == 2 and "status = error" in res.stderr
