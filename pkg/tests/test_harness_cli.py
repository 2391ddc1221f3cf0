from __future__ import annotations

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from levygql.cli import main
from levygql.harness import (
    ExperimentConfig,
    cell_rows,
    run_coverage,
    run_fieldscan,
    run_table1,
    shell_grid,
    write_outputs,
)


def small_config(**kw):
    base = dict(
        drivers=[{"kind": "nig", "delta": 10.0}], designs=[(5.0, 0.01)], replications=12, seed=11, fine_div=5,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def _strip(result):
    return [
        (c.driver, c.T, c.h, c.status.tolist(), c.estimates.tobytes(), c.converged, c.boundary, c.failed)
        for c in result.cells
    ]


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(replications=0)
    with pytest.raises(ValueError):
        ExperimentConfig(designs=[(1.0, 0.3)])
    with pytest.raises(ValueError):
        ExperimentConfig(study="plots")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"driver": {"kind": "wiener"}, "designs": [[10, 0.05]], "replications": 3}))
    cfg = ExperimentConfig.from_json(path)
    assert cfg.drivers == [{"kind": "wiener"}] and cfg.designs == [(10.0, 0.05)]


def test_bit_exact_rerun_and_accounting():
    cfg = small_config(designs=[(5.0, 0.01), (5.0, 0.05)])
    a, b = run_table1(cfg), run_table1(cfg)
    assert _strip(a) == _strip(b)
    for c in a.cells:
        assert c.converged + c.boundary + c.failed == c.M == 12
        good = c.estimates[c.mask]
        np.testing.assert_allclose(c.mean, good.mean(axis=0))


def test_worker_count_does_not_change_results():
    cfg1 = small_config(replications=8)
    cfg2 = small_config(replications=8, workers=2)
    assert _strip(run_table1(cfg1)) == _strip(run_table1(cfg2))


def test_common_random_numbers_across_cells():
    # replication k uses the same substream in every cell: the first k rows do not depend on M
    short = run_table1(small_config(replications=4)).cells[0]
    long = run_table1(small_config(replications=12)).cells[0]
    np.testing.assert_array_equal(short.estimates, long.estimates[:4])


def test_coverage_fields():
    res = run_coverage(small_config(designs=[(20.0, 0.01)], replications=6))
    c = res.cells[0]
    assert c.coverage.shape == (2,) and np.all((0 <= c.coverage) & (c.coverage <= 1))
    assert c.stud_cov.shape == (2, 2)
    np.testing.assert_allclose(c.stud_cov, c.stud_cov.T)


def test_outputs_and_manifest(tmp_path):
    res = run_table1(small_config(replications=3))
    rows = cell_rows(res)
    keys = list(rows[0].keys())
    assert keys[:6] == ["study", "model", "driver", "T", "h", "M"]
    csv_path, man_path = write_outputs(res, str(tmp_path / "run"))
    with open(csv_path) as fh:
        assert next(csv.reader(fh)) == keys
    man = json.loads(open(man_path).read())
    assert man["config"]["seed"] == 11 and "numpy" in man["versions"]
    assert set(man["timings"]) == {"total", "cells"}


def test_shell_grid_shapes():
    g = shell_grid(2, [0, 1, 2], 8)
    assert g.shape == (17, 2)
    np.testing.assert_allclose(np.linalg.norm(g[1:9], axis=1), 1.0)
    assert shell_grid(3, [1.0], 4).shape == (1 + 8, 3)


def test_fieldscan_anchor_and_monotone():
    cfg = small_config(designs=[(20.0, 0.01)], replications=10, study="fieldscan", radii=[0, 1, 2, 4, 8], angles=8)
    res = run_fieldscan(cfg)
    table = res.extra["fieldscan"]
    assert table[0]["r"] == 0 and table[0]["probability"] == 1.0
    probs = [row["probability"] for row in table]
    assert all(b <= a for a, b in zip(probs, probs[1:]))
    assert res.extra["replications_used"] == 10


@pytest.mark.slow
def test_fieldscan_tail_probability_at_radius_five():
    """Monte Carlo target: P[sup_{|u| >= 5} Z(u) >= e^-5] below 0.1 for delta = 10, T = 100."""
    cfg = ExperimentConfig(
        drivers=[{"kind": "nig", "delta": 10.0}], designs=[(100.0, 0.01)], replications=50, seed=0,
        study="fieldscan", radii=[0, 5], angles=16,
    )
    row = [r for r in run_fieldscan(cfg).extra["fieldscan"] if r["r"] == 5][0]
    assert row["probability"] < 0.1


# --- command line ----------------------------------------------------------


def test_cli_simulate_fit_roundtrip(tmp_path, capsys):
    data = tmp_path / "path.csv"
    assert main(["simulate", "--T", "20", "--h", "0.01", "--fine-div", "5", "--seed", "3", "--out", str(data)]) == 0
    report = tmp_path / "fit.json"
    trace = tmp_path / "trace.csv"
    assert main(["fit", "--data", str(data), "--out", str(report), "--trace", str(trace)]) == 0
    rep = json.loads(report.read_text())
    assert rep["converged"] and len(rep["theta_hat"]) == 2
    assert trace.read_text().splitlines()[0].startswith("phase")


def test_cli_mc_and_coverage_write_tables(tmp_path, capsys):
    out = tmp_path / "mc"
    args = ["--design", "5,0.01", "--M", "3", "--fine-div", "5", "--out", str(out)]
    assert main(["mc", *args]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header.startswith("study,model,driver,T,h,M,")
    assert (tmp_path / "mc.csv").exists() and (tmp_path / "mc.manifest.json").exists()
    assert main(["coverage", "--design", "20,0.01", "--M", "2", "--fine-div", "5"]) == 0


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"drivers": [{"kind": "wiener"}], "designs": [[5, 0.05]], "replications": 2, "fine_div": 5}))
    assert main(["mc", "--config", str(cfg)]) == 0
    assert "diffusion" in capsys.readouterr().out


def test_cli_fieldscan_limits_diagnose(tmp_path, capsys):
    assert main(["fieldscan", "--design", "5,0.01", "--M", "2", "--fine-div", "5", "--radii", "0,1,2", "--angles", "4"]) == 0
    assert capsys.readouterr().out.splitlines()[0].startswith("r,probability")
    lim = tmp_path / "lim.json"
    assert main(["limits", "--T-avg", "50", "--out", str(lim)]) == 0
    assert len(json.loads(lim.read_text())["sigma0"]) == 2
    assert main(["diagnose", "--driver", "nig:10"]) == 0
    diag = json.loads(capsys.readouterr().out)
    assert diag["ergodicity"]["drift_sign"]["status"] == "pass"


def test_cli_errors_give_nonzero_exit(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "missing.csv")]) != 0
    assert main(["simulate", "--T", "1", "--h", "0.3", "--out", str(tmp_path / "x.csv")]) != 0
    assert main(["mc", "--design", "1,0.3", "--M", "1"]) != 0
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_numpy_fallback_in_fresh_interpreter(tmp_path):
    code = (
        "from levygql import _kernels;"
        "from levygql.model import get_model;"
        "from levygql.levy import LevyDriver;"
        "from levygql.simulate import simulate_observations;"
        "m = get_model('nig-hyperbolic');"
        "o = simulate_observations(m, m.theta([1.0, 1.0]), LevyDriver('nig', delta=10.0), 2.0, 0.01, seed=1, fine_div=5);"
        "print(_kernels.backend(), repr(float(o.states[-1, 0])))"
    )
    outs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, LEVYGQL_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs[flag] = proc.stdout.split()
    assert outs["1"][0] == "numpy"
    assert float(outs["1"][1]) == pytest.approx(float(outs["0"][1]), rel=1e-12)
