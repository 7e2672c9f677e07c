import csv
import json
import math
import re
from pathlib import Path

import numpy as np
import pytest

from pooledq import ProcessModel, ReplicationSet, RunPlan, normality_check, pooled_quantile, run_replications
from pooledq.cli import main
from pooledq.experiment import (
    BIAS_VARIANCE_COLUMNS,
    EXPERIMENT_COLUMNS,
    ExperimentConfig,
    Scenario,
    cmd_bias_variance_sweep,
    cmd_experiment,
    config_from_dict,
    load_config,
    read_replication_csv,
    summarize,
)
from pooledq.errors import ConfigError
from pooledq.verification import cmd_verify

GOLDEN = Path(__file__).parent / "golden"

SMALL = {
    "micro_reps": 5,
    "base_seed": 7,
    "scenarios": [
        {"name": "ar", "model": {"type": "ar1", "phi": 0.5}, "L": 50, "alphas": [0.5, 0.95], "R": [1, 2, 4]},
        {"name": "mm", "model": {"type": "mm1", "utilization": 0.7, "warmup": 100}, "L": 40, "alphas": [0.9],
         "R": [1, 3]},
    ],
}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def small_config(tmp_path, **over):
    d = dict(SMALL, output_dir=str(tmp_path), **over)
    return config_from_dict(d)


# ---- simulate -------------------------------------------------------------

def test_simulate_shape(tmp_path):
    assert main(["simulate", "--model", "ar1", "-L", "3", "-R", "2", "--seed", "1", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "paths.csv")
    assert rows[0] == ["replication", "index", "value"]
    assert len(rows) == 7
    assert [(r[0], r[1]) for r in rows[1:]] == [("0", "0"), ("0", "1"), ("0", "2"), ("1", "0"), ("1", "1"), ("1", "2")]


def test_simulate_round_trip(tmp_path):
    argv = ["simulate", "--model", "mm1", "--rho", "0.9", "--warmup", "500", "-L", "200", "-R", "5", "--seed", "3",
            "--out", str(tmp_path)]
    assert main(argv) == 0
    loaded = read_replication_csv(tmp_path / "paths.csv")
    mem = run_replications(RunPlan(ProcessModel.mm1(0.9, warmup=500), 5, 200, 3))
    np.testing.assert_array_equal(loaded.values, mem.values)
    for a in (0.5, 0.95):
        assert pooled_quantile(loaded, a).value == pooled_quantile(mem, a).value


def test_simulate_iid_output_is_normal(tmp_path):
    assert main(["simulate", "--model", "ar1", "--phi", "0", "-L", "10000", "-R", "1", "--out", str(tmp_path)]) == 0
    values = np.array([float(r[2]) for r in read_csv(tmp_path / "paths.csv")[1:]])
    assert values.size == 10**4
    assert normality_check(values).ks_distance <= 0.02


def test_simulate_17_significant_digits(tmp_path):
    main(["simulate", "--model", "ar1", "-L", "20", "-R", "1", "--out", str(tmp_path)])
    for r in read_csv(tmp_path / "paths.csv")[1:]:
        assert len(re.sub(r"[^0-9]", "", r[2].split("e")[0]).lstrip("0")) <= 17


def test_usage_errors(tmp_path, capsys):
    assert main(["simulate", "--model", "ar1", "-L", "3"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["simulate", "--model", "ar1", "--phi", "1.2", "-L", "3", "-R", "1", "--out", str(tmp_path)]) == 2
    assert "phi" in capsys.readouterr().err


def test_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--model", "ar1", "-L", "3", "-R", "1", "--out", str(blocker / "sub")]) == 3


# ---- config -----------------------------------------------------------------

def test_config_defaults_are_study_grid():
    cfg = config_from_dict({})
    assert cfg.micro_reps == 100
    assert len(cfg.scenarios) == 10
    assert {s.l for s in cfg.scenarios} == {1000, 10000}
    assert all(s.r_grid == (1, 2, 4, 8, 16, 32, 64) and s.alphas == (0.5, 0.95) for s in cfg.scenarios)


@pytest.mark.parametrize("patch,field", [
    ({"micro_reps": 0}, "micro_reps"),
    ({"base_seed": -1}, "base_seed"),
    ({"scenarios": [{"model": {"type": "ar1", "phi": 0.5}, "L": 10, "R": [4, 2]}]}, "scenarios[0].R"),
    ({"scenarios": [{"model": {"type": "ar1", "phi": 2.0}, "L": 10}]}, "scenarios[0].model"),
    ({"scenarios": [{"model": {"type": "gg1"}, "L": 10}]}, "scenarios[0].model.type"),
    ({"scenarios": [{"model": {"type": "mm1", "utilization": 0.5}, "L": 0}]}, "scenarios[0].L"),
    ({"scenarios": [{"model": {"type": "mm1", "utilization": 0.5}, "L": 5, "alphas": [1.0]}]}, "scenarios[0].alphas"),
])
def test_config_errors_name_field(patch, field):
    with pytest.raises(ConfigError) as info:
        config_from_dict(patch)
    assert info.value.field == field


def test_config_json_syntax_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "micro_reps": 5,\n  oops\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)
    assert main(["experiment", "--config", str(p), "--out", str(tmp_path)]) == 2


# ---- experiment -------------------------------------------------------------

def test_summarize_decomposition():
    est = np.array([1.0, 2.5, 0.5, 3.0])
    mse, bias, var = summarize(est, 1.2)
    assert mse == pytest.approx(bias**2 + var * 3 / 4, rel=1e-14)
    assert summarize(np.array([2.0]), 0.5) == (2.25, 1.5, 0.0)


def test_experiment_outputs(tmp_path):
    result = cmd_experiment(small_config(tmp_path))
    assert len(result.rows) == 3 * 2 * 2 + 2 * 1 * 2
    for name in ("ar", "mm"):
        rows = read_csv(tmp_path / f"{name}.csv")
        assert tuple(rows[0]) == EXPERIMENT_COLUMNS
    assert sorted(p.name for p in tmp_path.glob("*.svg")) == ["ar_alpha0.5.svg", "ar_alpha0.95.svg", "mm_alpha0.9.svg"]
    for row in result.rows:
        assert row.mse == pytest.approx(row.bias**2 + row.variance * 4 / 5, rel=1e-12, abs=1e-15)
        if row.r == 1:
            twin = [o for o in result.rows if o.scenario == row.scenario and o.r == 1 and o.alpha == row.alpha]
            assert twin[0].mse == twin[1].mse


def test_experiment_single_micro_rep(tmp_path):
    result = cmd_experiment(small_config(tmp_path, micro_reps=1))
    for row in result.rows:
        assert row.variance == 0.0
        assert row.mse == pytest.approx(row.bias**2, rel=1e-15)


def test_experiment_golden_csv(tmp_path):
    cmd_experiment(small_config(tmp_path))
    for name in ("ar", "mm"):
        assert (tmp_path / f"{name}.csv").read_text() == (GOLDEN / f"{name}.csv").read_text()


def test_svg_points_equal_csv_cells(tmp_path):
    cmd_experiment(small_config(tmp_path))
    rows = [dict(zip(EXPERIMENT_COLUMNS, r)) for r in read_csv(tmp_path / "ar.csv")[1:]]
    for alpha in ("0.5", "0.95"):
        svg = (tmp_path / f"ar_alpha{alpha}.svg").read_text()
        assert svg.startswith("<svg") and "http" not in svg.replace('xmlns="http://www.w3.org/2000/svg"', "")
        for method in ("pooled", "average"):
            block = svg.split(f'data-series="{method}"')[1].split("</g>")[0]
            points = re.findall(r'data-r="(\d+)" data-value="([^"]+)"', block)
            expected = [(r["R"], r["mse"]) for r in rows if float(r["alpha"]) == float(alpha) and r["method"] == method]
            assert points == expected


def test_experiment_cli_flags_override(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(dict(SMALL, output_dir=str(tmp_path / "ignored"))))
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(cfg_path), "--out", str(out), "--seed", "7", "--workers", "2"]) == 0
    assert (out / "ar.csv").read_text() == (GOLDEN / "ar.csv").read_text()
    assert not (tmp_path / "ignored").exists()


def test_experiment_unwritable_out(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(SMALL))
    assert main(["experiment", "--config", str(cfg_path), "--out", str(blocker / "x")]) == 3


# ---- bias/variance ----------------------------------------------------------

def test_bias_variance_csv(tmp_path):
    cfg = small_config(tmp_path)
    path = cmd_bias_variance_sweep(cfg)
    rows = read_csv(path)
    assert tuple(rows[0]) == BIAS_VARIANCE_COLUMNS
    recs = [dict(zip(BIAS_VARIANCE_COLUMNS, r)) for r in rows[1:]]
    assert {r["design"] for r in recs} == {"fixed_L", "fixed_budget"}
    for r in recs:
        l, n = int(r["L"]), int(r["N"])
        assert n == l * int(r["R"])
        assert float(r["bound_pooled"]) == pytest.approx(n**-0.75 * math.log(l), rel=1e-15)
        assert float(r["bound_average"]) == pytest.approx(l**-0.75 * math.log(l), rel=1e-15)
        if r["R"] == "1":
            assert r["bias_pooled"] == r["bias_average"] and r["variance_pooled"] == r["variance_average"]
    budget = [r for r in recs if r["design"] == "fixed_budget" and r["scenario"] == "ar"]
    assert {int(r["N"]) for r in budget} == {200}


def test_bias_variance_ar1_tail_separation(tmp_path):
    cfg = ExperimentConfig([Scenario("ar09", ProcessModel.ar1(0.9), 400, (0.95,), (1, 4, 16, 64))],
                           micro_reps=400, base_seed=11, output_dir=tmp_path)
    recs = [dict(zip(BIAS_VARIANCE_COLUMNS, r)) for r in read_csv(cmd_bias_variance_sweep(cfg))[1:]]
    fixed = {int(r["R"]): r for r in recs if r["design"] == "fixed_L"}
    avg_bias = [abs(float(fixed[r]["bias_average"])) for r in (1, 4, 16, 64)]
    assert max(avg_bias) / min(avg_bias) <= 3
    assert abs(float(fixed[64]["bias_pooled"])) < abs(float(fixed[1]["bias_pooled"]))
    for method in ("pooled", "average"):
        v1 = float(fixed[1][f"variance_{method}"])
        for r in (4, 16, 64):
            assert float(fixed[r][f"variance_{method}"]) * r / v1 == pytest.approx(1.0, abs=0.25)


def test_bias_variance_cli_default_grid(tmp_path):
    assert main(["bias-variance", "--micro-reps", "2", "--r-grid", "1,4", "--out", str(tmp_path)]) == 0
    recs = read_csv(tmp_path / "bias_variance.csv")[1:]
    assert {r[0] for r in recs} == {"ar1_phi0.9_L400", "mm1_rho0.9_L400"}


# ---- verify -----------------------------------------------------------------

def test_verify_subset_deterministic(tmp_path):
    a, ok_a, _ = cmd_verify(5, tmp_path / "a", only=["C02", "C03", "C09"])
    b, ok_b, _ = cmd_verify(5, tmp_path / "b", only=["C02", "C03", "C09"])
    assert ok_a and ok_b
    assert a.read_bytes() == b.read_bytes()


def test_verify_fault_injection_fails_oracle(tmp_path):
    _, ok, results = cmd_verify(1, tmp_path, only=["C01"], truth_shift=1.0)
    assert not ok and not results[0].passed
    code = main(["verify", "--only", "C01", "--truth-shift", "1", "--out", str(tmp_path)])
    assert code == 1
    assert "FAIL" in (tmp_path / "verify_report.txt").read_text()


def test_verify_unknown_check(tmp_path):
    assert main(["verify", "--only", "C99", "--out", str(tmp_path)]) == 2
