"""End-to-end CLI tests: round trips, determinism, exit codes, plots."""

import csv
import json
import os

import numpy as np
import pytest

from gtvclass.cli import REPORT_COLUMNS, SweepConfig, main
from gtvclass import ValidationError


def run(tmp_path, *argv):
    return main(["--out-dir", str(tmp_path)] + list(argv))


def write_sweep_config(tmp_path, **overrides):
    cfg = {
        "model": "builtin:quadrant",
        "n_list": [150, 300],
        "eps_rule": {"c": 1.0, "a": 1 / 3},
        "lambda_rule": {"regime": "overfit", "c": 1e-3, "b": 0.0},
        "kernel": "indicator",
        "seeds": [1, 2],
        "test_m": 400,
        "report": "report.csv",
    }
    cfg.update(overrides)
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_gen_solve_risk_round_trip(tmp_path, capsys):
    assert run(tmp_path, "gen", "--model", "builtin:quadrant", "--n", "120",
               "--out", "data.csv", "--seed", "4") == 0
    assert run(tmp_path, "solve", "--data", str(tmp_path / "data.csv"),
               "--eps", "0.2", "--lambda", "0.0001", "--out", "sol.json") == 0
    sol = json.loads((tmp_path / "sol.json").read_text())
    assert sol["certificate"] is True
    assert sol["u_binary"] == [int(v) for v in sol["u"]]
    capsys.readouterr()
    assert run(tmp_path, "risk", "--data", str(tmp_path / "data.csv"),
               "--model", "builtin:quadrant",
               "--solution", str(tmp_path / "sol.json"),
               "--test-m", "500", "--seed", "2") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["empirical_risk"] == 0.0  # certified overfit reproduces labels
    assert rec["excess_risk"] >= -rec["ci_halfwidth"]


def test_solve_pd_method(tmp_path, capsys):
    run(tmp_path, "gen", "--model", "builtin:quadrant", "--n", "80",
        "--out", "d.csv", "--seed", "1")
    capsys.readouterr()
    assert run(tmp_path, "solve", "--data", str(tmp_path / "d.csv"),
               "--eps", "0.25", "--lambda", "0.05", "--method", "pd") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["method"] == "primal_dual" and rec["iters"] > 0
    assert rec["energy_binary"] <= rec["energy_relaxed"] + 1e-9


def test_certify_subcommand(tmp_path, capsys):
    run(tmp_path, "gen", "--model", "builtin:quadrant", "--n", "60",
        "--out", "d.csv", "--seed", "2")
    capsys.readouterr()
    assert run(tmp_path, "certify", "--data", str(tmp_path / "d.csv"),
               "--eps", "0.2", "--lambda", "100.0") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["certificate"] is False and rec["margin"] < 0


def test_sweep_report_schema_and_determinism(tmp_path):
    cfg = write_sweep_config(tmp_path)
    assert run(tmp_path, "sweep", "--config", cfg) == 0
    first = (tmp_path / "report.csv").read_text().splitlines()
    assert run(tmp_path, "--threads", "2", "sweep", "--config", cfg) == 0
    second = (tmp_path / "report.csv").read_text().splitlines()
    assert first[0].split(",") == REPORT_COLUMNS
    assert len(first) == 5

    def strip_runtime(lines):
        k = REPORT_COLUMNS.index("runtime_ms")
        return [",".join(v for i, v in enumerate(l.split(",")) if i != k)
                for l in lines]

    # byte-identical modulo the wall-clock column, threads notwithstanding
    assert strip_runtime(first) == strip_runtime(second)


def test_sweep_overfit_rows_reproduce_labels(tmp_path):
    cfg = write_sweep_config(tmp_path)
    run(tmp_path, "sweep", "--config", cfg)
    with open(tmp_path / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        assert r["certificate"] == "true"
        assert float(r["empirical_risk"]) == 0.0
        assert float(r["label_agreement"]) == 1.0


def test_sweep_underfit_rows_are_constant_majority(tmp_path):
    cfg = write_sweep_config(
        tmp_path, model="builtin:asymmetric",
        lambda_rule={"regime": "underfit", "c": 1000.0, "b": 0.0},
        n_list=[200], seeds=[3])
    run(tmp_path, "sweep", "--config", cfg)
    with open(tmp_path / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        # constant solution: gtv 0, empirical risk = minority fraction <= 1/2
        assert float(r["gtv_of_solution"]) == 0.0
        assert float(r["empirical_risk"]) <= 0.5
        assert float(r["label_agreement"]) == 1.0 - float(r["empirical_risk"])


def test_sweep_config_validation(tmp_path):
    bad = write_sweep_config(tmp_path, lambda_rule={"regime": "bogus", "c": 1.0})
    assert run(tmp_path, "sweep", "--config", bad) == 2
    with pytest.raises(ValidationError):
        SweepConfig({"model": "builtin:quadrant"})
    with pytest.raises(ValidationError):
        SweepConfig(json.loads((tmp_path / "sweep.json").read_text().replace(
            '"c": 1.0', '"c": -1.0')))


def test_exit_codes(tmp_path, capsys):
    # missing file -> I/O error
    assert run(tmp_path, "solve", "--data", str(tmp_path / "nope.csv"),
               "--eps", "0.1", "--lambda", "0.1") == 3
    # malformed JSON config -> validation error
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(tmp_path, "sweep", "--config", str(bad)) == 2
    # unknown builtin -> validation error
    assert run(tmp_path, "gen", "--model", "builtin:nope", "--n", "10",
               "--out", "x.csv") == 2
    capsys.readouterr()


def test_tl1_subcommand(tmp_path, capsys):
    run(tmp_path, "gen", "--model", "builtin:quadrant", "--n", "30",
        "--out", "a.csv", "--seed", "1")
    run(tmp_path, "gen", "--model", "builtin:quadrant", "--n", "30",
        "--out", "b.csv", "--seed", "2")
    capsys.readouterr()
    assert run(tmp_path, "tl1", "--a", str(tmp_path / "a.csv"),
               "--b", str(tmp_path / "b.csv")) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["cost"] > 0 and rec["sup_displacement"] > 0
    # identical inputs -> zero distance
    assert run(tmp_path, "tl1", "--a", str(tmp_path / "a.csv"),
               "--b", str(tmp_path / "a.csv")) == 0
    assert json.loads(capsys.readouterr().out)["cost"] == 0.0
    # unequal sizes -> validation error
    run(tmp_path, "gen", "--model", "builtin:quadrant", "--n", "10",
        "--out", "c.csv", "--seed", "3")
    assert run(tmp_path, "tl1", "--a", str(tmp_path / "a.csv"),
               "--b", str(tmp_path / "c.csv")) == 2


def test_sigma_subcommand(tmp_path, capsys):
    assert run(tmp_path, "sigma", "--kernel", "indicator", "--d", "2") == 0
    assert json.loads(capsys.readouterr().out)["sigma"] == pytest.approx(4 / 3)
    assert run(tmp_path, "sigma", "--kernel", "gauss:scale=0.5", "--d", "1") == 0
    assert json.loads(capsys.readouterr().out)["sigma"] > 0


def test_gamma_check_subcommand(tmp_path, capsys):
    assert run(tmp_path, "gamma-check", "--model", "builtin:halfplane",
               "--n-list", "300,900", "--seed", "5") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["target"] == pytest.approx(4 / 3)
    assert [r["n"] for r in rec["rows"]] == [300, 900]


def test_plot_outputs_and_regime_filter(tmp_path, capsys):
    cfg = write_sweep_config(tmp_path)
    run(tmp_path, "sweep", "--config", cfg)
    run(tmp_path, "gen", "--model", "builtin:quadrant", "--n", "50",
        "--out", "d.csv", "--seed", "8")
    run(tmp_path, "solve", "--data", str(tmp_path / "d.csv"), "--eps", "0.25",
        "--lambda", "0.001", "--out", "s.json")
    capsys.readouterr()
    assert run(tmp_path, "plot", "--report", str(tmp_path / "report.csv"),
               "--data", str(tmp_path / "d.csv"),
               "--solution", str(tmp_path / "s.json")) == 0
    rec = json.loads(capsys.readouterr().out)
    assert len(rec["written"]) == 3
    for p in rec["written"]:
        assert os.path.exists(p)
        text = open(p).read()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    # empty regime filter errors and names the available regimes
    assert run(tmp_path, "plot", "--report", str(tmp_path / "report.csv"),
               "--regime", "underfit") == 2
    err = capsys.readouterr().err
    assert "overfit" in err


def test_plot_single_row_report(tmp_path, capsys):
    cfg = write_sweep_config(tmp_path, n_list=[100], seeds=[1])
    run(tmp_path, "sweep", "--config", cfg)
    capsys.readouterr()
    assert run(tmp_path, "plot", "--report", str(tmp_path / "report.csv")) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["written"] and os.path.exists(rec["written"][0])


def test_plot_nothing_to_do(tmp_path):
    assert run(tmp_path, "plot") == 2


def test_gen_deterministic_bytes(tmp_path):
    run(tmp_path, "gen", "--model", "builtin:asymmetric", "--n", "77",
        "--out", "g1.csv", "--seed", "12")
    run(tmp_path, "gen", "--model", "builtin:asymmetric", "--n", "77",
        "--out", "g2.csv", "--seed", "12")
    assert (tmp_path / "g1.csv").read_bytes() == (tmp_path / "g2.csv").read_bytes()


def test_sweep_energy_recompute_invariant(tmp_path):
    from gtvclass.graph import build
    from gtvclass.groundtruth import BUILTIN_MODELS, sample
    from gtvclass.kernels import parse_kernel
    from gtvclass.solver import energy

    cfg = write_sweep_config(tmp_path, n_list=[200], seeds=[5])
    run(tmp_path, "sweep", "--config", cfg)
    with open(tmp_path / "report.csv", newline="") as fh:
        row = next(iter(csv.DictReader(fh)))
    model = BUILTIN_MODELS["quadrant"]()
    cloud = sample(model, int(row["n"]), int(row["seed"]))
    g = build(cloud, float(row["eps"]), parse_kernel("indicator"))
    # the stored energy must match an independent recomputation
    u = cloud.labels.astype(float)  # overfit rows reproduce the labels
    e = energy(g, cloud.labels, float(row["lambda"]), u)
    assert abs(e - float(row["energy"])) <= 1e-9 * max(1.0, abs(e))
