import csv
import json

import numpy as np
import pytest

from zico.cli import main
from zico.errors import ParameterError
from zico.experiment import (RESULT_FIELDS, BenchmarkSpec, SimSettings, mean_metric,
                             replicate_seeds, run_benchmark, simulate_replicate, summarize)
from zico.graph import DagGraph, write_edges

TINY = {"reps": 2, "seed": 3, "sim": {"d": 5, "n": 80}, "train": {"epochs": 15}}


def test_replicate_seeds_are_independent_and_stable():
    a = replicate_seeds(7)
    assert a == replicate_seeds(7)
    assert len(set(a.values())) == 4
    assert a != replicate_seeds(8)


def test_simulate_replicate_shares_data_across_configs():
    s = SimSettings(d=6, n=50, dropout=True)
    a, b = simulate_replicate(s, 1), simulate_replicate(s, 1)
    assert np.array_equal(a.data.x, b.data.x) and np.array_equal(a.fit_data.x, b.fit_data.x)
    assert np.all(a.fit_data.x <= a.data.x)
    with pytest.raises(ParameterError):
        SimSettings(graph="sf")
    with pytest.raises(ParameterError):
        SimSettings.from_dict({"bogus": 1})


def test_grid_expansion():
    spec = BenchmarkSpec.from_dict({**TINY, "grid": {"sign": ["++", "--", "+-", "-+"],
                                                     "graph": ["ba", "er"]}})
    configs = spec.configs()
    assert len(configs) == 8
    assert [c.config_id for c in configs][:2] == ["c000", "c001"]
    assert (configs[0].sim.sign, configs[0].sim.graph) == ("++", "ba")
    spec = BenchmarkSpec.from_dict({**TINY, "grid": {"lambda_group": [0, 0.001, 0.01]}})
    assert [c.train.lambda_group for c in spec.configs()] == [0, 0.001, 0.01]
    with pytest.raises(ParameterError):
        BenchmarkSpec.from_dict({**TINY, "grid": {"nonsense": [1]}})
    with pytest.raises(ParameterError):
        BenchmarkSpec.from_dict({**TINY, "reps": 0})


def test_benchmark_rows_and_summary():
    spec = BenchmarkSpec.from_dict({**TINY, "grid": {"family": ["zinb", "poisson"]}})
    rows = run_benchmark(spec)
    assert [(r["config_id"], r["replicate"]) for r in rows] == [
        ("c000", 0), ("c000", 1), ("c001", 0), ("c001", 1)]
    assert rows[2]["align_norm"] == "none"
    assert all(r["seconds"] == "" for r in rows)
    summary = summarize(rows)
    assert len(summary) == 2 and summary[0]["n_ok"] == 2
    assert summary[0]["shd_mean"] == pytest.approx(np.mean([rows[0]["shd"], rows[1]["shd"]]))
    assert mean_metric(rows, "shd", family="zinb") == summary[0]["shd_mean"]


def run_cli(args):
    return main([str(a) for a in args])


def test_cli_simulate_fit_eval(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert run_cli(["simulate", "--d", 5, "--n", 60, "--reps", 2, "--dropout", "--out", sim]) == 0
    for r in (0, 1):
        for name in ("data.csv", "truth_w0.csv", "truth_w1.csv", "graph.edges", "sim.json",
                     "data_dropout.csv"):
            assert (sim / f"rep{r}" / name).exists()
    meta = json.loads((sim / "rep1" / "sim.json").read_text())
    assert meta["seed"] == 1 and meta["settings"]["dropout_slope"] == 1.0
    fit_dir = tmp_path / "fit"
    assert run_cli(["fit", "--data", sim / "rep0" / "data.csv", "--epochs", 20,
                    "--family", "poisson", "--out", fit_dir]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert "nll=" in line and "h0=" in line and "h1=" in line and "seconds=" in line
    assert run_cli(["eval", "--fit-dir", fit_dir, "--truth", sim / "rep0"]) == 0
    rows = list(csv.DictReader(open(fit_dir / "eval.csv")))
    assert len(rows) == 1 and "auprc_ratio" in rows[0]


def test_cli_config_with_flag_override(tmp_path):
    sim = tmp_path / "sim"
    run_cli(["simulate", "--d", 4, "--n", 30, "--reps", 1, "--out", sim])
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 50, "lambda_align": 0.5, "family": "zip"}))
    out = tmp_path / "fit"
    assert run_cli(["fit", "--data", sim / "rep0" / "data.csv", "--config", cfg,
                    "--epochs", 7, "--out", out]) == 0
    info = json.loads((out / "fit.json").read_text())
    assert info["family"] == "zip"
    assert info["config"]["epochs"] == 7 and info["config"]["lambda_align"] == 0.5


def test_cli_eval_perfect_fixture(tmp_path):
    g = DagGraph.from_edges(3, [(0, 1), (1, 2)])
    write_edges(g, tmp_path / "graph.edges")
    w = g.adjacency() * 1.0
    np.savetxt(tmp_path / "w0.csv", w, delimiter=",")
    np.savetxt(tmp_path / "w1.csv", w, delimiter=",")
    (tmp_path / "fit.json").write_text(json.dumps({"family": "zinb", "config": {"threshold": 0.3}}))
    assert run_cli(["eval", "--fit-dir", tmp_path, "--truth", tmp_path / "graph.edges"]) == 0
    row = next(csv.DictReader(open(tmp_path / "eval.csv")))
    assert (row["shd"], float(row["tpr"]), float(row["fdr"])) == ("0", 1.0, 0.0)


def test_cli_exit_codes(tmp_path, monkeypatch):
    with pytest.raises(SystemExit) as info:
        main(["fit"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["nonsense"])
    assert info.value.code == 1
    assert run_cli(["fit", "--data", tmp_path / "missing.csv"]) == 2
    assert run_cli(["eval", "--fit-dir", tmp_path, "--truth", tmp_path / "none.edges"]) == 2
    (tmp_path / "d.csv").write_text("a,b\n1,2\n0,3\n")
    assert run_cli(["fit", "--data", tmp_path / "d.csv", "--lr", -1]) == 1

    def boom(*args, **kwargs):
        from zico.errors import TrainingAborted
        raise TrainingAborted("diverged", [{"epoch": 0, "objective": 1.0, "nll": 1.0, "h0": 0.0,
                                            "h1": 0.0, "mu": 1.0, "lambda_eff": 0.0}])

    monkeypatch.setattr("zico.cli.fit", boom)
    out = tmp_path / "fit"
    assert run_cli(["fit", "--data", tmp_path / "d.csv", "--out", out]) == 3
    assert (out / "trace.csv").read_text().count("\n") == 2


def test_cli_benchmark_default_out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ZICO_OUT", str(tmp_path / "root"))
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({**TINY, "reps": 1}))
    assert run_cli(["benchmark", "--config", spec]) == 0
    results = tmp_path / "root" / "benchmark" / "results.csv"
    header = results.read_text().splitlines()[0]
    assert header == ",".join(RESULT_FIELDS)
    assert (tmp_path / "root" / "benchmark" / "summary.csv").exists()
