"""Simulate -> fit -> evaluate runs over replicate and parameter grids.

A benchmark spec is a plain dict (usually loaded from JSON)::

    {"reps": 5, "seed": 0,
     "sim": {"graph": "er", "d": 20, "sign": "+-"},
     "train": {"epochs": 4000},
     "family": "zinb",
     "grid": {"family": ["zinb", "poisson"]}}

Every grid key names either a simulation setting, a training setting or
``family``; the grid is the Cartesian product of the listed values in the
order the keys appear. Replicate ``r`` uses seed ``seed + r``; the graph,
weights, sample and dropout mask draw from independent child streams of
that seed, so every config sharing the same simulation settings sees the
same data.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ParameterError, TrainingAborted
from .graph import DagGraph, SupportMasks, generate_ba, generate_er, split_support
from .metrics import EvalReport, combine_scores, evaluate
from .models import Dataset, check_family
from .simulate import (DropoutConfig, SimParams, apply_dropout, check_zero_link, logic_sample,
                       parse_sign, sample_params)
from .trainer import TrainConfig, fit

log = logging.getLogger(__name__)

RESULT_FIELDS = ("config_id", "replicate", "graph", "family", "sign", "lambda_group",
                 "lambda_align", "align_norm", "rho", "tpr", "fdr", "shd", "auprc",
                 "auprc_ratio", "seconds")
METRIC_FIELDS = ("tpr", "fdr", "shd", "auprc", "auprc_ratio", "seconds")
GRAPHS = ("er", "ba")


@dataclass(frozen=True)
class SimSettings:
    """Everything needed to regenerate one replicate dataset from a seed."""

    graph: str = "er"
    d: int = 20
    n: int = 500
    p: float = 0.25
    m: int = 3
    sign: str = "+-"
    zero_link: str = "count"
    sim_family: str = "zinb"
    rho: float | None = None
    gamma_mean: float = 1.5
    delta_mean: float = 1.5
    intercept_sd: float = 0.2
    dispersion: float = 5.0
    dropout: bool = False
    dropout_slope: float = 1.0
    dropout_q: float = 65.0

    def __post_init__(self):
        if self.graph not in GRAPHS:
            raise ParameterError(f"graph must be one of {GRAPHS}, got {self.graph!r}")
        if self.d < 2 or self.n < 1:
            raise ParameterError("need d >= 2 and n >= 1")
        object.__setattr__(self, "sign", parse_sign(self.sign))
        check_zero_link(self.zero_link)
        if self.rho is not None and not 0 <= self.rho <= 1:
            raise ParameterError("rho must lie in [0, 1]")

    @classmethod
    def from_dict(cls, obj: dict) -> "SimSettings":
        _reject_unknown(cls, obj, "simulation")
        return cls(**obj)


def _reject_unknown(cls, obj, what):
    unknown = set(obj) - {f.name for f in fields(cls)}
    if unknown:
        raise ParameterError(f"unknown {what} keys: {sorted(unknown)}")


def replicate_seeds(seed: int) -> dict:
    """Independent integer seeds for each random stage of one replicate."""
    children = np.random.SeedSequence(seed).spawn(4)
    names = ("graph", "params", "sample", "dropout")
    return {k: int(c.generate_state(1)[0]) for k, c in zip(names, children)}


@dataclass
class Replicate:
    sim: SimParams
    data: Dataset
    seed: int
    masks: SupportMasks | None = None
    dropped: Dataset | None = None

    @property
    def graph(self) -> DagGraph:
        return self.sim.graph

    @property
    def fit_data(self) -> Dataset:
        return self.dropped if self.dropped is not None else self.data


def simulate_replicate(s: SimSettings, seed: int) -> Replicate:
    seeds = replicate_seeds(seed)
    if s.graph == "er":
        g = generate_er(s.d, s.p, seeds["graph"])
    else:
        g = generate_ba(s.d, s.m, seeds["graph"])
    masks = split_support(g, s.rho, seeds["graph"] + 1) if s.rho is not None else None
    sp = sample_params(g, s.sign, masks=masks, gamma_mean=s.gamma_mean, delta_mean=s.delta_mean,
                       intercept_sd=s.intercept_sd, dispersion=s.dispersion, family=s.sim_family,
                       zero_link=s.zero_link, seed=seeds["params"])
    data = logic_sample(sp, s.n, seeds["sample"])
    dropped = None
    if s.dropout:
        dropped = apply_dropout(data, DropoutConfig(s.dropout_slope, s.dropout_q, seeds["dropout"]))
    return Replicate(sp, data, seed, masks, dropped)


@dataclass(frozen=True)
class RunConfig:
    config_id: str
    sim: SimSettings
    family: str
    train: TrainConfig

    def describe(self) -> dict:
        return {"config_id": self.config_id, "family": self.family,
                "sim": asdict(self.sim), "train": self.train.to_dict()}


@dataclass(frozen=True)
class BenchmarkSpec:
    reps: int = 5
    seed: int = 0
    sim: SimSettings = SimSettings()
    train: dict | None = None
    family: str = "zinb"
    grid: dict | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ParameterError("reps must be >= 1")
        check_family(self.family)
        TrainConfig.from_dict(dict(self.train or {}))
        self.configs()

    @classmethod
    def from_dict(cls, obj: dict) -> "BenchmarkSpec":
        _reject_unknown(cls, obj, "benchmark")
        obj = dict(obj)
        obj["sim"] = SimSettings.from_dict(obj.get("sim", {}))
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "BenchmarkSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def configs(self) -> list:
        grid = dict(self.grid or {})
        sim_keys = {f.name for f in fields(SimSettings)}
        train_keys = {f.name for f in fields(TrainConfig)}
        for k, values in grid.items():
            if k not in sim_keys | train_keys | {"family"}:
                raise ParameterError(f"unknown grid key {k!r}")
            if not isinstance(values, list) or not values:
                raise ParameterError(f"grid entry {k!r} must be a non-empty list")
        out = []
        for i, combo in enumerate(itertools.product(*grid.values())):
            cell = dict(zip(grid, combo))
            family = cell.pop("family", self.family)
            check_family(family)
            sim = replace(self.sim, **{k: v for k, v in cell.items() if k in sim_keys})
            train = dict(self.train or {})
            train.update({k: v for k, v in cell.items() if k in train_keys})
            out.append(RunConfig(f"c{i:03d}", sim, family, TrainConfig.from_dict(train)))
        return out


def run_one(cfg: RunConfig, rep: Replicate, replicate: int, timing: bool = False) -> dict:
    """Fit one config on one replicate and return a results row."""
    train = replace(cfg.train, seed=rep.seed)
    row = base_row(cfg, replicate)
    start = time.perf_counter()
    try:
        res = fit(rep.fit_data, cfg.family, train)
    except (TrainingAborted, ArithmeticError, ValueError) as exc:
        log.warning("%s replicate %d failed: %s", cfg.config_id, replicate, exc)
        row["error"] = str(exc).splitlines()[0]
        return row
    report = evaluate(res.adjacency(), combine_scores(res.w0, res.w1), rep.graph)
    row.update(metrics_row(report))
    if timing:
        row["seconds"] = round(time.perf_counter() - start, 3)
    return row


def base_row(cfg: RunConfig, replicate: int) -> dict:
    t = cfg.train
    align_norm = t.align_norm if t.lambda_align > 0 and cfg.family in ("zinb", "zip") else "none"
    return {
        "config_id": cfg.config_id, "replicate": replicate, "graph": cfg.sim.graph,
        "family": cfg.family, "sign": cfg.sim.sign, "lambda_group": t.lambda_group,
        "lambda_align": t.lambda_align, "align_norm": align_norm,
        "rho": "" if cfg.sim.rho is None else cfg.sim.rho,
        "tpr": "", "fdr": "", "shd": "", "auprc": "", "auprc_ratio": "", "seconds": "",
    }


def metrics_row(report: EvalReport) -> dict:
    return {"tpr": report.tpr, "fdr": report.fdr, "shd": report.shd, "auprc": report.auprc,
            "auprc_ratio": report.auprc_ratio}


def _task(args):
    cfg, replicate, seed, timing = args
    return run_one(cfg, simulate_replicate(cfg.sim, seed), replicate, timing)


def run_benchmark(spec: BenchmarkSpec, jobs: int = 1, timing: bool = False) -> list:
    """Run every (config, replicate) cell; rows come back in grid order."""
    configs = spec.configs()
    if jobs > 1:
        tasks = [(c, r, spec.seed + r, timing) for c in configs for r in range(spec.reps)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_task, tasks))
    rows, cache = [], {}
    for c in configs:
        for r in range(spec.reps):
            key = (c.sim, r)
            if key not in cache:
                cache[key] = simulate_replicate(c.sim, spec.seed + r)
            rows.append(run_one(c, cache[key], r, timing))
    return rows


def summarize(rows: list) -> list:
    """Mean and sample standard deviation of each metric per config."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(row["config_id"], []).append(row)
    out = []
    for cid, members in groups.items():
        first = members[0]
        summary = {k: first[k] for k in RESULT_FIELDS[:9] if k != "replicate"}
        ok = [m for m in members if "error" not in m]
        summary["n_ok"] = len(ok)
        summary["n_failed"] = len(members) - len(ok)
        for k in METRIC_FIELDS:
            vals = [float(m[k]) for m in ok if m[k] != ""]
            summary[f"{k}_mean"] = float(np.mean(vals)) if vals else ""
            summary[f"{k}_sd"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else ""
        out.append(summary)
    return out


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def write_csv_atomic(path, rows: list, fieldnames) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fieldnames), extrasaction="ignore",
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    write_text_atomic(path, buf.getvalue())


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_results(out_dir, spec: BenchmarkSpec, rows: list) -> None:
    """Write ``results.csv``, ``summary.csv``, ``configs.json`` and any failures."""
    out = Path(out_dir)
    write_csv_atomic(out / "results.csv", rows, RESULT_FIELDS)
    summary = summarize(rows)
    if summary:
        write_csv_atomic(out / "summary.csv", summary, list(summary[0]))
    configs = {"reps": spec.reps, "seed": spec.seed,
               "configs": [c.describe() for c in spec.configs()]}
    write_text_atomic(out / "configs.json", json.dumps(configs, indent=2) + "\n")
    failures = [r for r in rows if "error" in r]
    if failures:
        write_csv_atomic(out / "failures.csv", failures, ("config_id", "replicate", "error"))


def mean_metric(rows: list, metric: str, **match) -> float:
    """Mean of ``metric`` over successful rows whose columns equal ``match``."""
    vals = [float(r[metric]) for r in rows
            if "error" not in r and all(r.get(k) == v for k, v in match.items())]
    if not vals:
        raise ParameterError(f"no successful rows match {match}")
    return float(np.mean(vals))


__all__ = ["RESULT_FIELDS", "BenchmarkSpec", "Replicate", "RunConfig", "SimSettings",
           "mean_metric", "replicate_seeds", "run_benchmark", "run_one", "simulate_replicate",
           "summarize", "write_csv_atomic", "write_results", "write_text_atomic"]
