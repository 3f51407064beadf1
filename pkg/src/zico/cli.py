"""Command-line interface: ``zico {simulate,fit,eval,benchmark}``.

Exit codes: 0 success, 1 usage or invalid parameters, 2 I/O or data
errors, 3 numerical failure during training. Settings can come from a
JSON file given with ``--config``; explicit flags override it. Output
directories default to subfolders of ``$ZICO_OUT`` (or ``./zico_out``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError, TrainingAborted
from .experiment import BenchmarkSpec, SimSettings, run_benchmark, simulate_replicate, write_results
from .graph import read_edges
from .metrics import combine_scores, evaluate
from .models import FAMILIES, ZERO_INFLATED, Dataset
from .simulate import SIGN_CONFIGS, ZERO_LINKS, write_simulation
from .trainer import ALIGN_NORMS, TrainConfig, binarize, fit, write_trace

log = logging.getLogger("zico")

OUT_ENV = "ZICO_OUT"
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "zico_out")) / name


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return obj


def merged(config: dict, args, mapping: dict) -> dict:
    """Config-file values overridden by any flag the user actually set."""
    out = dict(config)
    for dest, key in mapping.items():
        value = getattr(args, dest)
        if value is not None:
            out[key] = value
    return out


SIM_FLAGS = {"graph": "graph", "d": "d", "p": "p", "m": "m", "n": "n", "sign": "sign",
             "zero_link": "zero_link", "rho": "rho", "dispersion": "dispersion",
             "gamma_mean": "gamma_mean", "delta_mean": "delta_mean", "dropout": "dropout",
             "dropout_alpha": "dropout_slope", "q": "dropout_q"}
TRAIN_FLAGS = {"epochs": "epochs", "alpha": "alpha", "mu0": "mu0", "decay_interval": "decay_interval",
               "lambda_group": "lambda_group", "warm": "warm", "lambda_align": "lambda_align",
               "align": "align_norm", "acyclicity": "acyclicity_mode", "s": "s",
               "batch_size": "batch_size", "lr": "learning_rate", "weight_decay": "weight_decay",
               "clip_norm": "clip_norm", "threshold": "threshold", "seed": "seed"}


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    reps = args.reps if args.reps is not None else cfg.pop("reps", 10)
    seed = args.seed if args.seed is not None else cfg.pop("seed", 0)
    cfg.pop("reps", None)
    cfg.pop("seed", None)
    if reps < 1:
        raise UsageError("--reps must be >= 1")
    settings = SimSettings.from_dict(merged(cfg, args, SIM_FLAGS))
    out = Path(args.out) if args.out else default_out("simulate")
    for r in range(reps):
        rep = simulate_replicate(settings, seed + r)
        rep_dir = out / f"rep{r}"
        write_simulation(rep_dir, rep.sim, rep.data, seed + r,
                         {"settings": asdict(settings), "clamped": rep.data.meta.get("clamped", 0)})
        if rep.dropped is not None:
            rep.dropped.to_csv(rep_dir / "data_dropout.csv")
    print(f"wrote {reps} replicate(s) to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    family = args.family or cfg.pop("family", "zinb")
    cfg.pop("family", None)
    train = TrainConfig.from_dict(merged(cfg, args, TRAIN_FLAGS))
    data = Dataset.from_csv(args.data)
    out = Path(args.out) if args.out else default_out("fit")
    try:
        res = fit(data, family, train)
    except TrainingAborted as exc:
        out.mkdir(parents=True, exist_ok=True)
        write_trace(exc.trace or [], out / "trace.csv")
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    res.save(out)
    last = res.trace[-1]
    print(f"family={family} nll={last['nll']:.6g} h0={last['h0']:.3g} h1={last['h1']:.3g} "
          f"seconds={res.elapsed_seconds:.2f}")
    return EXIT_OK


def _read_matrix(path) -> np.ndarray:
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=","))
    except ValueError as exc:
        raise DataError(f"cannot parse matrix {path}: {exc}") from exc


def cmd_eval(args) -> int:
    fit_dir = Path(args.fit_dir)
    truth_path = Path(args.truth)
    if truth_path.is_dir():
        truth_path = truth_path / "graph.edges"
    truth = read_edges(truth_path)
    info = json.loads((fit_dir / "fit.json").read_text())
    family = info["family"]
    w1 = _read_matrix(fit_dir / "w1.csv")
    w0 = _read_matrix(fit_dir / "w0.csv") if family in ZERO_INFLATED else None
    threshold = args.threshold if args.threshold is not None else info["config"].get("threshold", 0.3)
    pred = binarize(w1, threshold)
    if w0 is not None:
        pred |= binarize(w0, threshold)
    report = evaluate(pred, combine_scores(w0, w1), truth)
    out = Path(args.out) if args.out else fit_dir
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "eval.csv")
    report.to_json(out / "eval.json")
    print(f"shd={report.shd} tpr={report.tpr:.3f} fdr={report.fdr:.3f} "
          f"auprc={report.auprc:.3f} ratio={report.auprc_ratio:.3f}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    obj = load_config(args.config)
    if args.reps is not None:
        obj["reps"] = args.reps
    if args.seed is not None:
        obj["seed"] = args.seed
    spec = BenchmarkSpec.from_dict(obj)
    out = Path(args.out) if args.out else default_out("benchmark")
    rows = run_benchmark(spec, jobs=args.jobs, timing=args.timing)
    write_results(out, spec, rows)
    failed = sum("error" in r for r in rows)
    print(f"{len(rows)} run(s), {failed} failed; results in {out / 'results.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zico", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate replicate datasets")
    p.add_argument("--config")
    p.add_argument("--graph", choices=("er", "ba"))
    p.add_argument("--d", type=int, help="number of nodes (default 20)")
    p.add_argument("--p", type=float, help="ER edge probability (default 0.25)")
    p.add_argument("--m", type=int, help="BA edges per new node (default 3)")
    p.add_argument("--n", type=int, help="samples per replicate (default 500)")
    p.add_argument("--reps", type=int, help="replicates (default 10)")
    p.add_argument("--seed", type=int, help="seed base; replicate r uses seed + r (default 0)")
    p.add_argument("--sign", choices=SIGN_CONFIGS)
    p.add_argument("--zero-link", dest="zero_link", choices=ZERO_LINKS)
    p.add_argument("--rho", type=float, help="support overlap between W0 and W1")
    p.add_argument("--dispersion", type=float)
    p.add_argument("--gamma-mean", dest="gamma_mean", type=float)
    p.add_argument("--delta-mean", dest="delta_mean", type=float)
    p.add_argument("--dropout", action="store_true", default=None,
                   help="also write data_dropout.csv")
    p.add_argument("--alpha", dest="dropout_alpha", type=float, help="dropout slope (default 1)")
    p.add_argument("--q", type=float, help="dropout percentile (default 65)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="learn W0 and W1 from a count matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--alpha", type=float, help="central-path decay factor (default 0.1)")
    p.add_argument("--mu0", type=float)
    p.add_argument("--decay-interval", dest="decay_interval", type=int)
    p.add_argument("--lambda-group", dest="lambda_group", type=float)
    p.add_argument("--warm", type=int)
    p.add_argument("--lambda-align", dest="lambda_align", type=float)
    p.add_argument("--align", choices=ALIGN_NORMS)
    p.add_argument("--acyclicity", choices=("separate", "coupled"))
    p.add_argument("--s", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--clip-norm", dest="clip_norm", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score a fit against the true graph")
    p.add_argument("--fit-dir", dest="fit_dir", required=True)
    p.add_argument("--truth", required=True, help="graph.edges file or simulation directory")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("benchmark", help="run a simulate/fit/eval grid")
    p.add_argument("--config", required=True, help="benchmark spec JSON")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="fill the seconds column (makes results.csv run-dependent)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ParameterError) as exc:
        print(f"zico: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataError, KeyError, json.JSONDecodeError) as exc:
        print(f"zico: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingAborted, ArithmeticError) as exc:
        print(f"zico: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
