"""The penalised objective and its mini-batch AdamW solver.

objective = mu * (NLL_batch + lambda_eff * sum_{k != j} ||(W0_kj, W1_kj)||_2)
            + h(W0) + h(W1)                       (separate acyclicity)
              or h(sqrt(W0^2 + W1^2 + eps))      (coupled acyclicity)
            + lambda_align * ||W0 - W1||          (Frobenius^2 or l1)
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import acyclicity
from .acyclicity import COUPLED, SEPARATE
from .errors import DomainError, ParameterError, TrainingAborted
from .models import ZERO_INFLATED, Dataset, ModelParams, _nll_and_grad, check_family

log = logging.getLogger(__name__)

ALIGN_NORMS = ("frobenius", "l1", "none")
TRACE_FIELDS = ("epoch", "objective", "nll", "h0", "h1", "mu", "lambda_eff")
MAX_HALVINGS = 10
MAX_REJECTED = 10


@dataclass
class TrainConfig:
    epochs: int = 4000
    mu0: float = 1.0
    alpha: float = 0.1
    decay_interval: int | None = None  # None -> epochs // 4
    lambda_group: float = 0.001
    warm: int | None = None  # None -> epochs // 10
    lambda_align: float = 0.1
    align_norm: str = "l1"
    acyclicity_mode: str = SEPARATE
    s: float = 1.0
    epsilon: float = 1e-8
    batch_size: int = 256
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    clip_norm: float = 5.0
    threshold: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.decay_interval is None:
            self.decay_interval = max(1, self.epochs // 4)
        if self.warm is None:
            self.warm = max(1, self.epochs // 10)
        self.align_norm = str(self.align_norm).lower()
        self.validate()

    def validate(self):
        checks = [
            (self.epochs >= 1, "epochs must be >= 1"),
            (0 < self.alpha < 1, "alpha must lie in (0, 1)"),
            (self.mu0 > 0, "mu0 must be positive"),
            (self.decay_interval >= 1, "decay_interval must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.warm >= 1, "warm must be >= 1"),
            (self.threshold >= 0, "threshold must be >= 0"),
            (self.lambda_group >= 0, "lambda_group must be >= 0"),
            (self.lambda_align >= 0, "lambda_align must be >= 0"),
            (self.align_norm in ALIGN_NORMS, f"align_norm must be one of {ALIGN_NORMS}"),
            (self.acyclicity_mode in (SEPARATE, COUPLED), "acyclicity_mode must be separate or coupled"),
            (self.s > 0, "s must be positive"),
            (self.clip_norm > 0, "clip_norm must be positive"),
            (self.learning_rate > 0, "learning_rate must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ParameterError(msg)
        if self.acyclicity_mode == COUPLED and not self.epsilon > 0:
            raise ParameterError("coupled acyclicity needs epsilon > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def central_path_mu(epoch: int, cfg: TrainConfig) -> float:
    return cfg.mu0 * cfg.alpha ** (epoch // cfg.decay_interval)


def lambda_eff(epoch: int, cfg: TrainConfig) -> float:
    """Cosine warm-up of the group penalty weight, reaching lambda_group at ``warm``."""
    frac = min(1.0, epoch / cfg.warm)
    return cfg.lambda_group / 2.0 * (1.0 - math.cos(frac * math.pi))


def group_penalty(w0, w1):
    """Sum of pairwise l2 norms over off-diagonal entries, with its subgradient."""
    norm = np.sqrt(w0 * w0 + w1 * w1)
    np.fill_diagonal(norm, 0.0)
    safe = np.where(norm > 0, norm, 1.0)
    g0 = np.where(norm > 0, w0 / safe, 0.0)
    g1 = np.where(norm > 0, w1 / safe, 0.0)
    return float(norm.sum()), g0, g1


def alignment_penalty(w0, w1, norm: str):
    diff = w0 - w1
    if norm == "frobenius":
        return float((diff * diff).sum()), 2.0 * diff
    if norm == "l1":
        return float(np.abs(diff).sum()), np.sign(diff)
    return 0.0, np.zeros_like(diff)


def _objective(xb, params: ModelParams, cfg: TrainConfig, epoch: int):
    mu = central_path_mu(epoch, cfg)
    lam = lambda_eff(epoch, cfg)
    nll, grads = _nll_and_grad(xb, params)
    zi = params.family in ZERO_INFLATED
    w0, w1 = params.w0, params.w1

    gp, gg0, gg1 = group_penalty(w0, w1)
    value = mu * (nll + lam * gp)
    grads.w0 = mu * (grads.w0 + lam * gg0)
    grads.w1 = mu * (grads.w1 + lam * gg1)
    grads.gamma = mu * grads.gamma
    grads.delta = mu * grads.delta
    grads.r_raw = mu * grads.r_raw

    if not zi:
        h1, hg1 = acyclicity.h_and_grad(w1, cfg.s)
        h0 = 0.0
        grads.w1 += hg1
        value += h1
    elif cfg.acyclicity_mode == COUPLED:
        h0, hg0, hg1 = acyclicity.coupled_h_and_grad(w0, w1, cfg.s, cfg.epsilon)
        h1 = h0
        grads.w0 += hg0
        grads.w1 += hg1
        value += h0
    else:
        h0, hg0 = acyclicity.h_and_grad(w0, cfg.s)
        h1, hg1 = acyclicity.h_and_grad(w1, cfg.s)
        grads.w0 += hg0
        grads.w1 += hg1
        value += h0 + h1

    if zi and cfg.lambda_align > 0 and cfg.align_norm != "none":
        ap, ag = alignment_penalty(w0, w1, cfg.align_norm)
        value += cfg.lambda_align * ap
        grads.w0 += cfg.lambda_align * ag
        grads.w1 -= cfg.lambda_align * ag

    if not zi:
        grads.w0[:] = 0.0
        grads.gamma[:] = 0.0
    np.fill_diagonal(grads.w0, 0.0)
    np.fill_diagonal(grads.w1, 0.0)
    parts = {"nll": nll, "h0": h0, "h1": h1, "mu": mu, "lambda_eff": lam}
    return value, grads, parts


def objective(x, params: ModelParams, rows, cfg: TrainConfig, epoch: int):
    """Objective value on the mini-batch ``rows`` and its gradient (a ModelParams)."""
    xa = x.x if isinstance(x, Dataset) else Dataset(x).x
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise ParameterError("batch is empty")
    value, grads, _ = _objective(xa[rows], params, cfg, epoch)
    return value, grads


def trainable(family: str) -> tuple:
    if family == "zinb":
        return ("w0", "w1", "gamma", "delta", "r_raw")
    if family == "zip":
        return ("w0", "w1", "gamma", "delta")
    if family == "nb":
        return ("w1", "delta", "r_raw")
    return ("w1", "delta")


def clip_gradients(grads: dict, clip_norm: float):
    """Scale ``grads`` in place so the global l2 norm is at most ``clip_norm``."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > clip_norm:
        scale = clip_norm / total
        for g in grads.values():
            g *= scale
    return total


class AdamW:
    """Adam with decoupled weight decay (weights shrink by lr * weight_decay each step)."""

    def __init__(self, shapes: dict, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr, self.beta1, self.beta2 = lr, beta1, beta2
        self.eps, self.weight_decay = eps, weight_decay
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0

    def step(self, values: dict, grads: dict) -> dict:
        """Return the additive update for each parameter block."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        updates = {}
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            step = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            updates[k] = -self.lr * self.weight_decay * values[k] - step
        return updates


@dataclass
class FitResult:
    params: ModelParams
    trace: list
    elapsed_seconds: float
    config: TrainConfig
    rejected_steps: int = 0

    @property
    def family(self) -> str:
        return self.params.family

    @property
    def w0(self) -> np.ndarray | None:
        return self.params.w0 if self.family in ZERO_INFLATED else None

    @property
    def w1(self) -> np.ndarray:
        return self.params.w1

    @property
    def loss_trace(self) -> np.ndarray:
        return np.array([row["objective"] for row in self.trace])

    @property
    def h_trace(self) -> np.ndarray:
        return np.array([(row["h0"], row["h1"]) for row in self.trace])

    def adjacency(self, threshold: float | None = None) -> np.ndarray:
        """Directed edges ``k -> j`` where ``|W0_kj|`` or ``|W1_kj|`` exceeds the threshold."""
        t = self.config.threshold if threshold is None else threshold
        adj = binarize(self.params.w1, t)
        if self.w0 is not None:
            adj |= binarize(self.params.w0, t)
        return adj

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "w0.csv", self.params.w0, delimiter=",", fmt="%.17g")
        np.savetxt(out / "w1.csv", self.params.w1, delimiter=",", fmt="%.17g")
        write_trace(self.trace, out / "trace.csv")
        final = self.trace[-1] if self.trace else {}
        summary = {
            "family": self.family,
            "elapsed_seconds": self.elapsed_seconds,
            "final_objective": final.get("objective"),
            "final_nll": final.get("nll"),
            "final_h0": final.get("h0"),
            "final_h1": final.get("h1"),
            "rejected_steps": self.rejected_steps,
            "gamma": self.params.gamma.tolist(),
            "delta": self.params.delta.tolist(),
            "r": self.params.r.tolist(),
            "config": self.config.to_dict(),
        }
        (out / "fit.json").write_text(json.dumps(summary, indent=2))


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        writer.writeheader()
        for row in trace:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in TRACE_FIELDS})


def binarize(w, threshold: float) -> np.ndarray:
    """Boolean adjacency with ``k -> j`` iff ``|w_kj| > threshold`` (diagonal dropped)."""
    if threshold < 0:
        raise ParameterError("threshold must be >= 0")
    adj = np.abs(np.asarray(w, dtype=float)) > threshold
    np.fill_diagonal(adj, False)
    return adj


def _apply(params: ModelParams, base: dict, update: dict, scale: float):
    for k, u in update.items():
        setattr(params, k, base[k] + scale * u)
    np.fill_diagonal(params.w0, 0.0)
    np.fill_diagonal(params.w1, 0.0)


def fit(x, family: str = "zinb", cfg: TrainConfig | None = None,
        init: ModelParams | None = None, record_grad_norms: list | None = None,
        callback=None) -> FitResult:
    """Learn ``(W0, W1)`` by mini-batch AdamW on the penalised objective.

    One epoch is a full pass over shuffled mini-batches. The central-path
    multiplier and the group-penalty weight are updated per epoch. A step
    that leaves the acyclicity domain is halved up to ten times before it
    is dropped; more than ten dropped steps in a row abort the fit.
    """
    cfg = cfg or TrainConfig()
    family = check_family(family)
    data = x if isinstance(x, Dataset) else Dataset(x)
    xa = data.x
    n = data.n
    params = init.copy() if init is not None else ModelParams.initial(data, family)
    if params.family != family:
        raise ParameterError(f"initial params are {params.family!r}, asked for {family!r}")
    keys = trainable(family)
    opt = AdamW({k: getattr(params, k).shape for k in keys}, cfg.learning_rate,
                cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    bs = min(cfg.batch_size, n)
    trace = []
    prev, update = None, None
    rejected_total = 0
    consecutive = 0
    start = time.perf_counter()

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        obj_sum = nll_sum = 0.0
        n_batches = 0
        parts = None
        for lo in range(0, n, bs):
            xb = xa[order[lo:lo + bs]]
            scale = 1.0
            for attempt in range(MAX_HALVINGS + 2):
                try:
                    value, grads, parts = _objective(xb, params, cfg, epoch)
                    break
                except DomainError:
                    if prev is None:
                        raise TrainingAborted("initial parameters are outside the acyclicity domain", trace)
                    if attempt < MAX_HALVINGS:
                        scale /= 2.0
                        _apply(params, prev, update, scale)
                    else:
                        _apply(params, prev, update, 0.0)
            else:  # pragma: no cover - the reset point was evaluated before
                raise TrainingAborted("could not recover an in-domain point", trace)
            if scale < 1.0:
                rejected_total += 1
            if prev is not None and attempt > MAX_HALVINGS:
                consecutive += 1
                if consecutive > MAX_REJECTED:
                    raise TrainingAborted(
                        f"epoch {epoch}: more than {MAX_REJECTED} consecutive steps rejected", trace)
            else:
                consecutive = 0
            if not np.isfinite(value):
                raise TrainingAborted(f"epoch {epoch}: objective is {value}", trace)

            g = {k: getattr(grads, k) for k in keys}
            if not all(np.all(np.isfinite(v)) for v in g.values()):
                raise TrainingAborted(f"epoch {epoch}: non-finite gradient", trace)
            clip_gradients(g, cfg.clip_norm)
            if record_grad_norms is not None:
                record_grad_norms.append(math.sqrt(sum(float((v * v).sum()) for v in g.values())))
            prev = {k: getattr(params, k).copy() for k in keys}
            update = opt.step(prev, g)
            _apply(params, prev, update, 1.0)

            obj_sum += value
            nll_sum += parts["nll"]
            n_batches += 1

        trace.append({
            "epoch": epoch,
            "objective": obj_sum / n_batches,
            "nll": nll_sum / n_batches,
            "h0": parts["h0"],
            "h1": parts["h1"],
            "mu": parts["mu"],
            "lambda_eff": parts["lambda_eff"],
        })
        if callback is not None:
            callback(epoch, params)

    # the last update has not been checked against the domain yet
    params = _settle(params, prev, update, cfg)
    elapsed = time.perf_counter() - start
    return FitResult(params, trace, elapsed, cfg, rejected_total)


def _in_domain(params: ModelParams, cfg: TrainConfig) -> bool:
    if params.family not in ZERO_INFLATED:
        return acyclicity.in_domain(params.w1, cfg.s)
    if cfg.acyclicity_mode == COUPLED:
        return acyclicity.in_domain(acyclicity.pool_coupled(params.w0, params.w1, cfg.epsilon), cfg.s)
    return acyclicity.in_domain(params.w0, cfg.s) and acyclicity.in_domain(params.w1, cfg.s)


def _settle(params, prev, update, cfg):
    if prev is None or _in_domain(params, cfg):
        return params
    scale = 1.0
    for _ in range(MAX_HALVINGS):
        scale /= 2.0
        _apply(params, prev, update, scale)
        if _in_domain(params, cfg):
            return params
    _apply(params, prev, update, 0.0)
    return params
