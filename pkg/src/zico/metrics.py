"""Structure-recovery metrics: SHD, TPR/FDR and precision-recall area."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .graph import DagGraph


def _adj(g) -> np.ndarray:
    if isinstance(g, DagGraph):
        return g.adjacency().astype(bool)
    a = np.asarray(g)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"adjacency must be square, got shape {a.shape}")
    a = a != 0
    np.fill_diagonal(a, False)
    return a


def _pair(pred, truth):
    p, t = _adj(pred), _adj(truth)
    if p.shape != t.shape:
        raise ParameterError(f"node counts differ: {p.shape[0]} vs {t.shape[0]}")
    return p, t


def _reversed(p, t) -> np.ndarray:
    """Predicted edges that are the exact reverse of a true single edge."""
    return p & ~p.T & t.T & ~t


@dataclass
class EvalReport:
    shd: int
    tpr: float
    fdr: float
    auprc: float
    auprc_ratio: float
    tp: int
    fp: int
    fn: int
    reversed: int
    n_true: int
    n_pred: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self, path) -> None:
        row = self.to_dict()
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def shd(pred, truth) -> int:
    """Structural Hamming distance; a reversed edge costs one edit."""
    p, t = _pair(pred, truth)
    upper = np.triu(np.ones_like(p, dtype=bool), k=1)
    diff = (p != t).astype(int)
    per_pair = diff + diff.T
    rev = _reversed(p, t)
    rev_pair = rev | rev.T
    cost = np.where(rev_pair, 1, per_pair)
    return int(cost[upper].sum())


def classification_rates(pred, truth):
    """Return ``(tpr, fdr, counts)`` for directed edges."""
    p, t = _pair(pred, truth)
    tp = int((p & t).sum())
    fp = int((p & ~t).sum())
    fn = int((t & ~p).sum())
    n_true, n_pred = int(t.sum()), int(p.sum())
    counts = {"tp": tp, "fp": fp, "fn": fn, "reversed": int(_reversed(p, t).sum()),
              "n_true": n_true, "n_pred": n_pred}
    return tp / max(1, n_true), fp / max(1, n_pred), counts


def auprc(scores, truth) -> float:
    """Step-wise area under the precision-recall curve over off-diagonal pairs.

    Tied scores enter as one block: ``sum_k (R_k - R_{k-1}) * P_k``.
    """
    s = np.asarray(scores, dtype=float)
    t = _adj(truth)
    if s.shape != t.shape:
        raise ParameterError(f"scores {s.shape} do not match truth {t.shape}")
    off = ~np.eye(s.shape[0], dtype=bool)
    y = t[off]
    v = s[off]
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ParameterError("AUPRC is undefined for a graph without edges")
    order = np.argsort(-v, kind="stable")
    v, y = v[order], y[order]
    tp = np.cumsum(y)
    # last index of each block of tied scores
    ends = np.flatnonzero(np.r_[v[1:] != v[:-1], True])
    tp_b = tp[ends]
    precision = tp_b / (ends + 1)
    recall = tp_b / n_pos
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def random_auprc(truth) -> float:
    t = _adj(truth)
    d = t.shape[0]
    return float(t.sum() / (d * (d - 1)))


def combine_scores(w0, w1) -> np.ndarray:
    """Edge scores ``sqrt(w0^2 + w1^2)``; ``w0=None`` gives ``|w1|``."""
    w1 = np.asarray(w1, dtype=float)
    if w0 is None:
        return np.abs(w1)
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != w1.shape:
        raise ParameterError(f"shape mismatch {w0.shape} vs {w1.shape}")
    return np.sqrt(w0 * w0 + w1 * w1)


def evaluate(pred, scores, truth) -> EvalReport:
    tpr, fdr, c = classification_rates(pred, truth)
    area = auprc(scores, truth)
    return EvalReport(
        shd=shd(pred, truth), tpr=tpr, fdr=fdr, auprc=area,
        auprc_ratio=area / random_auprc(truth), tp=c["tp"], fp=c["fp"], fn=c["fn"],
        reversed=c["reversed"], n_true=c["n_true"], n_pred=c["n_pred"],
    )
