"""Node-wise zero-inflated count likelihoods (ZINB, ZIP, NB, Poisson).

Every quantity is evaluated in the log domain. The zero-link probability
``pi`` is the weight of the count component, so ``1 - pi`` is the
probability of a structural zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import digamma, expit, gammaln

from .errors import DataError, ParameterError

ZINB, ZIP, NB, POISSON = "zinb", "zip", "nb", "poisson"
FAMILIES = (ZINB, ZIP, NB, POISSON)
ZERO_INFLATED = (ZINB, ZIP)
R_MIN = 1e-6


def check_family(family: str) -> str:
    family = str(family).lower()
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return family


def softplus(z):
    return np.logaddexp(0.0, z)


def inv_softplus(y):
    return y + np.log(-np.expm1(-y))


@dataclass
class Dataset:
    """An ``n x d`` matrix of nonnegative integer counts."""

    x: np.ndarray
    columns: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x)
        if x.ndim != 2:
            raise DataError(f"count matrix must be 2-D, got shape {x.shape}")
        xf = x.astype(float)
        if not np.all(np.isfinite(xf)):
            raise DataError("count matrix contains non-finite entries")
        if np.any(xf < 0):
            raise DataError("count matrix contains negative entries")
        if np.any(xf != np.round(xf)):
            raise DataError("count matrix contains non-integer entries")
        self.x = xf
        if self.columns is None:
            self.columns = [f"X{j}" for j in range(x.shape[1])]
        elif len(self.columns) != x.shape[1]:
            raise DataError("column names do not match the number of columns")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            writer.writerows(self.x.astype(np.int64).tolist())

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise DataError(f"{path}: empty file")
        header, body = rows[0], rows[1:]
        try:
            x = np.array([[float(v) for v in row] for row in body], dtype=float)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
        return cls(x.reshape(len(body), len(header)), list(header))


@dataclass
class LinkValues:
    pi: np.ndarray
    mu: np.ndarray
    p: np.ndarray


@dataclass
class ModelParams:
    """Learnable parameters. ``r = softplus(r_raw)`` is the NB dispersion."""

    w0: np.ndarray
    w1: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    r_raw: np.ndarray
    family: str = ZINB

    def __post_init__(self):
        self.family = check_family(self.family)
        self.w0 = np.array(self.w0, dtype=float)
        self.w1 = np.array(self.w1, dtype=float)
        self.gamma = np.array(self.gamma, dtype=float)
        self.delta = np.array(self.delta, dtype=float)
        self.r_raw = np.array(self.r_raw, dtype=float)
        d = self.w1.shape[0]
        for name in ("w0", "w1"):
            if getattr(self, name).shape != (d, d):
                raise ParameterError(f"{name} must be {d}x{d}")
        for name in ("gamma", "delta", "r_raw"):
            if getattr(self, name).shape != (d,):
                raise ParameterError(f"{name} must have length {d}")
        np.fill_diagonal(self.w0, 0.0)
        np.fill_diagonal(self.w1, 0.0)
        if self.family not in ZERO_INFLATED:
            self.w0[:] = 0.0
            self.gamma[:] = 0.0

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def r(self) -> np.ndarray:
        return np.maximum(softplus(self.r_raw), R_MIN)

    @classmethod
    def zeros(cls, d: int, family: str = ZINB) -> "ModelParams":
        z = np.zeros((d, d))
        return cls(z, z.copy(), np.zeros(d), np.zeros(d), np.full(d, inv_softplus(1.0)), family)

    @classmethod
    def initial(cls, data: Dataset, family: str = ZINB) -> "ModelParams":
        """Zero weights, moment-matched intercepts, dispersion 1."""
        x = data.x
        nonzero = (x > 0).mean(axis=0)
        frac = np.clip(nonzero, 1e-12, 1 - 1e-12)
        gamma = np.clip(np.log(frac) - np.log1p(-frac), -4.0, 4.0)
        pos_sum = np.where(x > 0, x, 0.0).sum(axis=0)
        pos_cnt = (x > 0).sum(axis=0)
        delta = np.zeros(data.d)
        has = pos_cnt > 0
        delta[has] = np.log(pos_sum[has] / pos_cnt[has])
        params = cls.zeros(data.d, family)
        params.gamma = gamma if family in ZERO_INFLATED else np.zeros(data.d)
        params.delta = delta
        return params

    def copy(self) -> "ModelParams":
        return replace(self)

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in ("w0", "w1", "gamma", "delta", "r_raw")}

    def to_dict(self) -> dict:
        out = {k: v.tolist() for k, v in self.arrays().items()}
        out["family"] = self.family
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelParams":
        return cls(obj["w0"], obj["w1"], obj["gamma"], obj["delta"], obj["r_raw"], obj["family"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_counts(x) -> np.ndarray:
    return x.x if isinstance(x, Dataset) else Dataset(x).x


def _select(x, params: ModelParams, rows) -> np.ndarray:
    xa = _as_counts(x)
    if xa.shape[1] != params.d:
        raise ParameterError(f"data has {xa.shape[1]} columns but params have d={params.d}")
    if rows is None:
        return xa
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise ParameterError("row subset is empty")
    return xa[rows]


def link_values(x, params: ModelParams, rows=None) -> LinkValues:
    xb = _select(x, params, rows)
    pi = expit(params.gamma + xb @ params.w0)
    mu = np.exp(params.delta + xb @ params.w1)
    r = params.r
    return LinkValues(pi, mu, r / (r + mu))


def cell_terms(xb, eta_pi, eta_mu, r, family, grad=True):
    """Per-cell log-likelihood and its derivatives.

    Returns ``(ll, d_eta_pi, d_eta_mu, d_r)`` where the derivatives are taken
    with respect to the two linear predictors and the dispersion. Entries
    that do not apply to ``family`` are ``None``.
    """
    zero = xb == 0
    lgx1 = gammaln(xb + 1.0)
    if family in (ZINB, NB):
        log_r = np.log(r)
        log_rmu = np.logaddexp(log_r, eta_mu)
        log_p = log_r - log_rmu
        log_q = eta_mu - log_rmu
        count_ll = gammaln(xb + r) - gammaln(r) - lgx1 + r * log_p + xb * log_q
        log_f0 = r * log_p
    else:
        mu = np.exp(eta_mu)
        count_ll = xb * eta_mu - mu - lgx1
        log_f0 = -mu

    if family in ZERO_INFLATED:
        log_pi = -np.logaddexp(0.0, -eta_pi)
        log_1mpi = -np.logaddexp(0.0, eta_pi)
        ll = np.where(zero, np.logaddexp(log_1mpi, log_pi + log_f0), log_pi + count_ll)
    else:
        ll = count_ll
    if not grad:
        return ll, None, None, None

    if family in (ZINB, NB):
        p = np.exp(log_p)
        q = np.exp(log_q)
        d_count_mu = xb * p - r * q
        d_count_r = digamma(xb + r) - digamma(r) + log_p + q - xb * p / r
    else:
        d_count_mu = xb - mu
        d_count_r = None

    if family in ZERO_INFLATED:
        pi = np.exp(log_pi)
        # posterior weight of the count component among observed zeros
        w_count = np.where(zero, np.exp(np.minimum(log_pi + log_f0 - ll, 0.0)), 1.0)
        d_pi = np.where(zero, w_count - pi, 1.0 - pi)
        d_mu = w_count * d_count_mu
        d_r = None if d_count_r is None else w_count * d_count_r
    else:
        d_pi = None
        d_mu = d_count_mu
        d_r = d_count_r
    return ll, d_pi, d_mu, d_r


def _loglik(x, params: ModelParams, rows, families):
    if params.family not in families:
        raise ParameterError(f"family {params.family!r} not handled here; expected {families}")
    xb = _select(x, params, rows)
    eta_pi = params.gamma + xb @ params.w0
    eta_mu = params.delta + xb @ params.w1
    ll = cell_terms(xb, eta_pi, eta_mu, params.r, params.family, grad=False)[0]
    return float(ll.sum()), ll


def log_lik_zinb(x, params: ModelParams, rows=None):
    """Total and per-cell ZINB log-likelihood over ``rows`` (all rows by default)."""
    return _loglik(x, params, rows, (ZINB,))


def log_lik_zip(x, params: ModelParams, rows=None):
    return _loglik(x, params, rows, (ZIP,))


def log_lik_reduced(x, params: ModelParams, rows=None):
    """NB or Poisson log-likelihood, without the zero-inflation component."""
    return _loglik(x, params, rows, (NB, POISSON))


def log_lik(x, params: ModelParams, rows=None):
    return _loglik(x, params, rows, FAMILIES)


def nll_and_grad(x, params: ModelParams, rows=None):
    """Mean negative log-likelihood over ``rows`` and its gradient.

    The gradient is returned as a :class:`ModelParams` with the same family;
    blocks that the family does not use are zero.
    """
    xb = _select(x, params, rows)
    return _nll_and_grad(xb, params)


def _nll_and_grad(xb: np.ndarray, params: ModelParams):
    n = xb.shape[0]
    family = params.family
    eta_pi = params.gamma + xb @ params.w0
    eta_mu = params.delta + xb @ params.w1
    r = params.r
    ll, d_pi, d_mu, d_r = cell_terms(xb, eta_pi, eta_mu, r, family)
    grads = ModelParams.zeros(params.d, family)
    grads.r_raw = np.zeros(params.d)
    g_mu = -d_mu / n
    grads.w1 = xb.T @ g_mu
    grads.delta = g_mu.sum(axis=0)
    if d_pi is not None:
        g_pi = -d_pi / n
        grads.w0 = xb.T @ g_pi
        grads.gamma = g_pi.sum(axis=0)
    if d_r is not None:
        dr_draw = np.where(softplus(params.r_raw) > R_MIN, expit(params.r_raw), 0.0)
        grads.r_raw = -(d_r.sum(axis=0) / n) * dr_draw
    np.fill_diagonal(grads.w0, 0.0)
    np.fill_diagonal(grads.w1, 0.0)
    return float(-ll.sum() / n), grads
