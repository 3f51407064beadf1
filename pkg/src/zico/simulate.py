"""Synthetic zero-inflated count data by ancestral sampling on a DAG."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ParameterError
from .graph import DagGraph, SupportMasks, write_edges
from .models import ZERO_INFLATED, Dataset, check_family

log = logging.getLogger(__name__)

SIGN_CONFIGS = ("++", "--", "+-", "-+")
POSITIVE_RANGE = (0.5, 2.0)
NEGATIVE_RANGE = (-2.0, -0.5)
LINK_CLAMP = 30.0
ZERO_LINKS = ("count", "structural")


def check_zero_link(zero_link: str) -> str:
    if zero_link not in ZERO_LINKS:
        raise ParameterError(f"zero_link must be one of {ZERO_LINKS}, got {zero_link!r}")
    return zero_link


def parse_sign(sign) -> str:
    """Accept ``"+-"``, ``"(+,-)"``, ``("+", "-")`` and return the compact form."""
    if isinstance(sign, (tuple, list)):
        sign = "".join(sign)
    compact = "".join(ch for ch in str(sign) if ch in "+-")
    if compact not in SIGN_CONFIGS:
        raise ParameterError(f"unknown sign configuration {sign!r}")
    return compact


def sign_ranges(sign) -> tuple:
    sign = parse_sign(sign)
    pick = {"+": POSITIVE_RANGE, "-": NEGATIVE_RANGE}
    return pick[sign[0]], pick[sign[1]]


@dataclass
class SimParams:
    graph: DagGraph
    true_w0: np.ndarray
    true_w1: np.ndarray
    true_gamma: np.ndarray
    true_delta: np.ndarray
    true_r: np.ndarray
    sign_config: str = "+-"
    w0_range: tuple = (0.5, 2.0)
    w1_range: tuple = (-2.0, -0.5)
    family: str = "zinb"
    zero_link: str = "count"

    def scalars(self) -> dict:
        return {
            "d": self.graph.d,
            "n_edges": self.graph.n_edges,
            "sign_config": self.sign_config,
            "w0_range": list(self.w0_range),
            "w1_range": list(self.w1_range),
            "family": self.family,
            "zero_link": self.zero_link,
            "gamma": self.true_gamma.tolist(),
            "delta": self.true_delta.tolist(),
            "r": self.true_r.tolist(),
        }


def sample_params(graph: DagGraph, sign_config="+-", w0_range=None, w1_range=None,
                  masks: SupportMasks | None = None, gamma_mean=1.5, delta_mean=1.5,
                  intercept_sd=0.2, dispersion=5.0, family="zinb", zero_link="count",
                  seed=None) -> SimParams:
    """Draw edge weights, intercepts and dispersions for ``graph``.

    Edge magnitudes are uniform on the ranges implied by ``sign_config``
    (``(0.5, 2)`` for ``+`` and ``(-2, -0.5)`` for ``-``) unless explicit
    ranges are passed. With ``masks``, zero-component weights live on
    ``masks.m0`` and count-component weights on ``masks.m1``.

    ``zero_link`` says what the logistic link models: ``"count"`` (default)
    makes sigmoid(gamma + x w0) the probability of drawing from the count
    component; ``"structural"`` makes it the probability of a structural
    zero, so positive W0 weights push children towards zero.
    """
    check_zero_link(zero_link)
    sign_config = parse_sign(sign_config)
    r0, r1 = sign_ranges(sign_config)
    w0_range = tuple(w0_range or r0)
    w1_range = tuple(w1_range or r1)
    family = check_family(family)
    d = graph.d
    rng = np.random.default_rng(seed)
    if masks is None:
        s0 = s1 = graph.adjacency().astype(bool)
    else:
        s0, s1 = np.asarray(masks.m0, bool), np.asarray(masks.m1, bool)
        if np.any((s0 | s1) & ~graph.adjacency().astype(bool)):
            raise ParameterError("support masks contain non-edges of the graph")
    u0 = rng.uniform(w0_range[0], w0_range[1], size=(d, d))
    u1 = rng.uniform(w1_range[0], w1_range[1], size=(d, d))
    w0 = np.where(s0, u0, 0.0) if family in ZERO_INFLATED else np.zeros((d, d))
    w1 = np.where(s1, u1, 0.0)
    gamma = rng.normal(gamma_mean, intercept_sd, size=d)
    delta = rng.normal(delta_mean, intercept_sd, size=d)
    r = np.full(d, float(dispersion))
    return SimParams(graph, w0, w1, gamma, delta, r, sign_config, w0_range, w1_range, family,
                     zero_link)


def logic_sample(sp: SimParams, n: int, seed=None) -> Dataset:
    """Forward-sample ``n`` rows node by node in topological order.

    A cell is a structural zero with probability ``1 - pi`` (``pi`` itself
    under ``zero_link="structural"``); otherwise it is
    drawn from NB(mean mu, dispersion r) as a Gamma-Poisson mixture, or from
    Poisson(mu) for the ZIP family. The NB and Poisson families have no
    structural zeros. Count-link predictors are clamped to
    +-30; the number of clamped cells is stored in ``meta["clamped"]``.
    """
    if n < 1:
        raise ParameterError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    d = sp.graph.d
    x = np.zeros((n, d))
    clamped = 0
    for j in sp.graph.topo_order:
        pi = expit(sp.true_gamma[j] + x @ sp.true_w0[:, j])
        if sp.zero_link == "structural":
            pi = 1.0 - pi
        eta = sp.true_delta[j] + x @ sp.true_w1[:, j]
        over = np.abs(eta) > LINK_CLAMP
        clamped += int(over.sum())
        mu = np.exp(np.clip(eta, -LINK_CLAMP, LINK_CLAMP))
        if sp.family in ZERO_INFLATED:
            keep = rng.random(n) < pi
        else:
            keep = np.ones(n, dtype=bool)
        if sp.family in ("zinb", "nb"):
            r = sp.true_r[j]
            lam = rng.gamma(r, mu / r)
        else:
            lam = mu
        counts = rng.poisson(lam).astype(float)
        x[:, j] = np.where(keep, counts, 0.0)
    if clamped:
        log.warning("clamped %d count-link predictors to +-%g", clamped, LINK_CLAMP)
    data = Dataset(x)
    data.meta = {"clamped": clamped}
    return data


@dataclass(frozen=True)
class DropoutConfig:
    slope: float = 1.0
    percentile: float = 65.0
    seed: int | None = None

    def __post_init__(self):
        if not self.slope > 0:
            raise ParameterError("dropout slope must be positive")
        if not 0 < self.percentile < 100:
            raise ParameterError("percentile must lie in (0, 100)")


def retention_probability(x, slope: float, percentile: float) -> np.ndarray:
    z = np.log1p(np.asarray(x, dtype=float))
    m = np.percentile(z, percentile)  # linear interpolation between order statistics
    if np.isinf(slope):
        return np.where(z > m, 1.0, np.where(z < m, 0.0, 0.5))
    return expit(slope * (z - m))


def apply_dropout(x, cfg: DropoutConfig | None = None) -> Dataset:
    """Expression-dependent dropout: keep each count w.p. sigmoid(slope * (log1p(x) - m))."""
    cfg = cfg or DropoutConfig()
    xa = x.x if isinstance(x, Dataset) else Dataset(x).x
    p = retention_probability(xa, cfg.slope, cfg.percentile)
    rng = np.random.default_rng(cfg.seed)
    mask = rng.random(xa.shape) < p
    columns = x.columns if isinstance(x, Dataset) else None
    return Dataset(np.where(mask, xa, 0.0), columns)


def write_simulation(out_dir, sp: SimParams, data: Dataset, seed, extra: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data.to_csv(out / "data.csv")
    np.savetxt(out / "truth_w0.csv", sp.true_w0, delimiter=",", fmt="%.17g")
    np.savetxt(out / "truth_w1.csv", sp.true_w1, delimiter=",", fmt="%.17g")
    write_edges(sp.graph, out / "graph.edges")
    meta = sp.scalars()
    meta["seed"] = seed
    meta["n"] = data.n
    meta.update(extra or {})
    (out / "sim.json").write_text(json.dumps(meta, indent=2))
