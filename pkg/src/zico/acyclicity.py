"""Log-determinant acyclicity function on the M-matrix domain.

``h(W) = -log det(sI - W*W) + d log s`` is zero exactly when the support of
``W`` is acyclic and positive otherwise, as long as ``sI - W*W`` stays a
nonsingular M-matrix. The factorisation below runs Gaussian elimination
without pivoting: for a Z-matrix every pivot is positive iff all leading
principal minors are, which is precisely the domain condition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_solve

from .errors import DomainError, ParameterError

SEPARATE, COUPLED = "separate", "coupled"


@dataclass(frozen=True)
class AcyclicityConfig:
    s: float = 1.0
    mode: str = SEPARATE
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.s > 0:
            raise ParameterError(f"s must be positive, got {self.s}")
        if self.mode not in (SEPARATE, COUPLED):
            raise ParameterError(f"mode must be {SEPARATE!r} or {COUPLED!r}")
        if self.mode == COUPLED and not self.epsilon > 0:
            raise ParameterError("coupled mode needs epsilon > 0")


def _square(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {w.shape}")
    return w


def m_matrix_lu(a: np.ndarray) -> np.ndarray:
    """Packed unpivoted LU of ``a``; raises DomainError on a non-positive pivot."""
    lu = np.array(a, dtype=float)
    d = lu.shape[0]
    for k in range(d):
        piv = lu[k, k]
        if not piv > 0.0 or not np.isfinite(piv):
            raise DomainError(f"pivot {k} is {piv:.3g}; sI - W*W is not an M-matrix")
        if k + 1 < d:
            lu[k + 1:, k] /= piv
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu


def _factor(w: np.ndarray, s: float):
    d = w.shape[0]
    a = s * np.eye(d) - w * w
    lu = m_matrix_lu(a)
    h = -float(np.log(np.diag(lu)).sum()) + d * np.log(s)
    return h, lu


def h_ldet(w, s: float = 1.0) -> float:
    w = _square(w)
    return _factor(w, s)[0]


def h_and_grad(w, s: float = 1.0):
    """Value and gradient ``2 (sI - W*W)^{-T} * W`` sharing one factorisation."""
    w = _square(w)
    h, lu = _factor(w, s)
    d = w.shape[0]
    inv = lu_solve((lu, np.arange(d)), np.eye(d))
    if not np.all(np.isfinite(inv)):
        raise DomainError("singular factorisation")
    g = 2.0 * inv.T * w
    np.fill_diagonal(g, 0.0)
    return h, g


def h_ldet_grad(w, s: float = 1.0) -> np.ndarray:
    return h_and_grad(w, s)[1]


def pool_coupled(w0, w1, epsilon: float = 1e-8) -> np.ndarray:
    """Elementwise l2 pooling ``sqrt(w0^2 + w1^2 + epsilon)``."""
    w0 = np.asarray(w0, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    if w0.shape != w1.shape:
        raise ParameterError(f"shape mismatch {w0.shape} vs {w1.shape}")
    if epsilon < 0:
        raise ParameterError("epsilon must be nonnegative")
    return np.sqrt(w0 * w0 + w1 * w1 + epsilon)


def coupled_h_and_grad(w0, w1, s: float = 1.0, epsilon: float = 1e-8):
    """``h`` of the pooled matrix with gradients pulled back to ``w0`` and ``w1``."""
    pooled = pool_coupled(w0, w1, epsilon)
    h, lu = _factor(_square(pooled), s)
    d = pooled.shape[0]
    inv_t = lu_solve((lu, np.arange(d)), np.eye(d)).T
    # d pooled / d w = w / pooled, so the pooled factor cancels
    g0 = 2.0 * inv_t * w0
    g1 = 2.0 * inv_t * w1
    np.fill_diagonal(g0, 0.0)
    np.fill_diagonal(g1, 0.0)
    return h, g0, g1


def in_domain(w, s: float = 1.0) -> bool:
    try:
        _factor(_square(w), s)
    except DomainError:
        return False
    return True
