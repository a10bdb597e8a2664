"""Closed-form staggered vertex model solving the pure-Y rotation case.

The transfer matrix over two rows of the tilted lattice is diagonal in the
arrow variables and depends only on ``p = O(sigma) / 2``:
``T(p) = 2 eps**(2p) r**(2 lx) (1 + cosh(2 p log r))`` with ``r = R / (2 - R)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .noise import ValidationError

__all__ = [
    "DEFAULT_EPSILON",
    "StaggeredVertexParams",
    "small_r",
    "transfer_element",
    "exact_correlation_length",
    "finite_correlation_length",
    "order_parameter",
    "anyon_constants",
]

DEFAULT_EPSILON = 1.0 + 1e-6


def small_r(big_r: float) -> float:
    """``r = R / (2 - R)``."""
    if not 0.0 <= big_r <= 1.0:
        raise ValidationError(f"R={big_r} outside [0, 1]")
    return big_r / (2.0 - big_r)


@dataclass(frozen=True)
class StaggeredVertexParams:
    r: float
    epsilon: float = 1.0
    lx: int = 8
    ly: int = 8

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValidationError(f"r={self.r} outside [0, 1]")
        if not self.epsilon >= 1.0:
            raise ValidationError("epsilon must be >= 1")
        if self.lx < 1 or self.ly < 1:
            raise ValidationError("lx and ly must be positive")

    @classmethod
    def from_big_r(cls, big_r: float, **kw) -> "StaggeredVertexParams":
        return cls(small_r(big_r), **kw)


def _log1p_cosh(x):
    """``log(1 + cosh x)`` without overflow."""
    x = np.abs(np.asarray(x, dtype=float))
    log_cosh = x + np.log1p(np.exp(-2 * x)) - math.log(2)
    return np.logaddexp(0.0, log_cosh)


def transfer_element(p: int, params: StaggeredVertexParams) -> float:
    """Diagonal two-row transfer element for arrow imbalance ``2p``."""
    lx = params.lx
    if abs(p) > lx:
        raise ValidationError(f"|p|={abs(p)} exceeds lx={lx}")
    r, eps = params.r, params.epsilon
    # 2 r^{2lx} (1 + cosh(2p log r)) = 2 r^{2lx} + r^{2(lx+p)} + r^{2(lx-p)};
    # this form stays finite at r = 0
    return float(eps ** (2 * p) * (2 * r ** (2 * lx) + r ** (2 * (lx + p)) + r ** (2 * (lx - p))))


def exact_correlation_length(big_r: float) -> float:
    """``xi = -1 / (2 log r)``; ``inf`` at ``R = 1``."""
    r = small_r(big_r)
    if r == 0.0:
        return 0.0
    if r == 1.0:
        return math.inf
    return -1.0 / (2.0 * math.log(r))


def finite_correlation_length(big_r: float, lx: int) -> float:
    """Finite-width ratio of the two largest transfer elements."""
    if lx < 1:
        raise ValidationError("lx must be positive")
    r = small_r(big_r)
    if r == 0.0:
        return 0.0
    if r == 1.0:
        return math.inf
    lr = math.log(r)
    gap = _log1p_cosh(2 * (lx - 1) * lr) - _log1p_cosh(2 * lx * lr)
    return float(-1.0 / gap)


def _log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def order_parameter(params: StaggeredVertexParams) -> float:
    """Normalized arrow imbalance ``<O> / (2 lx)`` on a ``2lx x 2ly`` tilted lattice."""
    lx, ly = params.lx, params.ly
    p = np.arange(-lx, lx + 1)
    if params.r == 0.0:
        # only |p| = lx survives the cosh term
        bracket = np.where(np.abs(p) == lx, -math.log(2.0), -np.inf)
        log_term = np.where(p == 0, math.log(2.0), bracket) if lx == 0 else bracket
    else:
        log_term = _log1p_cosh(2 * p * math.log(params.r))
    logw = _log_binom(2 * lx, lx + p) + 2 * ly * p * math.log(params.epsilon) + ly * log_term
    if not np.all(np.isfinite(logw[np.isfinite(log_term)])):
        raise ArithmeticError("order parameter overflowed in log space")
    norm = logsumexp(logw)
    pos = logsumexp(logw, b=np.where(p > 0, p, 0.0))
    neg = logsumexp(logw, b=np.where(p < 0, -p, 0.0))
    return float((math.exp(pos - norm) - math.exp(neg - norm)) / lx)


def anyon_constants(big_r: float) -> tuple[float, float, float, float]:
    """Thermodynamic anyon parameters for ``R < 1``: no condensation, both
    anyon types deconfined."""
    if not 0.0 <= big_r < 1.0:
        raise ValidationError("anyon constants are fixed only for 0 <= R < 1")
    return (0.0, 1.0, 0.0, 1.0)
