"""Transition kernels P_t by uniformization.

With Lambda the largest holding rate and M = I + Q / Lambda,

    P_t = sum_k Poisson(k; Lambda t) M^k,

and cutting the series at K leaves an error bounded by the Poisson tail
beyond K in every row. All entries are sums of nonnegative terms.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.stats import poisson

log = logging.getLogger(__name__)


class SeriesCapExceeded(RuntimeError):
    pass


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class UniformizationConfig:
    tolerance: float = 1e-12
    max_terms: int = 10**6

    def __post_init__(self):
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


DEFAULT_CONFIG = UniformizationConfig()


@dataclass(frozen=True)
class TransitionKernel:
    t: float
    matrix: np.ndarray
    error: float

    def row(self, x: int) -> np.ndarray:
        return self.matrix[x]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = self.matrix.shape[0]
            w.writerow(["x"] + [str(y) for y in range(n)])
            for x in range(n):
                w.writerow([x] + [repr(float(v)) for v in self.matrix[x]])


def _poisson_weights(mu: float, cfg: UniformizationConfig) -> tuple[np.ndarray, float]:
    k = int(poisson.isf(cfg.tolerance, mu))
    while poisson.sf(k, mu) >= cfg.tolerance:
        k += 1
    if k + 1 > cfg.max_terms:
        raise SeriesCapExceeded(
            f"uniformization needs {k + 1} terms (cap {cfg.max_terms}); "
            f"Lambda*t = {mu:g}")
    return poisson.pmf(np.arange(k + 1), mu), float(poisson.sf(k, mu))


def _uniformized(rates):
    q = rates.q
    total = q.sum(axis=1)
    big = float(total.max())
    if big == 0.0:
        return 0.0, None
    m = sparse.csr_matrix(q / big) + sparse.diags(1.0 - total / big)
    return big, m.tocsr()


def _clean(p: np.ndarray) -> np.ndarray:
    if np.any(p < -1e-14):
        raise ArithmeticError("uniformization produced a negative entry below -1e-14")
    neg = p < 0
    if np.any(neg):
        rows = np.any(neg, axis=-1)
        p = np.where(neg, 0.0, p)
        s = p.sum(axis=-1, keepdims=True)
        p = np.where(rows[..., None] if p.ndim > 1 else rows, p / s, p)
    return p


def transition_matrix(rates, t: float, cfg: UniformizationConfig = DEFAULT_CONFIG
                      ) -> TransitionKernel:
    """Dense P_t for a finite chain."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = rates.n_states
    big, m = _uniformized(rates)
    if t == 0 or big == 0.0:
        return TransitionKernel(t, np.eye(n), 0.0)
    weights, err = _poisson_weights(big * t, cfg)
    term = np.eye(n)
    p = weights[0] * term
    for w in weights[1:]:
        term = m @ term
        p += w * term
    return TransitionKernel(t, _clean(p), err)


def _propagate(rates, v: np.ndarray, t: float, cfg: UniformizationConfig,
               left: bool) -> np.ndarray:
    """sum_k w_k M^k v (right action) or v M^k (left action)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    big, m = _uniformized(rates)
    if t == 0 or big == 0.0:
        return np.array(v, dtype=float)
    weights, _ = _poisson_weights(big * t, cfg)
    op = m.T.tocsr() if left else m
    term = np.array(v, dtype=float)
    out = weights[0] * term
    for w in weights[1:]:
        term = op @ term
        out += w * term
    return out


def apply_semigroup(rates, f, t: float, cfg: UniformizationConfig = DEFAULT_CONFIG
                    ) -> np.ndarray:
    """P_t f(x) = sum_y f(y) P_t(x, y) for every x."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != rates.n_states:
        raise ValueError("function and chain sizes disagree")
    return _propagate(rates, f, t, cfg, left=False)


def _check_start(rates, x0: int) -> None:
    if not 0 <= x0 < rates.n_states:
        raise ValueError(f"start state {x0} outside 0..{rates.n_states - 1}")


def kernel_row(rates, x0: int, t: float, cfg: UniformizationConfig = DEFAULT_CONFIG,
               warn: bool = True) -> np.ndarray:
    """P_t(x0, .) as a probability vector."""
    _check_start(rates, x0)
    e = np.zeros(rates.n_states)
    e[x0] = 1.0
    row = _clean(_propagate(rates, e, t, cfg, left=True))
    if warn and getattr(rates, "truncated", False):
        mass = float(row[-_margin(rates):].sum())
        log.debug("tail mass at (x0=%d, t=%g): %.3e", x0, t, mass)
        if mass > 1e-8:
            warnings.warn(f"truncation tail mass {mass:.3e} at x0={x0}, t={t}",
                          TruncationWarning, stacklevel=2)
    return row


def expectation(rates, x0: int, f, t: float,
                cfg: UniformizationConfig = DEFAULT_CONFIG) -> float:
    """E_x0[f(X_t)]."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != rates.n_states:
        raise ValueError("function and chain sizes disagree")
    return float(kernel_row(rates, x0, t, cfg) @ f)


def _margin(rates) -> int:
    return max(1, int(getattr(rates, "margin", 2)))


def truncation_tail_mass(rates, x0: int, t: float, margin: int | None = None,
                         cfg: UniformizationConfig = DEFAULT_CONFIG) -> float:
    """Mass P_t(x0, .) puts on the top ``margin`` states.

    Starting inside the margin is flagged with a TruncationWarning since the
    returned mass then reflects the start rather than leakage.
    """
    margin = _margin(rates) if margin is None else margin
    if margin < 1:
        raise ValueError("margin must be >= 1")
    _check_start(rates, x0)
    if x0 >= rates.n_states - margin:
        warnings.warn(f"start state {x0} lies inside the truncation margin",
                      TruncationWarning, stacklevel=2)
    row = kernel_row(rates, x0, t, cfg, warn=False)
    return float(row[-margin:].sum())
