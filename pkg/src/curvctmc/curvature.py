"""Curvature lower bounds from birth-death rates, exact curvature estimates
from the semigroup, and one-dimensional Wasserstein distances.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .chain_model import (BirthDeathRates, Metric, _metric_for, carre_du_champ,
                          gamma, gamma2)
from .semigroup import DEFAULT_CONFIG, UniformizationConfig, kernel_row, transition_matrix

log = logging.getLogger(__name__)


class InvalidCertificate(ValueError):
    pass


@dataclass(frozen=True)
class CurvatureCertificate:
    kind: str  # "wasserstein" or "gamma"
    value: float
    valid: bool
    argmin: int | None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["value"] = _json_float(self.value)
        return d


@dataclass(frozen=True)
class CurvatureEstimate:
    kind: str
    t_grid: tuple
    values: tuple
    direction: str  # "lower" or "upper" relative to the true K_t / rho_t
    skipped: int = 0

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if np.any(np.diff(t) <= 0) or np.any(t <= 0):
            raise ValueError("time grid must be positive and strictly increasing")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t_grid": list(self.t_grid),
                "estimates": [_json_float(v) for v in self.values],
                "direction": self.direction}


def _json_float(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _scan_stop(rates: BirthDeathRates) -> int:
    """Largest x included in criterion scans."""
    n = rates.n_max
    return n - rates.margin if rates.truncated else n


def wasserstein_criterion(rates: BirthDeathRates) -> CurvatureCertificate:
    """K = inf_{x>=1} lam_{x-1} - lam_x + nu_x - nu_{x-1}."""
    lam, nu = rates.birth, rates.nu
    if rates.truncated:
        lam = rates.lam  # rates of the chain on the integers
    xs = np.arange(1, _scan_stop(rates) + 1)
    if len(xs) == 0:
        return CurvatureCertificate("wasserstein", math.inf, True, None)
    vals = lam[xs - 1] - lam[xs] + nu[xs] - nu[xs - 1]
    i = int(np.argmin(vals))
    return CurvatureCertificate("wasserstein", float(vals[i]), True, int(xs[i]))


def gamma_criterion(rates: BirthDeathRates, boundary: bool = True) -> CurvatureCertificate:
    """rho = min over interior x of min(lam_{x-1} - lam_x, nu_{x+1} - nu_x).

    With ``boundary`` the one-sided terms at the end states are included:
    nu_1 - nu_0 at x = 0 and, on a finite space, lam_{N-1} - lam_N at x = N.
    Without them the bound can fail at the boundary when nu_1 < rho.
    """
    lam, nu = rates.lam, rates.nu
    n = rates.n_max
    stop = _scan_stop(rates)
    vals, where = [], []
    for x in range(1, min(stop, n - 1) + 1):
        vals.append(min(lam[x - 1] - lam[x], nu[x + 1] - nu[x]))
        where.append(x)
    if boundary:
        vals.append(nu[1] - nu[0])
        where.append(0)
        if not rates.truncated:
            vals.append(lam[n - 1] - rates.birth[n])
            where.append(n)
    if not vals:
        return CurvatureCertificate("gamma", math.inf, True, None)
    i = int(np.argmin(vals))
    rho = float(vals[i])
    return CurvatureCertificate("gamma", rho, rho >= 0, where[i])


def gamma2_gap(rates, f, rho: float) -> np.ndarray:
    """Gamma_2 f - Gamma((Gamma f)^{1/2}) - rho Gamma f, pointwise."""
    gf = gamma(rates, f)
    root = np.sqrt(gf)
    return gamma2(rates, f) - carre_du_champ(rates, root, root) - rho * gf


# ---------------------------------------------------------------------------
# Wasserstein distances

def _check_prob(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if abs(p.sum() - 1.0) > 1e-10 or np.any(p < -1e-14):
        raise ValueError(f"{name} is not a probability vector")
    return p


def w1_distance(mu, nu, d: Metric | None = None) -> float:
    """W_d for a path metric: sum_k w_k |F_mu(k) - F_nu(k)|."""
    mu = _check_prob(mu, "mu")
    nu = _check_prob(nu, "nu")
    if mu.shape != nu.shape:
        raise ValueError("distributions live on different spaces")
    w = np.ones(len(mu) - 1) if d is None else d.weights
    cdf_gap = np.cumsum(mu - nu)[:-1]
    return float(np.sum(w * np.abs(cdf_gap)))


def kantorovich_dual_gap(mu, nu, d: Metric | None, sample_fns) -> float:
    """W_d minus the best dual value among the sampled test functions.

    Each function is rescaled to Lipschitz seminorm 1; constants are dropped.
    """
    from .chain_model import lipschitz_seminorm

    mu = _check_prob(mu, "mu")
    nu = _check_prob(nu, "nu")
    best = 0.0
    for f in sample_fns:
        f = np.asarray(f, dtype=float)
        lip = lipschitz_seminorm(f, d)
        if lip == 0:
            continue
        best = max(best, abs(float(np.dot(f / lip, mu - nu))))
    return w1_distance(mu, nu, d) - best


# ---------------------------------------------------------------------------
# empirical curvatures

def kernel_contraction(rates, t: float, d: Metric | None = None, pairs: str = "adjacent",
                       cfg: UniformizationConfig = DEFAULT_CONFIG) -> float:
    """max over pairs of W_d(P_t(x, .), P_t(y, .)) / d(x, y)."""
    d = _metric_for(rates, d)
    p = transition_matrix(rates, t, cfg).matrix
    # rows of P_t sum to 1 - eps; renormalise before taking CDF differences
    p = p / p.sum(axis=1, keepdims=True)
    cdf = np.cumsum(p, axis=1)[:, :-1]
    if pairs == "adjacent":
        ratios = np.abs(cdf[1:] - cdf[:-1]) @ d.weights / d.weights
        return float(ratios.max())
    if pairs != "all":
        raise ValueError("pairs must be 'adjacent' or 'all'")
    dm = d.matrix()
    best = 0.0
    n = rates.n_states
    for x in range(n):
        gaps = np.abs(cdf[x + 1:] - cdf[x]) @ d.weights
        if len(gaps):
            best = max(best, float(np.max(gaps / dm[x, x + 1:])))
    return best


def wasserstein_curvature_estimate(rates, t_grid, d: Metric | None = None,
                                   cfg: UniformizationConfig = DEFAULT_CONFIG
                                   ) -> CurvatureEstimate:
    """K_t = -(1/t) log max_x W_d(P_t(x, .), P_t(x+1, .)) / d(x, x+1).

    Exact on a finite path-metric space, so the criterion value must not
    exceed it.
    """
    vals = []
    for t in t_grid:
        r = kernel_contraction(rates, t, d, cfg=cfg)
        vals.append(math.inf if r == 0 else -math.log(r) / t)
    return CurvatureEstimate("wasserstein", tuple(float(t) for t in t_grid),
                             tuple(vals), "exact")


def default_test_functions(n_states: int, n_random: int = 50, seed: int = 0) -> list:
    fns = [np.arange(n_states, dtype=float)]
    fns += list(np.eye(n_states))
    rng = np.random.default_rng(seed)
    fns += list(rng.uniform(-1.0, 1.0, size=(n_random, n_states)))
    return fns


def gamma_ratio(rates, f, t: float, p: np.ndarray | None = None,
                cfg: UniformizationConfig = DEFAULT_CONFIG):
    """Pointwise (Gamma P_t f)^{1/2} / P_t (Gamma f)^{1/2}.

    Returns (ratio, mask) where mask marks states with a nonzero denominator.
    """
    if p is None:
        p = transition_matrix(rates, t, cfg).matrix
    f = np.asarray(f, dtype=float)
    num = np.sqrt(gamma(rates, p @ f))
    den = p @ np.sqrt(gamma(rates, f))
    mask = den > 0
    ratio = np.zeros_like(num)
    ratio[mask] = num[mask] / den[mask]
    return ratio, mask


def gamma_curvature_estimate(rates, t_grid, test_fns=None,
                             cfg: UniformizationConfig = DEFAULT_CONFIG,
                             seed: int = 0, n_random: int = 50) -> CurvatureEstimate:
    """-(1/t) log of the largest commutation ratio over a finite function family.

    A finite family only sees part of the supremum, so this overestimates the
    true rho_t.
    """
    if test_fns is None:
        test_fns = default_test_functions(rates.n_states, n_random, seed)
    vals = []
    skipped = 0
    for t in t_grid:
        p = transition_matrix(rates, t, cfg).matrix
        worst = 0.0
        for f in test_fns:
            if np.ptp(f) == 0:
                continue
            ratio, mask = gamma_ratio(rates, f, t, p)
            skipped += int(np.sum(~mask))
            if np.any(mask):
                worst = max(worst, float(ratio[mask].max()))
        vals.append(math.inf if worst == 0 else -math.log(worst) / t)
    if skipped:
        log.info("gamma estimate skipped %d zero-denominator states", skipped)
    return CurvatureEstimate("gamma", tuple(float(t) for t in t_grid), tuple(vals),
                             "upper", skipped)


def covariance_check(rates, x0: int, g1, g2, t: float, rho,
                     cfg: UniformizationConfig = DEFAULT_CONFIG) -> tuple[float, float]:
    """Exact Cov_x0[g1(X_t), g2(X_t)] and the Gamma-curvature bound on it."""
    from .bounds import l_trho

    if isinstance(rho, CurvatureCertificate):
        if rho.kind != "gamma" or not rho.valid:
            raise InvalidCertificate("covariance bound needs a valid gamma certificate")
        rho = rho.value
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    row = kernel_row(rates, x0, t, cfg, warn=False)
    row = row / row.sum()
    m1, m2 = row @ g1, row @ g2
    lhs = float(row @ ((g1 - m1) * (g2 - m2)))
    sup_g1 = float(np.max(gamma(rates, g1)))
    rhs = 2.0 * l_trho(t, rho) * math.sqrt(sup_g1) * float(row @ np.sqrt(gamma(rates, g2)))
    return lhs, rhs
