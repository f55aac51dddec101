"""Finite birth-death and general jump chains, path metrics, and the
pointwise operators L, Gamma and Gamma_2.

All state spaces are {0, ..., N}. A ``truncated`` chain stands in for a chain
on the nonnegative integers; its right boundary is reflecting by construction
and criterion scans skip ``margin`` states next to it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ChainError(ValueError):
    """Invalid rates, metric or state function."""


class ReducibleChainError(ChainError):
    pass


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ChainError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ChainError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateSpace:
    n_max: int
    truncated: bool = False

    def __post_init__(self):
        if self.n_max < 1:
            raise ChainError("state space needs at least two states")

    @property
    def size(self) -> int:
        return self.n_max + 1


@dataclass(frozen=True)
class Metric:
    """Path metric on {0, ..., N}: d(x, y) is the sum of the edge weights
    between x and y. ``kind="unit"`` gives d(x, y) = |x - y|."""

    weights: np.ndarray
    kind: str = "weighted"

    def __post_init__(self):
        w = _as_float_array(self.weights, "metric weights")
        if len(w) < 1:
            raise ChainError("metric needs at least one edge")
        if np.any(w <= 0):
            raise ChainError("metric weights must be strictly positive")
        object.__setattr__(self, "weights", w)
        if self.kind not in ("unit", "weighted"):
            raise ChainError(f"unknown metric kind {self.kind!r}")

    @classmethod
    def unit(cls, n_states: int) -> "Metric":
        return cls(np.ones(n_states - 1), kind="unit")

    @property
    def n_states(self) -> int:
        return len(self.weights) + 1

    @property
    def positions(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.weights)])

    def distance(self, x: int, y: int) -> float:
        pos = self.positions
        return abs(pos[x] - pos[y])

    def matrix(self) -> np.ndarray:
        pos = self.positions
        return np.abs(pos[:, None] - pos[None, :])

    def to_dict(self) -> dict:
        if self.kind == "unit":
            return {"kind": "unit"}
        return {"kind": "weighted", "weights": self.weights.tolist()}


@dataclass(frozen=True)
class GeneralRates:
    """Off-diagonal jump rates Q(x, y), stored densely.

    The diagonal of ``q`` is ignored and kept at zero; row totals are the
    holding rates.
    """

    q: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 2:
            raise ChainError("rate matrix must be square with at least 2 states")
        if not np.all(np.isfinite(q)):
            raise ChainError("rates must be finite")
        np.fill_diagonal(q, 0.0)
        if np.any(q < 0):
            raise ChainError("off-diagonal rates must be nonnegative")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_dict(cls, n_states: int, rates: dict, truncated: bool = False):
        q = np.zeros((n_states, n_states))
        for (x, y), r in rates.items():
            q[x, y] = r
        return cls(q, truncated=truncated)

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    @property
    def total_rates(self) -> np.ndarray:
        return self.q.sum(axis=1)

    def generator_matrix(self) -> np.ndarray:
        g = np.array(self.q)
        g[np.diag_indices_from(g)] = -self.total_rates
        return g

    def to_general(self) -> "GeneralRates":
        return self


@dataclass(frozen=True)
class BirthDeathRates:
    """Birth rates ``lam`` and death rates ``nu`` on {0, ..., N}.

    For a truncated chain ``lam[N]`` may be positive (it is the rate of the
    chain on the integers) but the finite chain reflects at N, so it never
    enters the generator.
    """

    lam: np.ndarray
    nu: np.ndarray
    truncated: bool = False
    margin: int = 2
    check_irreducible: bool = True
    _q: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = _as_float_array(self.lam, "lam")
        nu = _as_float_array(self.nu, "nu")
        if len(lam) != len(nu):
            raise ChainError("lam and nu must have the same length")
        if len(lam) < 2:
            raise ChainError("state space needs at least two states")
        if np.any(lam < 0) or np.any(nu < 0):
            raise ChainError("rates must be nonnegative")
        if nu[0] != 0:
            raise ChainError("nu[0] must be 0 (0 is reflecting)")
        if not self.truncated and lam[-1] != 0:
            raise ChainError("lam[N] must be 0 on a finite, non-truncated space")
        if self.margin < 0:
            raise ChainError("margin must be nonnegative")
        if self.check_irreducible and (np.any(lam[:-1] <= 0) or np.any(nu[1:] <= 0)):
            bad = [int(x) for x in np.flatnonzero(lam[:-1] <= 0)]
            bad += [int(x) + 1 for x in np.flatnonzero(nu[1:] <= 0)]
            raise ReducibleChainError(
                f"chain is reducible: zero rate at states {sorted(set(bad))}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "nu", nu)
        n = len(lam)
        q = np.zeros((n, n))
        idx = np.arange(n - 1)
        q[idx, idx + 1] = lam[:-1]
        q[idx + 1, idx] = nu[1:]
        q.setflags(write=False)
        object.__setattr__(self, "_q", q)

    @property
    def n_states(self) -> int:
        return len(self.lam)

    @property
    def n_max(self) -> int:
        return len(self.lam) - 1

    @property
    def space(self) -> StateSpace:
        return StateSpace(self.n_max, self.truncated)

    @property
    def q(self) -> np.ndarray:
        return self._q

    @property
    def birth(self) -> np.ndarray:
        """Birth rates as seen by the finite chain (zero at N)."""
        b = np.array(self.lam)
        b[-1] = 0.0
        return b

    @property
    def total_rates(self) -> np.ndarray:
        return self.birth + self.nu

    def to_general(self) -> GeneralRates:
        return GeneralRates(self._q, truncated=self.truncated)

    def generator_matrix(self) -> np.ndarray:
        return self.to_general().generator_matrix()

    def to_dict(self) -> dict:
        return {"n": self.n_max, "truncated": self.truncated,
                "lambda": self.lam.tolist(), "nu": self.nu.tolist()}


def ehrenfest(n: int, lam: float = 0.5, nu: float = 0.5) -> BirthDeathRates:
    """Ehrenfest chain on {0..n}: births lam*(n-x), deaths nu*x."""
    x = np.arange(n + 1, dtype=float)
    return BirthDeathRates(lam * (n - x), nu * x)


def mm1(lam: float, nu: float, truncation_n: int, margin: int = 2) -> BirthDeathRates:
    """M/M/1 queue truncated to {0..truncation_n}."""
    n = truncation_n + 1
    nus = np.full(n, float(nu))
    nus[0] = 0.0
    return BirthDeathRates(np.full(n, float(lam)), nus, truncated=True, margin=margin)


def two_state(lam: float, nu: float) -> BirthDeathRates:
    return BirthDeathRates([lam, 0.0], [0.0, nu])


# ---------------------------------------------------------------------------
# operators

def _check_fn(rates, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (rates.n_states,):
        raise ChainError(
            f"function has shape {f.shape}, chain has {rates.n_states} states")
    return f


def generator_apply(rates, f) -> np.ndarray:
    """Lf(x) = sum_y (f(y) - f(x)) Q(x, y)."""
    f = _check_fn(rates, f)
    q = rates.q
    return q @ f - q.sum(axis=1) * f


def carre_du_champ(rates, f, g) -> np.ndarray:
    """Gamma(f, g)(x) = 1/2 sum_y (f(y) - f(x)) (g(y) - g(x)) Q(x, y)."""
    f = _check_fn(rates, f)
    g = _check_fn(rates, g)
    df = f[None, :] - f[:, None]
    dg = g[None, :] - g[:, None]
    return 0.5 * np.sum(df * dg * rates.q, axis=1)


def gamma(rates, f) -> np.ndarray:
    return carre_du_champ(rates, f, f)


def gamma2(rates, f) -> np.ndarray:
    """Gamma_2 f = 1/2 (L Gamma f - 2 Gamma(f, L f))."""
    f = _check_fn(rates, f)
    return 0.5 * (generator_apply(rates, gamma(rates, f))
                  - 2.0 * carre_du_champ(rates, f, generator_apply(rates, f)))


def lipschitz_seminorm(f, d: Metric | None = None) -> float:
    """sup_{x != y} |f(x) - f(y)| / d(x, y).

    For a path metric the sup is attained on adjacent states.
    """
    f = np.asarray(f, dtype=float)
    w = np.ones(len(f) - 1) if d is None else d.weights
    if len(w) != len(f) - 1:
        raise ChainError("metric and function sizes disagree")
    return float(np.max(np.abs(np.diff(f)) / w))


def _metric_for(rates, d: Metric | None) -> Metric:
    d = Metric.unit(rates.n_states) if d is None else d
    if d.n_states != rates.n_states:
        raise ChainError("metric and chain sizes disagree")
    return d


def angle_bracket_bound(rates, d: Metric | None = None) -> float:
    """V^2 = max_x sum_y d(x, y)^2 Q(x, y)."""
    dm = _metric_for(rates, d).matrix()
    return float(np.max(np.sum(dm ** 2 * rates.q, axis=1)))


def jump_bound(rates, d: Metric | None = None) -> float:
    """Largest distance covered by a jump with positive rate."""
    dm = _metric_for(rates, d).matrix()
    active = rates.q > 0
    if not np.any(active):
        return 0.0
    return float(np.max(dm[active]))


def stationary_distribution(rates: BirthDeathRates) -> np.ndarray:
    """Stationary law by detailed balance, pi(x+1)/pi(x) = lam_x / nu_{x+1}."""
    lam, nu = rates.birth, rates.nu
    if np.any(lam[:-1] <= 0) or np.any(nu[1:] <= 0):
        raise ReducibleChainError("stationary distribution needs an irreducible chain")
    log_ratio = np.log(lam[:-1]) - np.log(nu[1:])
    log_pi = np.concatenate([[0.0], np.cumsum(log_ratio)])
    log_pi -= log_pi.max()
    pi = np.exp(log_pi)
    z = pi.sum()
    if not np.isfinite(z) or z <= 0:
        raise ChainError("zero normalizer")
    return pi / z


# ---------------------------------------------------------------------------
# chain files

def chain_from_dict(spec: dict) -> tuple[BirthDeathRates, Metric]:
    """Build rates and metric from a chain-file dictionary or preset."""
    spec = dict(spec)
    preset = spec.pop("preset", None)
    margin = int(spec.get("margin", 2))
    if preset == "ehrenfest":
        rates = ehrenfest(int(spec["n"]), float(spec.get("lambda", 0.5)),
                          float(spec.get("nu", 0.5)))
    elif preset == "mm1":
        rates = mm1(float(spec["lambda"]), float(spec["nu"]),
                    int(spec["truncation_n"]), margin=margin)
    elif preset is None:
        n = int(spec["n"])
        lam, nu = spec["lambda"], spec["nu"]
        if len(lam) != n + 1 or len(nu) != n + 1:
            raise ChainError(f"expected {n + 1} rates for n={n}")
        rates = BirthDeathRates(lam, nu, truncated=bool(spec.get("truncated", False)),
                                margin=margin)
    else:
        raise ChainError(f"unknown preset {preset!r}")
    metric_spec = spec.get("metric", {"kind": "unit"})
    if metric_spec.get("kind", "unit") == "unit":
        metric = Metric.unit(rates.n_states)
    else:
        metric = Metric(metric_spec["weights"], kind="weighted")
        if metric.n_states != rates.n_states:
            raise ChainError("metric weights must have length n")
    return rates, metric


def load_chain(path) -> tuple[BirthDeathRates, Metric]:
    with open(Path(path)) as fh:
        return chain_from_dict(json.load(fh))
