"""Seeded exact simulation of finite jump chains and Monte Carlo tail
estimates with Clopper-Pearson upper confidence bounds.

Random streams: path batches of fixed size BLOCK draw from
``np.random.default_rng(SeedSequence(seed, spawn_key=(block,)))``, so the
output depends only on the seed and the path count, never on how blocks are
scheduled.
"""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special
from scipy.stats import norm

from . import semigroup
from .chain_model import mm1
from .semigroup import DEFAULT_CONFIG, UniformizationConfig

BLOCK = 8192


class TruncationError(RuntimeError):
    pass


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# ---------------------------------------------------------------------------
# paths

@dataclass(frozen=True)
class Path:
    x0: int
    times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right"))
        return self.x0 if i == 0 else int(self.states[i - 1])


def _jump_tables(rates):
    """Holding rates, padded target lists and their cumulative jump probabilities."""
    q = np.asarray(rates.q)
    total = q.sum(axis=1)
    width = max(1, int((q > 0).sum(axis=1).max()))
    n = q.shape[0]
    targets = np.tile(np.arange(n)[:, None], (1, width))
    cum = np.ones((n, width))
    for x in range(n):
        ys = np.flatnonzero(q[x] > 0)
        if len(ys):
            targets[x, :len(ys)] = ys
            targets[x, len(ys):] = ys[-1]
            cum[x, :len(ys)] = np.cumsum(q[x, ys]) / total[x]
    cum[np.arange(n), np.maximum((q > 0).sum(axis=1) - 1, 0)] = 1.0
    return total, targets, cum


def _pick(targets, cum, xs, u):
    j = (cum[xs] <= u[:, None]).sum(axis=1)
    return targets[xs, j]


def sample_path(rates, x0: int, horizon: float, seed: int) -> Path:
    """One exact path on [0, horizon]: exponential holding, then a jump."""
    if not 0 <= x0 < rates.n_states:
        raise ValueError(f"start state {x0} out of range")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    total, targets, cum = _jump_tables(rates)
    rng = _rng(seed, 0)
    t, x = 0.0, x0
    times, states = [], []
    while total[x] > 0:
        t += rng.exponential(1.0 / total[x])
        if t > horizon:
            break
        x = int(_pick(targets, cum, np.array([x]), np.array([rng.random()]))[0])
        times.append(t)
        states.append(x)
    return Path(x0, np.array(times), np.array(states, dtype=int), horizon)


def _batch_states(total, targets, cum, x0: int, times: np.ndarray, n: int,
                  rng: np.random.Generator) -> np.ndarray:
    """States of n independent paths at each of ``times``, shape (n, len(times))."""
    x = np.full(n, x0, dtype=np.int64)
    clock = np.zeros(n)
    out = np.empty((n, len(times)), dtype=np.int64)
    for j, horizon in enumerate(times):
        active = np.arange(n)
        # advance every path until its next event passes ``horizon``
        while active.size:
            rate = total[x[active]]
            with np.errstate(divide="ignore"):
                dt = rng.exponential(size=active.size) / rate
            t_new = clock[active] + dt
            jump = t_new <= horizon
            idx = active[jump]
            u = rng.random(idx.size)
            xs = x[idx]
            x[idx] = _pick(targets, cum, xs, u)
            clock[idx] = t_new[jump]
            # memorylessness: a path whose next event overshoots restarts its
            # clock at the horizon
            clock[active[~jump]] = horizon
            active = idx
        out[:, j] = x
    return out


def sample_states_batch(rates, x0: int, times, n_paths: int, seed: int) -> np.ndarray:
    """States of ``n_paths`` independent paths at the given times."""
    times = _check_times(times)
    if not 0 <= x0 < rates.n_states:
        raise ValueError(f"start state {x0} out of range")
    total, targets, cum = _jump_tables(rates)
    blocks = []
    for b, start in enumerate(range(0, n_paths, BLOCK)):
        size = min(BLOCK, n_paths - start)
        blocks.append(_batch_states(total, targets, cum, x0, times, size, _rng(seed, 1, b)))
    return np.concatenate(blocks) if blocks else np.empty((0, len(times)), dtype=np.int64)


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty sequence")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    return times


def sample_states_at(rates, x0: int, times, seed: int) -> tuple:
    """States of a single path at the given times."""
    return tuple(int(v) for v in sample_states_batch(rates, x0, times, 1, seed)[0])


# ---------------------------------------------------------------------------
# confidence bounds

def clopper_pearson_upper(k: int, n: int, gamma: float, tol: float = 1e-10) -> float:
    """One-sided exact binomial upper bound: the p with P(Bin(n, p) <= k) = 1 - gamma."""
    if not 0 <= k <= n or n < 1:
        raise ValueError("need 0 <= k <= n and n >= 1")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if k == n:
        return 1.0
    if k == 0:
        return -math.expm1(math.log1p(-gamma) / n)
    # P(Bin(n, p) <= k) = 1 - I_p(k + 1, n - k), decreasing in p
    lo, hi = k / n, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if special.betainc(k + 1, n - k, mid) < gamma:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# tail estimates

@dataclass
class TailEstimate:
    y_grid: np.ndarray
    k: np.ndarray
    n: int
    mean: float
    gamma: float
    upper: np.ndarray
    analytic: np.ndarray | None = None
    mean_margin: float = 0.0
    label: str = ""
    untested_below: float | None = None

    @property
    def p_hat(self) -> np.ndarray:
        return self.k / self.n

    def status(self) -> list[str]:
        """pass / fail / untested per y against ``analytic``."""
        if self.analytic is None:
            return ["" for _ in self.y_grid]
        floor = 10.0 / self.n if self.untested_below is None else self.untested_below
        out = []
        for up, bound in zip(self.upper, self.analytic):
            if bound < floor:
                out.append("untested")
            else:
                out.append("pass" if up <= bound else "fail")
        return out

    def with_bound(self, analytic, untested_below: float | None = None) -> "TailEstimate":
        self.analytic = np.asarray(analytic, dtype=float)
        self.untested_below = untested_below
        return self

    def rows(self):
        status = self.status()
        for i, y in enumerate(self.y_grid):
            bound = "" if self.analytic is None else repr(float(self.analytic[i]))
            yield [repr(float(y)), int(self.k[i]), self.n, repr(float(self.p_hat[i])),
                   repr(float(self.upper[i])), bound, status[i]]

    def to_csv(self, path, append: bool = False) -> None:
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh)
            if not append:
                w.writerow(CSV_COLUMNS)
            w.writerows(self.rows())


CSV_COLUMNS = ["y", "k", "n", "p_hat", "upper_gamma", "analytic_bound", "pass"]


def _tail_from_deviations(dev: np.ndarray, y_grid, gamma: float, mean: float,
                          margin: float = 0.0, label: str = "") -> TailEstimate:
    y_grid = np.asarray(y_grid, dtype=float)
    if np.any(y_grid <= 0) or np.any(np.diff(y_grid) <= 0):
        raise ValueError("y grid must be positive and increasing")
    if not 0.5 < gamma < 1:
        raise ValueError("gamma must lie in (0.5, 1)")
    n = len(dev)
    # compare with a small absolute slack so exact ties are not lost to rounding
    k = np.array([int(np.sum(dev >= y - margin - 1e-12)) for y in y_grid])
    upper = np.array([clopper_pearson_upper(int(c), n, gamma) for c in k])
    return TailEstimate(y_grid, k, n, mean, gamma, upper, mean_margin=margin, label=label)


def _guard(rates, x0: int, t: float, guard: float, cfg: UniformizationConfig) -> None:
    if not getattr(rates, "truncated", False):
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", semigroup.TruncationWarning)
        mass = semigroup.truncation_tail_mass(rates, x0, t, cfg=cfg)
    if mass > guard:
        raise TruncationError(
            f"truncation tail mass {mass:.3e} at x0={x0}, t={t} exceeds {guard:g}")


def monte_carlo_tail(rates, x0: int, f, t: float, y_grid, n_paths: int,
                     gamma: float = 0.99, seed: int = 0, guard: float = 1e-6,
                     cfg: UniformizationConfig = DEFAULT_CONFIG) -> TailEstimate:
    """Empirical P_x0(f(X_t) - E_x0 f(X_t) >= y), centred at the exact mean."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    f = np.asarray(f, dtype=float)
    _guard(rates, x0, t, guard, cfg)
    mean = semigroup.expectation(rates, x0, f, t, cfg)
    states = sample_states_batch(rates, x0, [t], n_paths, seed)[:, 0]
    return _tail_from_deviations(f[states] - mean, y_grid, gamma, mean)


# ---------------------------------------------------------------------------
# multidimensional M/M/1

@dataclass(frozen=True)
class MultiLipschitzFn:
    """f on n-tuples of states; ``func`` maps an (m, n) integer array to m values."""

    func: Callable[[np.ndarray], np.ndarray]
    lip: float
    n_args: int

    def __call__(self, xs) -> np.ndarray:
        return np.asarray(self.func(np.atleast_2d(xs)), dtype=float)

    def verify(self, max_state: int, n_samples: int = 200, seed: int = 0) -> bool:
        """Check |f(x + e_i) - f(x)| <= lip on random points and coordinates."""
        rng = _rng(seed, 7)
        xs = rng.integers(0, max_state, size=(n_samples, self.n_args))
        base = self(xs)
        for i in range(self.n_args):
            bumped = xs.copy()
            bumped[:, i] += 1
            if np.any(np.abs(self(bumped) - base) > self.lip * (1 + 1e-12)):
                return False
        return True


def coordinate_average(n: int) -> MultiLipschitzFn:
    return MultiLipschitzFn(lambda xs: xs.mean(axis=1), 1.0 / n, n)


def tensor_mean(rates, x0: int, times, f: MultiLipschitzFn,
                cfg: UniformizationConfig = DEFAULT_CONFIG) -> float:
    """E_x0[f(X_{t_1}, ..., X_{t_n})] by backward contraction over kernels."""
    times = _check_times(times)
    n_states = rates.n_states
    n = len(times)
    vals = np.empty((n_states,) * n)
    # evaluate slab by slab over the first coordinate to bound memory
    rest = np.array(list(itertools.product(range(n_states), repeat=n - 1)),
                    dtype=np.int64).reshape(n_states ** (n - 1), n - 1)
    for a in range(n_states):
        slab = np.column_stack([np.full(len(rest), a), rest])
        vals[a] = f(slab).reshape((n_states,) * (n - 1))
    steps = np.diff(np.concatenate([[0.0], times]))
    for k in range(n - 1, 0, -1):
        p = semigroup.transition_matrix(rates, steps[k], cfg).matrix
        # f_k(..., a) = sum_b f_{k+1}(..., a, b) P(a, b)
        vals = np.einsum("...ab,ab->...a", vals, p)
    row = semigroup.kernel_row(rates, x0, steps[0], cfg, warn=False)
    return float(row @ vals)


def mm1_multisample_tail(lam: float, nu: float, trunc_n: int, x0: int, times,
                         f: MultiLipschitzFn, y_grid, n_paths: int, gamma: float = 0.99,
                         seed: int = 0, guard: float = 1e-6, exact_limit: int = 3,
                         max_grid: int = 2 * 10**7,
                         cfg: UniformizationConfig = DEFAULT_CONFIG) -> TailEstimate:
    """Tail of f(X_{t_1}, ..., X_{t_n}) - E f for the truncated M/M/1 queue.

    The mean is exact for n <= ``exact_limit`` when the state grid fits in
    ``max_grid`` cells; otherwise it comes from an independent Monte Carlo run
    whose 4-sigma error widens every exceedance threshold.
    """
    times = _check_times(times)
    if len(times) != f.n_args:
        raise ValueError("function arity and number of times differ")
    rates = mm1(lam, nu, trunc_n)
    for t in times:
        _guard(rates, x0, float(t), guard, cfg)
    if len(times) <= exact_limit and rates.n_states ** len(times) <= max_grid:
        mean, margin = tensor_mean(rates, x0, times, f, cfg), 0.0
    else:
        ref = f(sample_states_batch(rates, x0, times, 4 * n_paths, seed + 1))
        mean = float(ref.mean())
        margin = 4.0 * float(ref.std(ddof=1)) / math.sqrt(len(ref))
    states = sample_states_batch(rates, x0, times, n_paths, seed)
    return _tail_from_deviations(f(states) - mean, y_grid, gamma, mean, margin)


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck limit

def ou_variance(lam: float, nu: float, t: float) -> float:
    scale = 1.0 if math.isinf(t) else -math.expm1(-2.0 * t)
    return lam * nu * scale


def _warn_sum(lam: float, nu: float) -> None:
    if abs(lam + nu - 1.0) > 1e-12:
        warnings.warn("the OU limit assumes lam + nu = 1", stacklevel=3)


def ou_exact_tail(z0: float, lam: float, nu: float, t: float, f_lip: float, y: float) -> float:
    """P(f_lip (U_t - E U_t) >= y) for the Gaussian U_t."""
    _warn_sum(lam, nu)
    sigma = math.sqrt(ou_variance(lam, nu, t))
    return float(norm.sf(y / (f_lip * sigma)))


def ou_sample(z0: float, lam: float, nu: float, t: float, seed: int, size=None):
    """Exact draws of U_t started at z0."""
    _warn_sum(lam, nu)
    mean = z0 * math.exp(-t) if not math.isinf(t) else 0.0
    return _rng(seed, 2).normal(mean, math.sqrt(ou_variance(lam, nu, t)), size=size)


def ehrenfest_start(n: int, lam: float, z0: float) -> int:
    return int(min(max(round(lam * n + z0 * math.sqrt(n)), 0), n))


def ehrenfest_rescaled_tail(n: int, lam: float, nu: float, z0_target: float, t: float,
                            y_grid, n_paths: int, gamma: float = 0.99, seed: int = 0,
                            cfg: UniformizationConfig = DEFAULT_CONFIG) -> TailEstimate:
    """Tail of Z_t - E Z_t with Z = (X - lam n) / sqrt(n) for the Ehrenfest chain."""
    from .chain_model import ehrenfest

    _warn_sum(lam, nu)
    rates = ehrenfest(n, lam, nu)
    x0 = ehrenfest_start(n, lam, z0_target)
    z = (np.arange(n + 1) - lam * n) / math.sqrt(n)
    est = monte_carlo_tail(rates, x0, z, t, y_grid, n_paths, gamma, seed, cfg=cfg)
    est.label = f"ehrenfest n={n} x0={x0}"
    return est
