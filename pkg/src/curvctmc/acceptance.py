"""The desk-scale verification suite.

Each check returns a CheckResult; ``run_suite`` runs them in order. The same
functions back ``tests/test_acceptance.py`` and ``curvctmc verify``.

``bound_scale`` multiplies every analytic right-hand side and exists for
fault injection: a scale of 0.5 must make the suite fail.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import binom

from . import bounds as B
from .chain_model import (BirthDeathRates, Metric, ehrenfest, gamma, generator_apply,
                          lipschitz_seminorm, mm1, stationary_distribution)
from .curvature import (covariance_check, gamma2_gap, gamma_criterion, gamma_ratio,
                        w1_distance, wasserstein_criterion)
from .semigroup import TruncationWarning, transition_matrix
from .simulate import (coordinate_average, ehrenfest_rescaled_tail, monte_carlo_tail,
                       mm1_multisample_tail, ou_exact_tail, ou_variance)

T_GRID = (0.1, 0.5, 1.0, 2.0)


@dataclass
class VerifyContext:
    seed: int = 0
    n_paths: int | None = None  # None: each check's own default
    gamma: float = 0.99
    bound_scale: float = 1.0

    def paths(self, default: int) -> int:
        return default if self.n_paths is None else self.n_paths


@dataclass
class CheckResult:
    number: int
    name: str
    status: str  # pass / fail / untested
    detail: str
    seconds: float = 0.0
    budget: float = math.inf
    offending: list = field(default_factory=list)
    tails: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        return (f"[{self.status.upper():8s}] {self.number:2d} {self.name}: {self.detail} "
                f"({self.seconds:.2f}s / budget {self.budget:g}s)")

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "status": self.status,
                "detail": self.detail, "seconds": round(self.seconds, 3),
                "offending": self.offending}


# ---------------------------------------------------------------------------
# random chains

def random_bd_chain(rng: np.random.Generator, max_n: int = 30) -> BirthDeathRates:
    n = int(rng.integers(2, max_n + 1))
    lam = np.append(rng.uniform(0.2, 3.0, n), 0.0)
    nu = np.insert(rng.uniform(0.2, 3.0, n), 0, 0.0)
    return BirthDeathRates(lam, nu)


def random_gamma_chain(rng: np.random.Generator, max_n: int = 30) -> BirthDeathRates:
    """Random finite chain with monotone rates whose gamma criterion is >= 0.

    One chain in four has rho = 0 (constant steps allowed)."""
    n = int(rng.integers(2, max_n + 1))
    rho = 0.0 if rng.random() < 0.25 else float(rng.uniform(0.05, 1.0))
    steps_down = rho + rng.uniform(0.0, 0.5, n)
    lam = np.append(np.cumsum(steps_down[::-1])[::-1], 0.0)
    nu = np.insert(np.cumsum(rho + rng.uniform(0.0, 0.5, n)), 0, 0.0)
    return BirthDeathRates(lam, nu)


def random_lipschitz(rng: np.random.Generator, n_states: int) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(rng.uniform(-1.0, 1.0, n_states - 1))])


# ---------------------------------------------------------------------------
# checks

def check_contraction(ctx: VerifyContext) -> CheckResult:
    rng = np.random.default_rng([ctx.seed, 1])
    worst, offending = -math.inf, []
    for c in range(20):
        rates = random_bd_chain(rng)
        K = wasserstein_criterion(rates).value
        fs = [random_lipschitz(rng, rates.n_states) for _ in range(10)]
        for t in T_GRID:
            p = transition_matrix(rates, t).matrix
            for f in fs:
                lhs = lipschitz_seminorm(p @ f)
                rhs = ctx.bound_scale * math.exp(-K * t) * lipschitz_seminorm(f)
                worst = max(worst, lhs / rhs - 1)
                if lhs > rhs * (1 + 1e-9):
                    offending.append((f"random chain {c}", t, "exp(-Kt)"))
    return _result(1, "semigroup contraction", offending,
                   f"max relative excess {worst:.2e}", 30)


def check_gamma_commutation(ctx: VerifyContext) -> CheckResult:
    rng = np.random.default_rng([ctx.seed, 2])
    worst, offending = -math.inf, []
    for c in range(20):
        rates = random_gamma_chain(rng)
        cert = gamma_criterion(rates)
        fs = [rng.uniform(-1.0, 1.0, rates.n_states) for _ in range(10)]
        for t in T_GRID:
            p = transition_matrix(rates, t).matrix
            bound = ctx.bound_scale * math.exp(-cert.value * t)
            for f in fs:
                ratio, mask = gamma_ratio(rates, f, t, p)
                excess = float(np.max(ratio[mask])) / bound - 1
                worst = max(worst, excess)
                if excess > 1e-9:
                    offending.append((f"random gamma chain {c}", t, "exp(-rho t)"))
    return _result(2, "gamma commutation", offending, f"max relative excess {worst:.2e}", 30)


def check_gamma2(ctx: VerifyContext) -> CheckResult:
    rng = np.random.default_rng([ctx.seed, 3])
    chains = [random_gamma_chain(rng) for _ in range(20)]
    chains += [mm1(1.0, 2.0, 40), ehrenfest(10)]
    worst, offending = math.inf, []
    for c, rates in enumerate(chains):
        cert = gamma_criterion(rates)
        interior = slice(None) if not rates.truncated else slice(0, rates.n_max - rates.margin)
        # the tampered variant demands twice the certified curvature
        rho = cert.value / ctx.bound_scale if cert.value > 0 else cert.value
        for _ in range(100):
            f = rng.normal(size=rates.n_states)
            gap = float(np.min(gamma2_gap(rates, f, rho)[interior]))
            worst = min(worst, gap)
            if gap < -1e-12:
                offending.append((f"chain {c}", None, "gamma2 gap"))
    return _result(3, "gamma2 inequality", offending, f"min gap {worst:.2e}", 10)


def _lp_w1(mu, nu, dm) -> float:
    n = len(mu)
    a_eq = []
    for i in range(n):
        row = np.zeros((n, n))
        row[i, :] = 1
        a_eq.append(row.ravel())
    for j in range(n):
        col = np.zeros((n, n))
        col[:, j] = 1
        a_eq.append(col.ravel())
    res = optimize.linprog(dm.ravel(), A_eq=np.array(a_eq), b_eq=np.concatenate([mu, nu]),
                           bounds=(0, None), method="highs-ds")
    return float(res.fun)


def check_w1_oracle(ctx: VerifyContext) -> CheckResult:
    rng = np.random.default_rng([ctx.seed, 4])
    worst, offending = 0.0, []
    for i in range(200):
        size = int(rng.integers(2, 6))
        metric = Metric(rng.uniform(0.1, 3.0, size - 1))
        mu = rng.dirichlet(np.ones(size))
        nu = rng.dirichlet(np.ones(size))
        if rng.random() < 0.3:
            mu[rng.integers(size)] = 0
            mu /= mu.sum()
        gap = abs(w1_distance(mu, nu, metric) - _lp_w1(mu, nu, metric.matrix()))
        worst = max(worst, gap)
        if gap > 1e-9:
            offending.append((f"pair {i}", None, "w1"))
    return _result(4, "W1 oracle equivalence", offending, f"max |cdf - lp| {worst:.2e}", 10)


def check_covariance(ctx: VerifyContext) -> CheckResult:
    rng = np.random.default_rng([ctx.seed, 5])
    worst, offending = -math.inf, []
    cases = [("mm1 N=60", mm1(1.0, 2.0, 60), (0, 5, 20)),
             ("ehrenfest n=20", ehrenfest(20), (0, 10, 17))]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        for label, rates, starts in cases:
            cert = gamma_criterion(rates)
            for _ in range(50):
                g1 = rng.normal(size=rates.n_states)
                g2 = g1 if rng.random() < 0.3 else rng.normal(size=rates.n_states)
                x0 = int(rng.choice(starts))
                for t in (0.5, 1.0):
                    lhs, rhs = covariance_check(rates, x0, g1, g2, t, cert)
                    rhs *= ctx.bound_scale
                    worst = max(worst, lhs - rhs)
                    if lhs > rhs + 1e-9:
                        offending.append((label, t, "covariance"))
    return _result(5, "covariance inequality", offending, f"max lhs - rhs {worst:.3g}", 30)


def _mc_result(number, name, tails, budget, chain_label, bound_name) -> CheckResult:
    offending, statuses = [], []
    for est in tails:
        for y, s in zip(est.y_grid, est.status()):
            statuses.append(s)
            if s == "fail":
                offending.append((est.label or chain_label, float(y), bound_name))
    if offending:
        status = "fail"
    elif all(s == "untested" for s in statuses):
        status = "untested"
    else:
        status = "pass"
    n_untested = statuses.count("untested")
    detail = (f"{statuses.count('pass')} pass, {statuses.count('fail')} fail, "
              f"{n_untested} untested")
    return CheckResult(number, name, status, detail, budget=budget, offending=offending,
                       tails=tails)


def check_mc_cor49(ctx: VerifyContext) -> CheckResult:
    n = 50
    rates = ehrenfest(n)
    f = np.arange(n + 1, dtype=float)
    K = wasserstein_criterion(rates).value
    v2 = float(np.max(rates.total_rates))
    spec = B.DeviationBoundSpec(t=1.0, lip=1.0, K=K, v2=v2, b=1.0)
    ys = [2.0, 4.0, 6.0, 8.0]
    tails = []
    for x0 in (25, 0):
        est = monte_carlo_tail(rates, x0, f, 1.0, ys, ctx.paths(10**5), ctx.gamma,
                               seed=ctx.seed + x0)
        analytic = [ctx.bound_scale * min(B.bound_cor49(y, spec), B.bound_thm31(y, spec))
                    for y in ys]
        est.label = f"ehrenfest n=50 x0={x0}"
        tails.append(est.with_bound(analytic))
    return _mc_result(6, "Monte Carlo vs Wasserstein-curvature bounds", tails, 120,
                      "ehrenfest n=50", "cor49")


def check_stationary(ctx: VerifyContext) -> CheckResult:
    n = 30
    rates = ehrenfest(n)
    pi = stationary_distribution(rates)
    # the Ehrenfest law at lam = nu is Binomial(n, 1/2); use it as the exact tail
    exact_pi = binom.pmf(np.arange(n + 1), n, 0.5)
    spec = B.DeviationBoundSpec(t=math.inf, lip=1.0, K=wasserstein_criterion(rates).value,
                                v2=float(np.max(rates.total_rates)))
    mean = float(np.arange(n + 1) @ exact_pi)
    worst, offending = -math.inf, []
    for y in range(1, 9):
        tail = float(exact_pi[np.arange(n + 1) - mean >= y - 1e-12].sum())
        bound = ctx.bound_scale * B.bound_cor49(float(y), spec, stationary=True)
        worst = max(worst, tail - bound)
        if tail > bound:
            offending.append(("ehrenfest n=30 stationary", y, "cor49 stationary"))
    if np.max(np.abs(pi - exact_pi)) > 1e-12:
        offending.append(("ehrenfest n=30", None, "stationary law"))
    return _result(7, "stationary exact check", offending, f"max tail - bound {worst:.3g}", 5)


def check_ou(ctx: VerifyContext) -> CheckResult:
    lam = nu = 0.5
    ys = np.linspace(0.1, 3.0, 20)
    worst, offending = -math.inf, []
    for t in (0.5, 1.0, math.inf):
        sigma2 = ou_variance(lam, nu, t)
        for y in ys:
            tail = ou_exact_tail(0.0, lam, nu, t, 1.0, float(y))
            bound = B.bound_cor411(float(y), t, nu, 1.0)
            gauss = math.exp(-y * y / (2 * sigma2))
            if abs(bound - gauss) > 1e-15 * max(1.0, gauss):
                offending.append(("OU", float(y), "cor411 != exp(-y^2/2sigma^2)"))
            bound *= ctx.bound_scale
            worst = max(worst, tail - bound)
            if tail > bound:
                offending.append((f"OU t={t}", float(y), "cor411"))
    return _result(8, "OU Gaussian bound", offending, f"max tail - bound {worst:.3g}", 1)


def fluid_limit_gaps(n: int = 10**4, t: float = 1.0, ys=None):
    """Relative gaps between the pre-limit Ehrenfest bound and the OU limit bound,
    in value and in exponent."""
    ys = np.linspace(0.5, 2.0, 16) if ys is None else ys
    value_gap, expo_gap = [], []
    for y in ys:
        pre = B.ehrenfest_prelimit_bound(float(y), n, t, 0.5, 0.5, 1.0)
        lim = B.bound_cor411(float(y), t, 0.5, 1.0)
        value_gap.append(abs(pre - lim) / lim)
        expo_gap.append(abs(math.log(pre) - math.log(lim)) / abs(math.log(lim)))
    return np.array(ys), np.array(value_gap), np.array(expo_gap)


def check_fluid_formula(ctx: VerifyContext) -> CheckResult:
    ys, value_gap, expo_gap = fluid_limit_gaps()
    bad = ys[value_gap >= 0.05]
    offending = [("ehrenfest n=1e4 pre-limit", float(y), "cor411 limit") for y in bad]
    detail = (f"max relative gap {value_gap.max():.3f} in value, "
              f"{expo_gap.max():.3f} in exponent")
    return _result(9, "fluid limit: pre-limit bound within 5%", offending, detail, 1)


def check_fluid_mc(ctx: VerifyContext) -> CheckResult:
    ys = [0.5, 1.0, 1.5]
    est = ehrenfest_rescaled_tail(400, 0.5, 0.5, 0.0, 1.0, ys, ctx.paths(10**5), ctx.gamma,
                                  seed=ctx.seed + 9)
    analytic = [ctx.bound_scale * B.bound_cor411(y, 1.0, 0.5, 1.0) + 0.01 for y in ys]
    est.with_bound(analytic)
    return _mc_result(9, "fluid limit: rescaled Ehrenfest MC", [est], 180,
                      "ehrenfest n=400", "cor411+0.01")


def check_mm1_multi(ctx: VerifyContext) -> CheckResult:
    lam, nu, times = 1.0, 1.2, (1.0, 2.0, 3.0)
    f = coordinate_average(3)
    ys = [1.0, 2.0, 3.0]
    tails = []
    for x0 in (0, 10):
        est = mm1_multisample_tail(lam, nu, 200, x0, times, f, ys, ctx.paths(10**5),
                                   ctx.gamma, seed=ctx.seed + 10 + x0)
        analytic = [ctx.bound_scale * B.bound_cor412(y, 3, 3.0, lam, nu, f.lip) for y in ys]
        est.label = f"mm1 N=200 x0={x0}"
        tails.append(est.with_bound(analytic))
    return _mc_result(10, "M/M/1 multidimensional", tails, 120, "mm1 N=200", "cor412")


def check_thm34(ctx: VerifyContext) -> CheckResult:
    offending, worst, slope_err = [], -math.inf, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        for label, rates in (("mm1 N=60", mm1(1.0, 2.0, 60)), ("ehrenfest n=20", ehrenfest(20))):
            f = np.arange(rates.n_states, dtype=float)
            rho = gamma_criterion(rates).value
            g_inf = float(np.max(gamma(rates, f)))
            for t in (0.5, 1.0):
                spec = B.DeviationBoundSpec(t=t, lip=1.0, b=1.0, rho=rho, gamma_inf=g_inf)
                for y in (0.5, 1.0, 2.0, 4.0, 8.0):
                    general = B.bound_thm34(y, rates, f, t, rho)
                    cor = ctx.bound_scale * B.bound_cor36(y, spec)
                    worst = max(worst, general - cor)
                    if general > cor + 1e-9:
                        offending.append((label, y, "thm34 vs cor36"))
                slope = B.psi_ft(1e-6, rates, f, t, rho) / 1e-6
                target = 2 * B.l_trho(t, rho) * g_inf
                rel = abs(slope - target) / target
                slope_err = max(slope_err, rel)
                if rel > 1e-6:
                    offending.append((label, t, "psi slope"))
    return _result(11, "Legendre optimizer vs closed form", offending,
                   f"max thm34 - cor36 {worst:.3g}, slope rel err {slope_err:.2e}", 10)


def check_integration_by_parts(ctx: VerifyContext) -> CheckResult:
    rng = np.random.default_rng([ctx.seed, 12])
    rates = mm1(1.0, 2.0, 300)
    p = transition_matrix(rates, 1.0).matrix
    worst, comm, offending = 0.0, 0.0, []
    for i in range(20):
        # supports start at >= 20: started from x <= 50, reaching 0 and then
        # the support within t = 1 has probability < 1e-10
        lo = int(rng.integers(20, 80))
        u = np.zeros(rates.n_states)
        width = int(rng.integers(1, 15))
        u[lo:lo + width] = rng.normal(size=width)
        shifted = np.append(u[1:], 0.0)
        lhs = p[1:52] @ u
        rhs = p[:51] @ shifted
        err = float(np.max(np.abs(lhs - rhs)))
        worst = max(worst, err)
        if err > 1e-6 * ctx.bound_scale:
            offending.append(("mm1 N=300", i, "integration by parts"))
        d_plus = lambda v: v[1:] - v[:-1]
        v = rng.normal(size=rates.n_states)
        a = generator_apply(rates, np.append(d_plus(v), 0.0))
        b = np.append(d_plus(generator_apply(rates, v)), 0.0)
        inner = slice(1, rates.n_max - 2)
        e = float(np.max(np.abs(a[inner] - b[inner])))
        comm = max(comm, e)
        if e > 1e-12:
            offending.append(("mm1 N=300", i, "d+ L = L d+"))
    return _result(12, "integration by parts", offending,
                   f"max ibp error {worst:.2e}, commutation {comm:.2e}", 30)


def _result(number, name, offending, detail, budget) -> CheckResult:
    return CheckResult(number, name, "fail" if offending else "pass", detail,
                       budget=budget, offending=offending)


CHECKS = [check_contraction, check_gamma_commutation, check_gamma2, check_w1_oracle,
          check_covariance, check_mc_cor49, check_stationary, check_ou,
          check_fluid_formula, check_fluid_mc, check_mm1_multi, check_thm34,
          check_integration_by_parts]


def run_check(check, ctx: VerifyContext) -> CheckResult:
    start = time.perf_counter()
    res = check(ctx)
    res.seconds = time.perf_counter() - start
    return res


def run_suite(ctx: VerifyContext | None = None, only=None) -> list[CheckResult]:
    ctx = VerifyContext() if ctx is None else ctx
    checks = CHECKS if only is None else [c for c in CHECKS if c.__name__ in only]
    return [run_check(c, ctx) for c in checks]
