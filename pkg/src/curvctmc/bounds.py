"""Closed-form Poisson-type deviation bounds and the general Gamma-curvature
bound obtained by integrating psi_{f,t}.

Every closed form here comes from a moment generating function bound of the
shape exp(A (e^{lam B} - lam B - 1)). Chernoff's optimum for that shape is
exp(-A h(y / (A B))) with h(u) = (1 + u) log(1 + u) - u ("bennett"); the
weaker exp(-(y / 2B) log(1 + y / (A B))) is the "standard" form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize

from .chain_model import Metric, _metric_for, gamma, lipschitz_seminorm

VARIANTS = ("standard", "bennett")
# exponents below this underflow to a denormal or zero
_LOG_TINY = math.log(np.finfo(float).tiny)


class MissingParameter(ValueError):
    pass


class IncompatibleParameters(ValueError):
    pass


@dataclass(frozen=True)
class DeviationBoundSpec:
    t: float
    lip: float
    b: float | None = None
    v2: float | None = None
    K: float | None = None
    rho: float | None = None
    gamma_inf: float | None = None
    variant: str = "standard"

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("t must be positive (math.inf for stationary forms)")
        if not self.lip > 0:
            raise ValueError("Lipschitz constant must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def need(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise MissingParameter(f"bound needs {', '.join(missing)}")
        return [getattr(self, n) for n in names]


@dataclass
class BoundCurve:
    name: str
    y_grid: np.ndarray
    values: np.ndarray
    variant: str
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"bound": self.name, "y_grid": list(map(float, self.y_grid)),
                "values": list(map(float, self.values)), "variant": self.variant,
                "flags": list(self.flags)}


# ---------------------------------------------------------------------------
# time constants

def c_tk(t: float, K: float) -> float:
    """sup_{0<=s<=t} exp(-K (t - s))."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if math.isinf(t):
        if K <= 0:
            raise IncompatibleParameters("t = inf needs positive curvature")
        return 1.0
    return max(1.0, math.exp(-K * t))


def m_tk(t: float, K: float) -> float:
    """(1 - exp(-2Kt)) / (2K), equal to t at K = 0."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if math.isinf(t):
        if K <= 0:
            raise IncompatibleParameters("t = inf needs positive curvature")
        return 1.0 / (2.0 * K)
    if K == 0:
        return float(t)
    return -math.expm1(-2.0 * K * t) / (2.0 * K)


l_trho = m_tk


def rate_fn(u: float, variant: str = "standard") -> float:
    if u < 0:
        raise ValueError("rate function is defined for u >= 0")
    if variant == "standard":
        return u * math.log1p(u) / 2.0
    if variant == "bennett":
        return (1.0 + u) * math.log1p(u) - u
    raise ValueError(f"variant must be one of {VARIANTS}")


def _poisson_tail(y: float, a: float, b: float, variant: str) -> float:
    """Chernoff bound from the MGF bound exp(a (e^{lam b} - lam b - 1))."""
    if not y > 0:
        raise ValueError("y must be positive")
    u = y / (a * b)
    if variant == "standard":
        expo = -(y / (2.0 * b)) * math.log1p(u)
    else:
        expo = -a * rate_fn(u, "bennett")
    if expo < _LOG_TINY:
        return 0.0
    return math.exp(expo)


# ---------------------------------------------------------------------------
# general bounds

def bound_thm31(y: float, spec: DeviationBoundSpec) -> float:
    """Wasserstein curvature K with jumps <= b and angle bracket <= V^2."""
    b, v2, K = spec.need("b", "v2", "K")
    c, m = c_tk(spec.t, K), m_tk(spec.t, K)
    return _poisson_tail(y, m * v2 / (b * c) ** 2, b * spec.lip * c, spec.variant)


def bound_cor36(y: float, spec: DeviationBoundSpec) -> float:
    """Gamma curvature rho, jumps <= b, ||Gamma f||_inf finite."""
    b, rho, g = spec.need("b", "rho", "gamma_inf")
    bl = b * spec.lip
    return _poisson_tail(y, 2.0 * l_trho(spec.t, rho) * g / bl ** 2, bl, spec.variant)


def bound_cor37(y: float, spec: DeviationBoundSpec) -> float:
    """Gamma curvature rho, jumps <= b, angle bracket <= V^2."""
    b, rho, v2 = spec.need("b", "rho", "v2")
    return _poisson_tail(y, l_trho(spec.t, rho) * v2 / b ** 2, b * spec.lip, spec.variant)


# ---------------------------------------------------------------------------
# birth-death corollaries (unit jumps)

def bound_cor46(y: float, spec: DeviationBoundSpec) -> float:
    """Bounded rates on the integers, K <= 0; V^2 is ||lam + nu||_inf."""
    K, v2 = spec.need("K", "v2")
    if K > 0:
        raise IncompatibleParameters("K > 0: use bound_cor49")
    if math.isinf(spec.t):
        raise IncompatibleParameters("no stationary form for K <= 0")
    return bound_thm31(y, replace(spec, b=1.0))


def bound_cor47(y: float, spec: DeviationBoundSpec) -> float:
    """Monotone rates (rho = 0) with ||Gamma f||_inf finite."""
    (g,) = spec.need("gamma_inf")
    return bound_cor36(y, replace(spec, b=1.0, rho=0.0, gamma_inf=g))


def bound_cor49(y: float, spec: DeviationBoundSpec, stationary: bool = False) -> float:
    """Finite space with K > 0; ``stationary`` gives the t -> inf form."""
    K, v2 = spec.need("K", "v2")
    if K <= 0:
        raise IncompatibleParameters("needs K > 0")
    if stationary:
        spec = replace(spec, t=math.inf)
    return bound_thm31(y, replace(spec, b=1.0))


def bound_cor410(y: float, spec: DeviationBoundSpec, lam0_plus_nun: float,
                 stationary: bool = False) -> float:
    """Finite space with rho > 0; uses ||Gamma f||_inf <= lip^2 (lam_0 + nu_n) / 2."""
    (rho,) = spec.need("rho")
    if rho <= 0:
        raise IncompatibleParameters("needs rho > 0")
    if stationary:
        spec = replace(spec, t=math.inf)
    g = spec.lip ** 2 * lam0_plus_nun / 2.0
    return bound_cor36(y, replace(spec, b=1.0, gamma_inf=g))


def bound_cor411(y: float, t: float, nu: float, lip: float) -> float:
    """Gaussian bound for the Ornstein-Uhlenbeck fluid limit (lam + nu = 1)."""
    if not y > 0:
        raise ValueError("y must be positive")
    scale = 1.0 if math.isinf(t) else -math.expm1(-2.0 * t)
    expo = -y * y / (scale * nu * lip ** 2)
    return 0.0 if expo < _LOG_TINY else math.exp(expo)


def ehrenfest_prelimit_bound(y: float, n: int, t: float, lam: float, nu: float,
                             lip: float) -> float:
    """Stationary-free Ehrenfest bound for h_n = f((x - lam n) / sqrt n).

    K = lam + nu = 1, ||lam + nu||_inf = n max(lam, nu), ||h_n||_Lip = lip / sqrt n.
    """
    spec = DeviationBoundSpec(t=t, lip=lip / math.sqrt(n), K=lam + nu,
                              v2=n * max(lam, nu))
    return bound_cor49(y, spec)


def bound_cor412(y: float, n: int, T: float, lam: float, nu: float, lip_n: float,
                 variant: str = "standard") -> float:
    """M/M/1 sample (X_{t_1}, ..., X_{t_n}), t_n = T, f l1-Lipschitz."""
    if n < 1 or not T > 0:
        raise ValueError("need n >= 1 and T > 0")
    return _poisson_tail(y, T * (lam + nu), n * lip_n, variant)


def h_mm1(tau: float, t: float, lam: float, nu: float, z: float) -> float:
    """t (lam + nu) (e^{tau z} - tau z - 1)."""
    x = tau * z
    return t * (lam + nu) * (math.expm1(x) - x)


def mgf_bound_mm1(tau: float, t: float, lam: float, nu: float, lip1: float) -> float:
    """Upper bound on E_x[exp(tau (u(X_t) - E_x u(X_t)))]."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return math.exp(h_mm1(tau, t, lam, nu, lip1))


# ---------------------------------------------------------------------------
# psi_{f,t} and the integrated bound

def psi_ft(lam: float, rates, f, t: float, rho: float, d: Metric | None = None) -> float:
    """sqrt(2) L_{t,rho} ||Gamma f||^{1/2}
    * max_x [sum_y (f(y)-f(x))^2 ((e^{lam l d} - 1) / (l d))^2 Q(x,y)]^{1/2}."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    f = np.asarray(f, dtype=float)
    d = _metric_for(rates, d)
    lip = lipschitz_seminorm(f, d)
    if lip == 0:
        raise ValueError("psi is undefined for constant f")
    q = rates.q
    active = q > 0
    z = lip * d.matrix()[active]
    with np.errstate(over="ignore"):
        factor = np.expm1(lam * z) / z
    df = (f[None, :] - f[:, None])[active]
    terms = np.zeros_like(q)
    with np.errstate(over="ignore", invalid="ignore"):
        terms[active] = df ** 2 * factor ** 2 * q[active]
    inner = terms.sum(axis=1)
    if not np.all(np.isfinite(inner)):
        return math.inf
    g = float(np.max(gamma(rates, f)))
    return math.sqrt(2.0) * l_trho(t, rho) * math.sqrt(g) * math.sqrt(float(inner.max()))


def _adaptive_simpson(fn, a: float, b: float, rtol: float, max_depth: int = 60) -> float:
    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = simpson(fa, flm, fm, m - a)
        right = simpson(fm, frm, fb, b - m)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fb, fm = fn(a), fn(b), fn(0.5 * (a + b))
    whole = simpson(fa, fm, fb, b - a)
    scale = abs(whole) if whole != 0 else 1.0
    return rec(a, b, fa, fm, fb, whole, rtol * scale, max_depth)


@dataclass(frozen=True)
class OptimizerConfig:
    rtol: float = 1e-8
    lam_start: float = 1e-6
    max_doublings: int = 200
    xtol: float = 1e-14


def bound_thm34(y: float, rates, f, t: float, rho: float, d: Metric | None = None,
                opt_cfg: OptimizerConfig = OptimizerConfig()) -> float:
    """exp inf_lam int_0^lam (psi(tau) - y) dtau.

    psi increases from 0, so the infimum sits at psi(lam*) = y.
    """
    if not y > 0:
        raise ValueError("y must be positive")

    def psi(lam):
        return 0.0 if lam == 0 else psi_ft(lam, rates, f, t, rho, d)

    lo, hi = 0.0, opt_cfg.lam_start
    for _ in range(opt_cfg.max_doublings):
        if psi(hi) > y:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ArithmeticError("could not bracket psi(lambda) = y")
    lam_star = optimize.brentq(lambda s: psi(s) - y, lo, hi, xtol=opt_cfg.xtol,
                               rtol=4 * np.finfo(float).eps)
    area = _adaptive_simpson(psi, 0.0, lam_star, opt_cfg.rtol)
    expo = area - y * lam_star
    return 0.0 if expo < _LOG_TINY else math.exp(min(expo, 0.0))


def chernoff_mm1(y: float, T: float, lam: float, nu: float, lip1: float) -> float:
    """inf_tau exp(-tau y + h(tau, T, lip1)), optimised numerically."""
    res = optimize.minimize_scalar(lambda tau: -tau * y + h_mm1(tau, T, lam, nu, lip1),
                                   bounds=(1e-12, 50.0 / lip1), method="bounded",
                                   options={"xatol": 1e-12})
    return math.exp(res.fun)


# ---------------------------------------------------------------------------
# curves

CLOSED_FORM = {
    "thm31": bound_thm31,
    "cor36": bound_cor36,
    "cor37": bound_cor37,
    "cor46": bound_cor46,
    "cor47": bound_cor47,
    "cor49": bound_cor49,
}


def evaluate_curve(name: str, y_grid, spec: DeviationBoundSpec, **kwargs) -> BoundCurve:
    """Evaluate a named closed-form bound on a y grid."""
    y_grid = np.asarray(y_grid, dtype=float)
    if name == "cor410":
        fn = bound_cor410
    elif name in CLOSED_FORM:
        fn = CLOSED_FORM[name]
    else:
        raise KeyError(f"unknown bound {name!r}")
    values = np.array([fn(y, spec, **kwargs) for y in y_grid])
    flags = []
    if np.any(values == 0.0):
        flags.append("underflow")
    if spec.variant == "bennett" and name != "thm31":
        flags.append("extension")
    if kwargs.get("stationary"):
        flags.append("stationary")
    return BoundCurve(name, y_grid, values, spec.variant, flags)
