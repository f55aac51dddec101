import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvctmc.chain_model import (BirthDeathRates, Metric, ehrenfest, gamma, mm1,
                                  two_state)
from curvctmc.curvature import (CurvatureEstimate, InvalidCertificate, covariance_check,
                                default_test_functions, gamma2_gap, gamma_criterion,
                                gamma_curvature_estimate, kantorovich_dual_gap,
                                kernel_contraction, w1_distance, wasserstein_criterion,
                                wasserstein_curvature_estimate)
from curvctmc.semigroup import transition_matrix

from .oracles import coupling_w1, random_rates


def monotone_chain(rng, n, rho):
    lam = np.append(np.cumsum((rho + rng.uniform(0, 0.5, n))[::-1])[::-1], 0.0)
    nu = np.insert(np.cumsum(rho + rng.uniform(0, 0.5, n)), 0, 0.0)
    return BirthDeathRates(lam, nu)


# --- criteria --------------------------------------------------------------

def test_wasserstein_criterion_ehrenfest():
    for lam, nu in ((0.5, 0.5), (0.2, 1.3)):
        cert = wasserstein_criterion(ehrenfest(12, lam, nu))
        assert cert.value == pytest.approx(lam + nu) and cert.valid


def test_wasserstein_criterion_mm1_is_zero():
    assert wasserstein_criterion(mm1(1.0, 2.0, 50)).value == 0.0


def test_bounded_rates_give_nonpositive_k():
    # truncated chains stand in for the integers
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = 40
        lam = rng.uniform(0.5, 2.0, n + 1)
        nu = np.insert(rng.uniform(0.5, 2.0, n), 0, 0.0)
        r = BirthDeathRates(lam, nu, truncated=True)
        assert wasserstein_criterion(r).value <= 0


def test_gamma_criterion_examples():
    assert gamma_criterion(ehrenfest(10, 0.3, 0.8)).value == pytest.approx(0.3)
    c = gamma_criterion(mm1(1.0, 2.0, 50))
    assert c.value == 0.0 and c.valid
    assert gamma_criterion(two_state(1.0, 2.0)).value == pytest.approx(1.0)


def test_gamma_criterion_on_integers_forces_zero():
    # any truncated chain whose rates satisfy the criterion has rho = 0 at best
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = 30
        lam = np.sort(rng.uniform(0.5, 2.0, n + 1))[::-1]
        nu = np.insert(np.sort(rng.uniform(0.5, 2.0, n)), 0, 0.0)
        # monotone and bounded: the rates settle to constants
        lam[20:] = lam[20]
        nu[20:] = nu[20]
        c = gamma_criterion(BirthDeathRates(lam, nu, truncated=True, margin=2))
        assert c.value <= 1e-15


def test_gamma_criterion_boundary_term_needed():
    # decreasing births with a tiny first death rate: interior-only scan claims 0.5
    lam = np.append(np.arange(3.0, 0.0, -0.5), 0.0)
    nu = np.array([0.0, 0.01] + [0.01 + 0.5 * k for k in range(1, len(lam) - 1)])
    r = BirthDeathRates(lam, nu)
    interior = gamma_criterion(r, boundary=False).value
    full = gamma_criterion(r).value
    assert interior == pytest.approx(0.5) and full == pytest.approx(0.01)
    assert gamma2_gap(r, np.arange(r.n_states, dtype=float), interior).min() < -0.3
    assert gamma2_gap(r, np.arange(r.n_states, dtype=float), full).min() >= -1e-12
    est = gamma_curvature_estimate(r, [0.5, 1.0])
    assert max(est.values) < interior
    assert min(est.values) >= full - 1e-9


def test_certificate_json():
    d = wasserstein_criterion(ehrenfest(3)).to_dict()
    assert set(d) == {"kind", "value", "valid", "argmin"}
    cert = gamma_criterion(BirthDeathRates([1.0, 3.0, 0.0], [0.0, 1.0, 0.5]))
    assert not cert.valid


# --- gamma2 gap ---------------------------------------------------------------

def test_gamma2_gap_constant():
    assert np.allclose(gamma2_gap(ehrenfest(5), np.ones(6), 0.5), 0.0)


@pytest.mark.parametrize("rates", [mm1(1.0, 2.0, 40), ehrenfest(15, 0.4, 0.7)],
                         ids=["mm1", "ehrenfest"])
def test_gamma2_gap_nonnegative(rates):
    rho = gamma_criterion(rates).value
    rng = np.random.default_rng(1)
    stop = rates.n_states - (rates.margin + 1 if rates.truncated else 0)
    for _ in range(100):
        f = rng.normal(size=rates.n_states)
        assert gamma2_gap(rates, f, rho)[:stop].min() >= -1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 20), rho=st.sampled_from([0.0, 0.3]))
def test_gamma2_gap_property(seed, n, rho):
    rng = np.random.default_rng(seed)
    r = monotone_chain(rng, n, rho)
    cert = gamma_criterion(r)
    assert cert.value >= rho - 1e-12
    f = rng.normal(size=n + 1)
    assert gamma2_gap(r, f, cert.value).min() >= -1e-12 * (1 + gamma(r, f).max())


# --- W1 ----------------------------------------------------------------------

def test_w1_examples():
    d0, d3 = np.eye(4)[0], np.eye(4)[3]
    assert w1_distance(d0, d3) == 3.0
    assert w1_distance([0.5, 0.0, 0.5], [0.0, 1.0, 0.0]) == pytest.approx(1.0)
    mu = np.array([0.2, 0.3, 0.5])
    assert w1_distance(mu, mu) == 0.0


def test_w1_three_point_couplings_by_grid():
    # every coupling of two laws on 3 points is fixed by its top-left 2x2 block
    mu, nu = np.array([0.2, 0.5, 0.3]), np.array([0.4, 0.1, 0.5])
    dm = Metric.unit(3).matrix()
    g = np.linspace(0.0, 0.5, 11)
    a, b, c, d = np.meshgrid(g, g, g, g, indexing="ij")
    plan = np.empty(a.shape + (3, 3))
    plan[..., 0, 0], plan[..., 0, 1], plan[..., 1, 0], plan[..., 1, 1] = a, b, c, d
    plan[..., 0, 2] = mu[0] - a - b
    plan[..., 1, 2] = mu[1] - c - d
    plan[..., 2, 0] = nu[0] - a - c
    plan[..., 2, 1] = nu[1] - b - d
    plan[..., 2, 2] = mu[2] - plan[..., 2, 0] - plan[..., 2, 1]
    ok = np.all(plan >= -1e-12, axis=(-2, -1))
    cost = np.sum(plan * dm, axis=(-2, -1))[ok]
    assert cost.min() == pytest.approx(w1_distance(mu, nu), abs=1e-12)
    assert w1_distance(mu, nu) == pytest.approx(0.4)
    assert coupling_w1([0.5, 0.0, 0.5], [0.0, 1.0, 0.0], dm) == pytest.approx(1.0)


def test_w1_matches_vertex_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(40):
        size = int(rng.integers(2, 5))
        m = Metric(rng.uniform(0.1, 3.0, size - 1))
        mu, nu = rng.dirichlet(np.ones(size), 2)
        assert w1_distance(mu, nu, m) == pytest.approx(coupling_w1(mu, nu, m.matrix()),
                                                       abs=1e-9)


def test_w1_rejects_unnormalised():
    with pytest.raises(ValueError):
        w1_distance([0.5, 0.6], [1.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), size=st.integers(2, 8))
def test_w1_is_metric(seed, size):
    rng = np.random.default_rng(seed)
    m = Metric(rng.uniform(0.1, 2.0, size - 1))
    a, b, c = rng.dirichlet(np.ones(size), 3)
    assert w1_distance(a, b, m) == pytest.approx(w1_distance(b, a, m), abs=1e-12)
    assert w1_distance(a, a, m) == 0.0
    assert w1_distance(a, c, m) <= w1_distance(a, b, m) + w1_distance(b, c, m) + 1e-12
    if not np.allclose(a, b):
        assert w1_distance(a, b, m) > 0


# --- duality -------------------------------------------------------------------

def test_dual_gap_examples():
    mu = np.array([0.0, 0.2, 0.8])
    nu = np.array([0.5, 0.3, 0.2])
    assert kantorovich_dual_gap(mu, nu, None, [np.arange(3.0)]) == pytest.approx(0, abs=1e-12)
    assert kantorovich_dual_gap(mu, mu, None, [np.arange(3.0)]) == 0.0


def test_dual_gap_shrinks_with_sample():
    rng = np.random.default_rng(3)
    mu, nu = rng.dirichlet(np.ones(8), 2)
    fns = [np.concatenate([[0], np.cumsum(rng.uniform(-1, 1, 7))]) for _ in range(200)]
    w = w1_distance(mu, nu)
    gaps = [kantorovich_dual_gap(mu, nu, None, fns[:k]) for k in (10, 50, 200)]
    assert all(-1e-12 <= g <= w + 1e-12 for g in gaps)
    assert gaps[0] >= gaps[1] >= gaps[2]


# --- empirical curvature -------------------------------------------------------

def test_two_state_exact_curvature():
    est = wasserstein_curvature_estimate(two_state(0.7, 1.6), [0.1, 1.0, 3.0])
    assert np.allclose(est.values, 2.3, rtol=1e-8)
    assert est.direction == "exact"


def test_ehrenfest_estimate_above_criterion():
    est = wasserstein_curvature_estimate(ehrenfest(10), [0.1, 1.0])
    assert min(est.values) >= 1 - 1e-9


def test_zero_rates_estimate():
    r = BirthDeathRates(np.zeros(4), np.zeros(4), check_irreducible=False)
    est = wasserstein_curvature_estimate(r, [0.5, 1.0])
    assert np.allclose(est.values, 0.0)


def test_estimate_grid_validation():
    with pytest.raises(ValueError):
        CurvatureEstimate("gamma", (1.0, 0.5), (0.0, 0.0), "upper")


def test_adjacent_pairs_equal_all_pairs():
    rng = np.random.default_rng(5)
    for n in range(2, 13):
        r = random_rates(rng, n)
        d = Metric(rng.uniform(0.3, 2.0, n))
        for t in (0.2, 1.5):
            assert kernel_contraction(r, t, d) == pytest.approx(
                kernel_contraction(r, t, d, pairs="all"), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 15))
def test_wasserstein_sandwich(seed, n):
    r = random_rates(np.random.default_rng(seed), n)
    k = wasserstein_criterion(r).value
    est = wasserstein_curvature_estimate(r, [0.1, 0.5, 1.0, 2.0])
    assert all(k <= v + 1e-9 for v in est.values)


def test_gamma_estimate_examples():
    r = ehrenfest(10)
    rho = gamma_criterion(r).value
    for f in (np.arange(11.0), np.sin(np.arange(11.0))):
        est = gamma_curvature_estimate(r, [0.5, 1.0], test_fns=[f])
        assert min(est.values) >= rho - 1e-9
    est = gamma_curvature_estimate(r, [1e-4, 1e-3])
    assert est.direction == "upper"
    assert abs(est.values[0] - est.values[1]) <= 0.1
    assert rho <= min(est.values) + 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 12), rho=st.sampled_from([0.0, 0.4]))
def test_gamma_sandwich(seed, n, rho):
    r = monotone_chain(np.random.default_rng(seed), n, rho)
    cert = gamma_criterion(r)
    est = gamma_curvature_estimate(r, [0.2, 1.0], n_random=10, seed=seed)
    assert all(cert.value <= v + 1e-9 for v in est.values)


def test_default_family_size():
    fns = default_test_functions(6, 50, seed=0)
    assert len(fns) == 1 + 6 + 50
    assert all(np.all(np.abs(f) <= 5) for f in fns)


# --- covariance ----------------------------------------------------------------

def test_covariance_examples():
    r = mm1(1.0, 2.0, 60)
    cert = gamma_criterion(r)
    g = np.random.default_rng(0).normal(size=61)
    lhs, rhs = covariance_check(r, 3, np.ones(61), g, 1.0, cert)
    assert lhs == pytest.approx(0, abs=1e-14) and rhs == 0.0
    lhs, rhs = covariance_check(r, 3, g, g, 0.0, cert)
    assert lhs == pytest.approx(0, abs=1e-14) and rhs == 0.0


def test_variance_bound_mm1():
    r = mm1(1.0, 2.0, 60)
    cert = gamma_criterion(r)
    rng = np.random.default_rng(2)
    for _ in range(50):
        f = rng.normal(size=61)
        x0 = int(rng.integers(0, 30))
        lhs, rhs = covariance_check(r, x0, f, f, 1.0, cert)
        assert lhs <= rhs + 1e-9


def test_covariance_rejects_invalid_certificate():
    r = BirthDeathRates([1.0, 3.0, 0.0], [0.0, 1.0, 0.5])
    with pytest.raises(InvalidCertificate):
        covariance_check(r, 0, np.arange(3.0), np.arange(3.0), 1.0, gamma_criterion(r))
    with pytest.raises(InvalidCertificate):
        covariance_check(r, 0, np.arange(3.0), np.arange(3.0), 1.0, wasserstein_criterion(r))


# --- shifted-start identity for the queue --------------------------------------

def test_integration_by_parts_interior():
    r = mm1(1.0, 2.0, 300)
    p = transition_matrix(r, 1.0).matrix
    u = np.zeros(301)
    u[40:46] = np.random.default_rng(1).normal(size=6)
    shifted = np.append(u[1:], 0.0)
    assert np.max(np.abs(p[1:52] @ u - p[:51] @ shifted)) < 1e-6


def test_integration_by_parts_fails_next_to_zero():
    # a path started at x+1 only behaves like a shifted path from x until it
    # reaches 0, so mass supported at the reflecting state breaks the identity
    r = mm1(1.0, 2.0, 300)
    p = transition_matrix(r, 1.0).matrix
    u = np.zeros(301)
    u[0] = 1.0
    shifted = np.append(u[1:], 0.0)
    assert np.max(np.abs(p[1:52] @ u - p[:51] @ shifted)) > 0.1
