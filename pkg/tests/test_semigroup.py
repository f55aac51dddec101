import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvctmc.chain_model import (BirthDeathRates, ehrenfest, generator_apply, mm1,
                                  stationary_distribution, two_state)
from curvctmc.semigroup import (SeriesCapExceeded, TruncationWarning, UniformizationConfig,
                                apply_semigroup, expectation, kernel_row,
                                transition_matrix, truncation_tail_mass)

from .oracles import expm_kernel, random_general, random_rates


def zero_chain(n=5, truncated=False):
    return BirthDeathRates(np.zeros(n), np.zeros(n), truncated=truncated,
                           check_irreducible=False)


def test_config_validation():
    with pytest.raises(ValueError):
        UniformizationConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        UniformizationConfig(tolerance=1.0)
    with pytest.raises(ValueError):
        UniformizationConfig(max_terms=0)


def test_time_zero_identity():
    k = transition_matrix(ehrenfest(6), 0.0)
    assert np.array_equal(k.matrix, np.eye(7)) and k.error == 0.0


def test_zero_rates_identity():
    assert np.array_equal(transition_matrix(zero_chain(), 3.7).matrix, np.eye(5))


def test_two_state_closed_form():
    t = math.log(2)
    p = transition_matrix(two_state(1.0, 1.0), t).matrix
    assert p[0, 0] == pytest.approx(0.5 + 0.5 * math.exp(-2 * t), abs=1e-12)
    assert p[0, 0] == pytest.approx(0.625, abs=1e-12)


def test_agrees_with_pade_exponential():
    rng = np.random.default_rng(0)
    for t in (0.05, 0.7, 3.0):
        r = random_rates(rng, 15)
        assert np.max(np.abs(transition_matrix(r, t).matrix - expm_kernel(r, t))) < 1e-11
    g = random_general(rng, 6)
    assert np.max(np.abs(transition_matrix(g, 1.3).matrix - expm_kernel(g, 1.3))) < 1e-11


def test_error_bound_reported():
    k = transition_matrix(ehrenfest(10), 2.0)
    assert 0 < k.error < 1e-12


def test_series_cap():
    with pytest.raises(SeriesCapExceeded):
        transition_matrix(ehrenfest(10), 5.0, UniformizationConfig(max_terms=5))


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        transition_matrix(ehrenfest(3), -1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 20),
       s=st.floats(0.0, 2.0), t=st.floats(0.0, 2.0))
def test_kernel_invariants(seed, n, s, t):
    rng = np.random.default_rng(seed)
    r = random_rates(rng, n)
    ps = transition_matrix(r, s).matrix
    pt = transition_matrix(r, t).matrix
    pst = transition_matrix(r, s + t).matrix
    assert np.all(ps >= 0)
    assert np.allclose(ps.sum(axis=1), 1.0, atol=1e-10)
    assert np.max(np.abs(pst - ps @ pt)) <= 1e-9
    f = rng.normal(size=n + 1)
    assert np.max(np.abs(pt @ f)) <= np.max(np.abs(f)) + 1e-12
    pi = stationary_distribution(r)
    assert np.max(np.abs(pi @ pt - pi)) < 1e-10


def test_apply_semigroup_examples():
    r = ehrenfest(8, 0.4, 0.6)
    assert np.allclose(apply_semigroup(r, np.full(9, 2.5), 1.2), 2.5, atol=1e-12)
    f = np.random.default_rng(2).normal(size=9)
    assert np.array_equal(apply_semigroup(r, f, 0.0), f)
    assert np.allclose(apply_semigroup(r, f, 0.9), transition_matrix(r, 0.9).matrix @ f,
                       atol=1e-12)


def test_derivative_at_zero_is_generator():
    r = random_rates(np.random.default_rng(4), 10)
    f = np.random.default_rng(5).normal(size=11)
    h = 1e-5
    fd = (apply_semigroup(r, f, h) - f) / h
    lf = generator_apply(r, f)
    assert np.max(np.abs(fd - lf)) < 50 * h * (1 + np.abs(lf).max())


def test_expectation_examples():
    r = two_state(1.0, 1.0)
    assert expectation(r, 1, np.array([0.0, 1.0]), 0.0) == 1.0
    assert expectation(r, 0, np.array([0.0, 1.0]), math.log(2)) == pytest.approx(0.375,
                                                                              abs=1e-12)
    assert expectation(ehrenfest(5), 2, np.full(6, -1.5), 0.8) == pytest.approx(-1.5)
    with pytest.raises(ValueError):
        expectation(r, 2, np.zeros(2), 1.0)


def test_kernel_row_matches_matrix():
    r = ehrenfest(12, 0.3, 0.7)
    p = transition_matrix(r, 0.6).matrix
    for x in (0, 5, 12):
        assert np.allclose(kernel_row(r, x, 0.6), p[x], atol=1e-13)


def test_tail_mass_examples():
    assert truncation_tail_mass(zero_chain(8, truncated=True), 2, 5.0) == 0.0
    assert truncation_tail_mass(mm1(1.0, 2.0, 200), 0, 1.0, margin=2) < 1e-12
    r = mm1(1.0, 2.0, 20)
    with pytest.warns(TruncationWarning):
        mass = truncation_tail_mass(r, 20, 1.0)
    assert mass >= transition_matrix(r, 1.0).matrix[20, 20] > 0


def test_truncated_row_warns_on_leakage():
    r = mm1(2.0, 1.0, 15)  # supercritical queue piles up at the top
    with pytest.warns(TruncationWarning):
        kernel_row(r, 10, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kernel_row(mm1(1.0, 2.0, 200), 0, 1.0)


def test_csv_export(tmp_path):
    k = transition_matrix(two_state(1.0, 2.0), 0.5)
    p = tmp_path / "k.csv"
    k.to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0] == "x,0,1" and len(rows) == 3
    assert float(rows[1].split(",")[1]) == k.matrix[0, 0]
