"""Independent reference computations shared by the tests.

Everything here is written with explicit loops or generic library calls so
it shares no code path with the package under test.
"""
import itertools
import math

import numpy as np
import scipy.linalg

from curvctmc.chain_model import BirthDeathRates, GeneralRates


def random_rates(rng, n_max, lo=0.1, hi=3.0):
    lam = rng.uniform(lo, hi, n_max + 1)
    nu = rng.uniform(lo, hi, n_max + 1)
    lam[-1] = 0.0
    nu[0] = 0.0
    return BirthDeathRates(lam, nu)


def random_general(rng, n, density=0.6):
    q = rng.uniform(0.1, 2.0, (n, n)) * (rng.random((n, n)) < density)
    return GeneralRates(q)


def loop_generator(q, f):
    n = len(f)
    return np.array([sum((f[y] - f[x]) * q[x][y] for y in range(n) if y != x)
                     for x in range(n)])


def loop_gamma(q, f, g):
    n = len(f)
    return np.array([0.5 * sum((f[y] - f[x]) * (g[y] - g[x]) * q[x][y]
                               for y in range(n) if y != x) for x in range(n)])


def dense_gamma2(q, f):
    lf = loop_generator(q, f)
    return 0.5 * (loop_generator(q, loop_gamma(q, f, f)) - 2.0 * loop_gamma(q, f, lf))


def expm_kernel(rates, t):
    """P_t by scipy's Pade matrix exponential."""
    return scipy.linalg.expm(t * rates.generator_matrix())


def coupling_w1(mu, nu, dm, grid=None):
    """Minimum transport cost by enumerating the vertices of the
    transportation polytope (north-west-corner style over all orderings)."""
    mu = np.asarray(mu, float)
    nu = np.asarray(nu, float)
    n = len(mu)
    best = math.inf
    for rows in itertools.permutations(range(n)):
        for cols in itertools.permutations(range(n)):
            a, b = mu.copy(), nu.copy()
            cost = 0.0
            i = j = 0
            while i < n and j < n:
                r, c = rows[i], cols[j]
                m = min(a[r], b[c])
                cost += m * dm[r, c]
                a[r] -= m
                b[c] -= m
                if a[r] <= 1e-15:
                    i += 1
                else:
                    j += 1
            best = min(best, cost)
    return best
