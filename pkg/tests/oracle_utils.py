"""Independent oracles used by the test suite.

Everything here is deliberately written the slow, literal way (pure-Python
loops over explicit index subsets, exhaustive outcome enumeration, direct
quadrature) so it shares no code path with the library it checks.
"""

import math
from itertools import combinations, product

import numpy as np
from scipy.integrate import quad


def brute_pair_entry(recs_a, f_a, recs_b, f_b, r):
    """Order-(4r-2) product-of-differences average over one pooled record list.

    ``recs_a``/``recs_b`` are parallel lists (two projections of the same
    rows); subsets are enumerated in increasing index order and the two
    kernels are evaluated at the canonical argument slots.
    """
    k = 4 * r - 2
    a1 = list(range(r))
    a2 = list(range(2 * r - 1, 3 * r - 1))
    b1 = [0] + list(range(r, 2 * r - 1))
    b2 = [2 * r - 1] + list(range(3 * r - 1, 4 * r - 2))
    total, count = 0.0, 0
    for sub in combinations(range(len(recs_a)), k):
        fa = f_a(*[recs_a[sub[i]] for i in a1]) - f_a(*[recs_a[sub[i]] for i in a2])
        fb = f_b(*[recs_b[sub[i]] for i in b1]) - f_b(*[recs_b[sub[i]] for i in b2])
        total += 0.5 * fa * fb
        count += 1
    return total / count


def brute_ustat(recs, f, r):
    """Plain U-statistic: average of f over all increasing r-subsets."""
    total, count = 0.0, 0
    for sub in combinations(range(len(recs)), r):
        total += f(*[recs[i] for i in sub])
        count += 1
    return total / count


def enumerate_discrete_cam(atoms0, probs0, atoms1, probs1, n0, n1, phim, theta):
    """Exact moments of the discrete CAM mean estimator by full enumeration.

    Rows 1..n0 are complete draws from (atoms0, probs0); rows n0+1..n0+n1
    carry the missing pattern and draw from (atoms1, probs1).  The estimators
    are theta0 = mean of x over complete rows, theta0m = mean of phim(y) over
    complete rows, thetam = mean of phim(y) over pattern rows.  Returns the
    exact (omega, lam, B, b0) and a closure evaluating the exact
    MSE(theta_gamma) - MSE(theta0) at any gamma.
    """
    m = {k: 0.0 for k in ("t0", "t0m", "tm", "t0sq", "t0_t0m", "t0_tm", "dsq", "d")}
    for combo0 in product(range(len(atoms0)), repeat=n0):
        p0 = math.prod(probs0[i] for i in combo0)
        t0 = sum(atoms0[i][0] for i in combo0) / n0
        t0m = sum(phim(atoms0[i][1]) for i in combo0) / n0
        for combo1 in product(range(len(atoms1)), repeat=n1):
            p = p0 * math.prod(probs1[i] for i in combo1)
            tm = sum(phim(atoms1[i][1]) for i in combo1) / n1
            diff = t0m - tm
            m["t0"] += p * t0
            m["t0m"] += p * t0m
            m["tm"] += p * tm
            m["t0sq"] += p * t0 * t0
            m["t0_t0m"] += p * t0 * t0m
            m["t0_tm"] += p * t0 * tm
            m["dsq"] += p * diff * diff
            m["d"] += p * diff

    omega = m["t0_t0m"] - m["t0"] * m["t0m"]
    lam = m["dsq"] - m["d"] ** 2
    bias_adj = m["d"]
    bias0 = m["t0"] - theta

    def mse_difference(gamma: float) -> float:
        # E[(t0 - g d - theta)^2] - E[(t0 - theta)^2], expanded in raw moments
        return (
            gamma * gamma * m["dsq"]
            - 2.0 * gamma * (m["t0_t0m"] - m["t0_tm"])
            + 2.0 * gamma * theta * m["d"]
        )

    return {
        "omega": omega,
        "lam": lam,
        "bias_adj": bias_adj,
        "bias0": bias0,
        "mse_difference": mse_difference,
    }


def quad_conditional_mean_exp_normal(y: float, sigma: float) -> float:
    """E(X | Y=y) for X ~ Exp(1), Y|X ~ N(X, sigma^2), by direct quadrature.

    The integrand is rescaled by its maximum so the ratio stays accurate even
    when the posterior mass is far in a tail.
    """

    def exponent(x):
        return -x - (y - x) ** 2 / (2.0 * sigma**2)

    peak = max(exponent(0.0), exponent(max(0.0, y - sigma**2)))
    weight = lambda x: math.exp(exponent(x) - peak)
    upper = max(10.0, y + 10.0)
    num = quad(lambda x: x * weight(x), 0.0, upper, limit=400)[0]
    den = quad(weight, 0.0, upper, limit=400)[0]
    return num / den


def random_psd_matrix(rng, k, rank=None):
    """A random symmetric positive semidefinite k x k matrix."""
    rank = k if rank is None else rank
    a = rng.standard_normal((k, rank))
    return a @ a.T


def make_binade_dataset(rng, n, d, miss_prob=0.4):
    """A masked dataset whose responses are integers inside one binade.

    Within [2^20, 2^21) the float grid has constant spacing, so adding an
    integer shift or applying a power-of-two scale commutes exactly with
    rounding; equivariance of the regression estimators is then testable
    with ==.
    """
    x = rng.standard_normal((n, d))
    y = (2**20 + rng.integers(0, 2**18, n)).astype(float)
    observed = np.ones((n, d), dtype=bool)
    observed[rng.random(n) < miss_prob, 0] = False
    x_masked = x.copy()
    x_masked[~observed] = np.nan
    return x_masked, y, observed
