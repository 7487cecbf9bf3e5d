import math

import numpy as np
import pytest

from camest.core import CamComponents, combine
from camest.dataset import (
    CamError,
    MaskedDataset,
    Pattern,
    group_by_pattern,
)
from camest.resample import balanced_adjustment
from camest.ustat import adjustment_pair, response_mean_kernel


def _split_dataset(rng, n0, n1):
    x = rng.standard_normal((n0 + n1, 1))
    y = x[:, 0] + 0.2 * rng.standard_normal(n0 + n1)
    observed = np.ones((n0 + n1, 1), dtype=bool)
    observed[n0:, 0] = False
    xm = x.copy()
    xm[~observed] = np.nan
    return MaskedDataset(x=xm, y=y, observed=observed)


def _mean_estimator(sample):
    return float(sample.y.mean())


def test_equal_sizes_reduce_to_plain_adjustment_pair():
    ds = _split_dataset(np.random.default_rng(0), 8, 8)
    groups = group_by_pattern(ds)
    m = Pattern((1,))
    bal = balanced_adjustment(ds, groups, m, _mean_estimator, budget=1000)
    assert bal.draws_used == (1, 1)
    assert bal.subsample_size == 8
    est0, estm = adjustment_pair(ds, groups, m, response_mean_kernel(pattern=m))
    assert bal.theta0m_bar == pytest.approx(est0.value, abs=1e-15)
    assert bal.thetam_bar == pytest.approx(estm.value, abs=1e-15)


def test_linearity_exhaustive_mean_equals_group_mean():
    # averaging subsample means over all C(6, 3) subsets returns the grand mean
    ds = _split_dataset(np.random.default_rng(1), 6, 3)
    groups = group_by_pattern(ds)
    m = Pattern((1,))
    bal = balanced_adjustment(ds, groups, m, _mean_estimator, budget=10**6)
    assert bal.subsample_size == 3
    assert bal.draws_used == (math.comb(6, 3), 1)
    grand0 = ds.y[groups.complete].mean()
    grandm = ds.y[groups.groups[m]].mean()
    assert bal.theta0m_bar == pytest.approx(grand0, abs=1e-12)
    assert bal.thetam_bar == pytest.approx(grandm, abs=1e-12)


def test_exhaustive_mode_permutation_invariant():
    rng = np.random.default_rng(2)
    ds = _split_dataset(rng, 6, 4)
    groups = group_by_pattern(ds)
    m = Pattern((1,))
    base = balanced_adjustment(ds, groups, m, _mean_estimator, budget=10**6)
    # permute rows inside each group; exhaustive enumeration must not care
    perm = np.concatenate([
        np.random.default_rng(3).permutation(groups.complete),
        np.random.default_rng(4).permutation(groups.groups[m]),
    ])
    ds2 = MaskedDataset(x=ds.x[perm], y=ds.y[perm], observed=ds.observed[perm])
    groups2 = group_by_pattern(ds2)
    again = balanced_adjustment(ds2, groups2, m, _mean_estimator, budget=10**6)
    assert again.theta0m_bar == pytest.approx(base.theta0m_bar, abs=1e-12)
    assert again.thetam_bar == pytest.approx(base.thetam_bar, abs=1e-12)


def test_nonlinear_estimator_budgeted_draws_are_seeded():
    ds = _split_dataset(np.random.default_rng(5), 30, 12)
    groups = group_by_pattern(ds)
    m = Pattern((1,))
    med = lambda s: float(np.median(s.y))
    one = balanced_adjustment(ds, groups, m, med, budget=50, seed=9)
    two = balanced_adjustment(ds, groups, m, med, budget=50, seed=9)
    other = balanced_adjustment(ds, groups, m, med, budget=50, seed=10)
    assert one.theta0m_bar == two.theta0m_bar
    assert one.draws_used == (50, 1)
    assert one.theta0m_bar != other.theta0m_bar


def test_mcar_centering_over_replications():
    rng = np.random.default_rng(6)
    reps = 100
    diffs = np.empty(reps)
    for rep in range(reps):
        n = 40
        x = rng.standard_normal((n, 1))
        y = x[:, 0] + 0.3 * rng.standard_normal(n)
        observed = np.ones((n, 1), dtype=bool)
        observed[rng.random(n) < 0.5, 0] = False
        if observed[:, 0].all() or not observed[:, 0].any():
            observed[0, 0] = True
            observed[1, 0] = False
        xm = x.copy()
        xm[~observed] = np.nan
        ds = MaskedDataset(x=xm, y=y, observed=observed)
        groups = group_by_pattern(ds)
        bal = balanced_adjustment(ds, groups, Pattern((1,)), _mean_estimator,
                                  budget=200, seed=rep)
        diffs[rep] = bal.theta0m_bar - bal.thetam_bar
    se = diffs.std(ddof=1) / math.sqrt(reps)
    assert abs(diffs.mean()) < 3 * se


def test_estimator_failure_reports_draw():
    ds = _split_dataset(np.random.default_rng(7), 10, 4)
    groups = group_by_pattern(ds)

    def broken(sample):
        raise RuntimeError("boom")

    with pytest.raises(CamError, match="draw 0"):
        balanced_adjustment(ds, groups, Pattern((1,)), broken, budget=5)


def test_missing_group_rejected():
    ds = MaskedDataset.from_arrays(np.ones((4, 1)), np.zeros(4))
    groups = group_by_pattern(ds)
    with pytest.raises(CamError, match="no rows"):
        balanced_adjustment(ds, groups, Pattern((1,)), _mean_estimator)


def test_balanced_pair_combines_to_cc_at_zero_gamma():
    ds = _split_dataset(np.random.default_rng(8), 12, 5)
    groups = group_by_pattern(ds)
    bal = balanced_adjustment(ds, groups, Pattern((1,)), _mean_estimator, budget=100)
    theta0 = float(ds.x[groups.complete, 0].mean())
    c = CamComponents(theta0=theta0, theta0M=[bal.theta0m_bar], thetaM=[bal.thetam_bar])
    assert combine(c, [0.0]) == theta0
