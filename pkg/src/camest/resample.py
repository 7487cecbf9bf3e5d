"""Subsample-balanced adjustment statistics.

Averaging an arbitrary estimator over equal-size subsamples of the complete
cases and of a pattern's rows forces the two averages to share a mean under
MCAR (each term is the estimator on a sample of the same size from the same
projected distribution), so the adjustment contrast is exactly centred no
matter the estimator.  The subsample size is min(n0, n_m); the side already
at that size contributes its full sample once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dataset import CamError, MaskedDataset, Pattern, PatternGroups, project
from .ustat import sample_index_subsets

DEFAULT_DRAWS = 1000


@dataclass(frozen=True)
class BalancedAdjustment:
    theta0m_bar: float
    thetam_bar: float
    subsample_size: int
    draws_used: tuple  # (effective draws on A_0, effective draws on A_m)


def _mean_over_subsamples(ds, rows, m, size, estimator, budget, rng_key):
    n = rows.shape[0]
    total = math.comb(n, size)
    if total <= budget:
        subsets = combinations(range(n), size)
        count = total
    else:
        rng = np.random.default_rng(rng_key)
        subsets = sample_index_subsets(rng, n, size, budget)
        count = budget
    acc = 0.0
    for draw, pick in enumerate(subsets):
        sample = project(ds, rows[np.asarray(pick, dtype=np.intp)], m)
        try:
            value = float(estimator(sample))
        except Exception as exc:
            raise CamError(f"estimator failed on subsample draw {draw}") from exc
        acc += value
    return acc / count, count


def balanced_adjustment(
    ds: MaskedDataset,
    groups: PatternGroups,
    m: Pattern,
    estimator,
    budget: int = DEFAULT_DRAWS,
    seed=0,
) -> BalancedAdjustment:
    """Centred adjustment pair for pattern m via equal-size subsampling.

    ``estimator`` maps a ProjectedSample of size min(n0, n_m) to a real.
    Each side averages the estimator over all subsamples of that size when
    their number fits the budget, otherwise over ``budget`` seeded uniform
    draws (without replacement within a draw, independent across draws).  The
    side whose group already has the minimal size is used whole, once.
    """
    a0 = groups.complete
    if m not in groups.groups or groups.groups[m].shape[0] == 0:
        raise CamError(f"no rows carry pattern {m}")
    am = groups.groups[m]
    if a0.shape[0] == 0:
        raise CamError("no complete cases")
    size = min(a0.shape[0], am.shape[0])
    theta0m_bar, draws0 = _mean_over_subsamples(
        ds, a0, m, size, estimator, budget, [seed, 0]
    )
    thetam_bar, drawsm = _mean_over_subsamples(
        ds, am, m, size, estimator, budget, [seed, 1]
    )
    return BalancedAdjustment(
        theta0m_bar=theta0m_bar,
        thetam_bar=thetam_bar,
        subsample_size=size,
        draws_used=(draws0, drawsm),
    )
