"""U-statistics over complete and incomplete observations.

The engine averages a symmetric kernel of order r over unordered r-subsets
of a sample: every subset when their count fits the budget, otherwise over
uniformly sampled distinct-index subsets.  On top of it sit the complete-case
statistic, the per-pattern adjustment pairs, the order-(4r-2) estimators of
the covariance geometry (omega, lambda, psi), and the data-driven CAM
U-statistic with plug-in Gaussian confidence intervals.

Kernel evaluators are vectorised: they receive ``x`` of shape (B, r, d_m)
and ``y`` of shape (B, r) and return (B,) values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.stats import norm

from . import core
from .dataset import (
    AdjustmentSet,
    CamError,
    CamWarning,
    MaskedDataset,
    Pattern,
    PatternGroups,
    ProjectedSample,
    project,
)

DEFAULT_GEOMETRY_BUDGET = 100_000
DEFAULT_ESTIMATE_BUDGET = 500_000

# Substream tags so every geometry entry draws from its own reproducible
# stream regardless of how many patterns are in play.
_PSI, _OMEGA, _LAMBDA_DIAG, _LAMBDA_OFF, _PAIR_FIT = 0, 1, 2, 3, 4


def _pattern_code(m: Pattern) -> int:
    return sum(b << j for j, b in enumerate(m.bits))


@dataclass(frozen=True)
class UKernelSpec:
    """A permutation-symmetric kernel of order r over projected records."""

    order: int
    evaluator: callable = field(repr=False)
    pattern: Pattern = None  # projection its arguments live in; None = unrestricted
    name: str = "kernel"

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("kernel order must be >= 1")

    def on_subsets(self, sample: ProjectedSample, idx: np.ndarray) -> np.ndarray:
        """Evaluate on the rows selected by each row of ``idx`` (B, r)."""
        return np.asarray(self.evaluator(sample.x[idx], sample.y[idx]), dtype=float)


@dataclass(frozen=True)
class UStatEstimate:
    value: float
    exact: bool
    subsets_used: int


@dataclass(frozen=True)
class UGeometryEstimate:
    """Estimated (omega, lambda, psi) for the CAM U-statistic."""

    omegaU: np.ndarray
    lambdaU: np.ndarray
    psiU: float
    budget: int


@dataclass(frozen=True)
class CamUStatResult:
    estimate: float
    gamma: np.ndarray
    se: float
    ci: tuple
    level: float
    cc_estimate: float
    cc_se: float
    cc_ci: tuple
    geometry: UGeometryEstimate
    components: core.CamComponents
    n0: int
    patterns: tuple
    order: int
    warnings: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "estimate": self.estimate,
            "se": self.se,
            "ci": [self.ci[0], self.ci[1]],
            "level": self.level,
            "gamma": [float(v) for v in self.gamma],
            "psi": self.geometry.psiU,
            "omega": [float(v) for v in self.geometry.omegaU],
            "lambda": [[float(v) for v in row] for row in self.geometry.lambdaU],
            "n0": self.n0,
            "patterns": [str(m) for m in self.patterns],
            "cc": {
                "estimate": self.cc_estimate,
                "se": self.cc_se,
                "ci": [self.cc_ci[0], self.cc_ci[1]],
            },
            "warnings": list(self.warnings),
        }


def all_index_subsets(n: int, k: int) -> np.ndarray:
    """All C(n, k) increasing index tuples, as an (C, k) array."""
    if k == 1:
        return np.arange(n, dtype=np.intp)[:, None]
    if k == 2:
        return np.column_stack(np.triu_indices(n, k=1)).astype(np.intp, copy=False)
    combos = np.fromiter(
        (i for c in combinations(range(n), k) for i in c),
        dtype=np.intp,
        count=math.comb(n, k) * k,
    )
    return combos.reshape(-1, k)


def sample_index_subsets(rng: np.random.Generator, n: int, k: int, count: int) -> np.ndarray:
    """``count`` uniform distinct-index k-subsets of range(n), sorted within rows.

    Vectorised Floyd sampling: draw positions into a growing prefix, resolving
    collisions to the newly admitted index, which preserves uniformity over
    unordered subsets.
    """
    if k > n:
        raise ValueError(f"cannot draw {k}-subsets from {n} items")
    out = np.empty((count, k), dtype=np.intp)
    for j, top in enumerate(range(n - k, n)):
        r = rng.integers(0, top + 1, size=count)
        if j:
            dup = (out[:, :j] == r[:, None]).any(axis=1)
            r = np.where(dup, top, r)
        out[:, j] = r
    out.sort(axis=1)
    return out


def _subsets_for(rng_key, n: int, k: int, budget: int) -> tuple[np.ndarray, bool]:
    total = math.comb(n, k)
    if total <= budget:
        return all_index_subsets(n, k), True
    rng = np.random.default_rng(rng_key)
    return sample_index_subsets(rng, n, k, budget), False


def eval_ustat(
    sample: ProjectedSample,
    kernel: UKernelSpec,
    budget: int = DEFAULT_ESTIMATE_BUDGET,
    seed=0,
) -> UStatEstimate:
    """Average the kernel over unordered r-subsets of the sample.

    Exact (full enumeration) when C(n, r) <= budget; otherwise a seeded
    Monte Carlo average over ``budget`` uniform distinct-index subsets.
    """
    r = kernel.order
    if sample.n < r:
        raise CamError(f"sample of size {sample.n} cannot support an order-{r} kernel")
    idx, exact = _subsets_for(seed, sample.n, r, budget)
    values = kernel.on_subsets(sample, idx)
    return UStatEstimate(value=float(values.mean()), exact=exact, subsets_used=idx.shape[0])


def cc_ustat(
    ds: MaskedDataset,
    groups: PatternGroups,
    phi: UKernelSpec,
    budget: int = DEFAULT_ESTIMATE_BUDGET,
    seed=0,
) -> UStatEstimate:
    """The complete-case U-statistic, over A_0 with the full projection."""
    a0 = groups.complete
    if a0.shape[0] < phi.order:
        raise CamError(
            f"{a0.shape[0]} complete cases cannot support an order-{phi.order} kernel"
        )
    sample = project(ds, a0, groups.complete_pattern)
    return eval_ustat(sample, phi, budget=budget, seed=seed)


def adjustment_pair(
    ds: MaskedDataset,
    groups: PatternGroups,
    m: Pattern,
    phim: UKernelSpec,
    adjustment: AdjustmentSet = None,
    budget: int = DEFAULT_ESTIMATE_BUDGET,
    seed=0,
) -> tuple[UStatEstimate, UStatEstimate]:
    """(theta0m, thetam): the same kernel on A_0 and on m's effective rows."""
    if phim.pattern is not None and phim.pattern != m:
        raise CamError(f"kernel expects projection {phim.pattern}, asked to run on {m}")
    if adjustment is not None:
        rows_m = adjustment.indices(m)  # KeyError if m absent
    else:
        if m not in groups.groups:
            raise CamError(f"no rows carry pattern {m}")
        rows_m = groups.groups[m]
    a0 = groups.complete
    r = phim.order
    if a0.shape[0] < r or rows_m.shape[0] < r:
        raise CamError(
            f"pattern {m}: need at least {r} rows on both sides, have "
            f"{a0.shape[0]} complete and {rows_m.shape[0]} adjustment rows"
        )
    theta0m = eval_ustat(project(ds, a0, m), phim, budget=budget, seed=seed)
    thetam = eval_ustat(project(ds, rows_m, m), phim, budget=budget, seed=seed)
    return theta0m, thetam


def _geometry_positions(r: int) -> tuple:
    """Argument slots inside an index tuple of size 4r-2 (0-based).

    First factor contrasts the kernel at slots [0..r-1] and [2r-1..3r-2];
    the second factor shares one slot with each: [0, r..2r-2] and
    [2r-1, 3r-1..4r-3].
    """
    a1 = list(range(r))
    a2 = list(range(2 * r - 1, 3 * r - 1))
    b1 = [0] + list(range(r, 2 * r - 1))
    b2 = [2 * r - 1] + list(range(3 * r - 1, 4 * r - 2))
    return a1, a2, b1, b2


def _entry_mean(
    idx: np.ndarray,
    first: UKernelSpec,
    sample_first: ProjectedSample,
    second: UKernelSpec,
    sample_second: ProjectedSample,
) -> float:
    """Mean over subsets of half the product of the two kernel contrasts."""
    a1, a2, b1, b2 = _geometry_positions(first.order)
    fa = first.on_subsets(sample_first, idx[:, a1]) - first.on_subsets(sample_first, idx[:, a2])
    fb = second.on_subsets(sample_second, idx[:, b1]) - second.on_subsets(
        sample_second, idx[:, b2]
    )
    return float(np.mean(0.5 * fa * fb))


def estimate_geometry(
    ds: MaskedDataset,
    groups: PatternGroups,
    adjustment: AdjustmentSet,
    phi: UKernelSpec,
    phim: dict,
    budget: int = DEFAULT_GEOMETRY_BUDGET,
    seed=0,
) -> UGeometryEstimate:
    """Subsampled order-(4r-2) estimates of (omega, lambda, psi).

    psi and each omega entry average over subsets of A_0; a lambda diagonal
    entry pools A_0 with the pattern's effective rows and carries the factor
    (1 + n0/n_m); an off-diagonal entry pools A_0 with the rows whose own
    pattern is the entrywise minimum of the two (those observe every
    coordinate either kernel needs).  Every entry runs on its own seeded
    substream, so values do not depend on how many patterns are requested.
    """
    r = phi.order
    for m in adjustment.patterns:
        if m not in phim:
            raise CamError(f"no adjustment kernel supplied for pattern {m}")
        if phim[m].order != r:
            raise CamError("adjustment kernels must share the target kernel's order")
    k = 4 * r - 2
    a0 = groups.complete
    n0 = a0.shape[0]
    if n0 < k:
        raise CamError(f"need at least {k} complete cases for order-{r} geometry, have {n0}")
    full = groups.complete_pattern
    sample0_full = project(ds, a0, full)
    proj0 = {m: project(ds, a0, m) for m in adjustment.patterns}

    idx, _ = _subsets_for([seed, _PSI], n0, k, budget)
    psi = _entry_mean(idx, phi, sample0_full, phi, sample0_full)

    size = len(adjustment)
    omega = np.zeros(size)
    lam = np.zeros((size, size))
    for i, m in enumerate(adjustment.patterns):
        code = _pattern_code(m)
        idx, _ = _subsets_for([seed, _OMEGA, code], n0, k, budget)
        omega[i] = _entry_mean(idx, phi, sample0_full, phim[m], proj0[m])

        rows = np.concatenate([a0, adjustment.indices(m)])
        nm = adjustment.size(m)
        if rows.shape[0] < k:
            raise CamError(f"pattern {m}: pooled rows {rows.shape[0]} < subset size {k}")
        pooled = project(ds, rows, m)
        idx, _ = _subsets_for([seed, _LAMBDA_DIAG, code], rows.shape[0], k, budget)
        lam[i, i] = (1.0 + n0 / nm) * _entry_mean(idx, phim[m], pooled, phim[m], pooled)

    for i, m1 in enumerate(adjustment.patterns):
        for j in range(i + 1, size):
            m2 = adjustment.patterns[j]
            m12 = m1.pmin(m2)
            if m12.is_complete:
                extra = np.empty(0, dtype=np.intp)
            elif adjustment.integrate:
                extra = groups.incomplete_rows_subsumed_by(m12)
            else:
                extra = groups.groups.get(m12, np.empty(0, dtype=np.intp))
            rows = np.concatenate([a0, extra])
            if rows.shape[0] < k:
                raise CamError(
                    f"patterns {m1},{m2}: pooled rows {rows.shape[0]} < subset size {k}"
                )
            idx, _ = _subsets_for(
                [seed, _LAMBDA_OFF, _pattern_code(m1), _pattern_code(m2)],
                rows.shape[0],
                k,
                budget,
            )
            value = _entry_mean(
                idx, phim[m1], project(ds, rows, m1), phim[m2], project(ds, rows, m2)
            )
            lam[i, j] = lam[j, i] = value

    return UGeometryEstimate(omegaU=omega, lambdaU=lam, psiU=psi, budget=budget)


def cam_ustat(
    ds: MaskedDataset,
    groups: PatternGroups,
    adjustment: AdjustmentSet,
    phi: UKernelSpec,
    phim: dict,
    level: float = 0.05,
    budget: int = DEFAULT_GEOMETRY_BUDGET,
    estimate_budget: int = DEFAULT_ESTIMATE_BUDGET,
    seed=0,
) -> CamUStatResult:
    """The data-driven CAM U-statistic with a plug-in Gaussian interval.

    Weights are gamma = pinv(lambda) omega from the subsampled geometry; the
    variance of the combined estimate is r^2 (psi - omega' pinv(lambda) omega)
    / n0, clamped at zero (with a warning) should the plug-in go negative.
    """
    notes = []
    r = phi.order
    cc = cc_ustat(ds, groups, phi, budget=estimate_budget, seed=seed)
    theta0m = np.zeros(len(adjustment))
    thetam = np.zeros(len(adjustment))
    for i, m in enumerate(adjustment.patterns):
        est0, estm = adjustment_pair(
            ds, groups, m, phim[m], adjustment=adjustment, budget=estimate_budget, seed=seed
        )
        theta0m[i], thetam[i] = est0.value, estm.value

    geometry = estimate_geometry(ds, groups, adjustment, phi, phim, budget=budget, seed=seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CamWarning)
        solution = core.optimal_gamma(core.MseGeometry(omega=geometry.omegaU, lam=geometry.lambdaU))
    for w in caught:
        notes.append(str(w.message))

    components = core.CamComponents(theta0=cc.value, theta0M=theta0m, thetaM=thetam)
    estimate = core.combine(components, solution.gamma)

    n0 = groups.n0
    psi = geometry.psiU
    if psi < 0.0:
        notes.append("negative psi estimate clamped to zero")
        psi = 0.0
    var_cam = psi - solution.reduction
    if var_cam < 0.0:
        notes.append("negative plug-in variance clamped to zero")
        var_cam = 0.0
    se = r * math.sqrt(var_cam / n0)
    cc_se = r * math.sqrt(psi / n0)
    z = float(norm.ppf(1.0 - level / 2.0))
    return CamUStatResult(
        estimate=estimate,
        gamma=solution.gamma,
        se=se,
        ci=(estimate - z * se, estimate + z * se),
        level=level,
        cc_estimate=cc.value,
        cc_se=cc_se,
        cc_ci=(cc.value - z * cc_se, cc.value + z * cc_se),
        geometry=geometry,
        components=components,
        n0=n0,
        patterns=adjustment.patterns,
        order=r,
        warnings=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Built-in kernels


def _check_feature(x: np.ndarray, feature: int):
    if feature < 0 or feature >= x.shape[2]:
        raise CamError(
            f"feature index {feature} out of range for projection width {x.shape[2]}"
        )


def mean_kernel(feature: int = 0, pattern: Pattern = None) -> UKernelSpec:
    """Order-1 kernel x^(feature); its mean is the marginal feature mean."""

    def evaluate(x, y):
        _check_feature(x, feature)
        return x[:, 0, feature]

    return UKernelSpec(order=1, evaluator=evaluate, pattern=pattern, name=f"mean[{feature}]")


def covariance_kernel(feature: int, second: int = None, pattern: Pattern = None) -> UKernelSpec:
    """Order-2 kernel 0.5 (a_1 - a_2)(b_1 - b_2) estimating a covariance.

    ``second`` selects the partner feature; None pairs the feature with the
    response.
    """

    if second is None:

        def evaluate(x, y):
            _check_feature(x, feature)
            return 0.5 * (x[:, 0, feature] - x[:, 1, feature]) * (y[:, 0] - y[:, 1])

        name = f"cov[{feature},y]"
    else:

        def evaluate(x, y):
            _check_feature(x, max(feature, second))
            return 0.5 * (x[:, 0, feature] - x[:, 1, feature]) * (
                x[:, 0, second] - x[:, 1, second]
            )

        name = f"cov[{feature},{second}]"
    return UKernelSpec(order=2, evaluator=evaluate, pattern=pattern, name=name)


def response_mean_kernel(pattern: Pattern = None) -> UKernelSpec:
    """Order-1 kernel y, usable under any projection."""
    return UKernelSpec(order=1, evaluator=lambda x, y: y[:, 0], pattern=pattern, name="mean[y]")


def response_squared_difference_kernel(pattern: Pattern = None) -> UKernelSpec:
    """Order-2 kernel 0.5 (y_1 - y_2)^2, the response-only covariance surrogate."""
    return UKernelSpec(
        order=2,
        evaluator=lambda x, y: 0.5 * (y[:, 0] - y[:, 1]) ** 2,
        pattern=pattern,
        name="sqdiff[y]",
    )


def function_kernel(order: int, fn, pattern: Pattern = None, name: str = "custom") -> UKernelSpec:
    """Wrap a vectorised (x, y) -> values function as a kernel spec."""
    return UKernelSpec(order=order, evaluator=fn, pattern=pattern, name=name)


def builtin_kernels() -> dict:
    """Constructors for the built-in kernels, keyed by name."""
    return {
        "mean": mean_kernel,
        "covariance": covariance_kernel,
        "response_mean": response_mean_kernel,
        "response_squared_difference": response_squared_difference_kernel,
    }


# ---------------------------------------------------------------------------
# Fitted linear adjustment kernels


def _atom_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Columns [y, x_1..x_k, x_1 y..x_k y] for one batch of projected records."""
    cols = [y] + [x[:, j] for j in range(x.shape[1])] + [x[:, j] * y for j in range(x.shape[1])]
    return np.column_stack(cols)


def _fit_coeffs(design: np.ndarray, target: np.ndarray, what: str) -> np.ndarray:
    beta, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        warnings.warn(
            f"{what}: rank-deficient design ({rank} < {design.shape[1]}); "
            "collinear directions dropped via minimum-norm fit",
            CamWarning,
            stacklevel=3,
        )
    return beta


def linear_adjustment(
    ds: MaskedDataset,
    groups: PatternGroups,
    m: Pattern,
    target: UKernelSpec,
    pair_cap: int = 200_000,
    seed=0,
) -> UKernelSpec:
    """Fit a surrogate kernel for pattern m by least squares on complete cases.

    Order 1 regresses the target kernel's value on an intercept, the response,
    the coordinates observed under m, and their response interactions.  Order
    2 keeps the difference structure: pairwise products of the atom contrasts
    u(z_1) - u(z_2) over the same atoms (no intercept), fitted to the target's
    pair values, so the surrogate vanishes on tied arguments just as a
    covariance-type kernel does.
    """
    if target.order not in (1, 2):
        raise CamError("linear adjustment supports targets of order 1 or 2 only")
    a0 = groups.complete
    if a0.shape[0] < target.order:
        raise CamError("not enough complete cases to fit an adjustment")
    sample0 = project(ds, a0, groups.complete_pattern)
    x0 = ds.x[np.ix_(a0, list(m.observed))] if m.observed else np.empty((a0.shape[0], 0))
    y0 = ds.y[a0]

    if target.order == 1:
        values = target.on_subsets(sample0, np.arange(a0.shape[0], dtype=np.intp)[:, None])
        design = np.column_stack([np.ones(a0.shape[0]), _atom_matrix(x0, y0)])
        beta = _fit_coeffs(design, values, f"linear adjustment for {m}")

        def evaluate(x, y):
            atoms = _atom_matrix(x[:, 0, :], y[:, 0])
            return beta[0] + atoms @ beta[1:]

        return UKernelSpec(order=1, evaluator=evaluate, pattern=m, name=f"linfit[{m}]")

    total = math.comb(a0.shape[0], 2)
    if total <= pair_cap:
        pairs = all_index_subsets(a0.shape[0], 2)
    else:
        rng = np.random.default_rng([seed, _PAIR_FIT, _pattern_code(m)])
        pairs = sample_index_subsets(rng, a0.shape[0], 2, pair_cap)
    values = target.on_subsets(sample0, pairs)
    atoms = _atom_matrix(x0, y0)
    diff = atoms[pairs[:, 0]] - atoms[pairs[:, 1]]
    ii, jj = np.triu_indices(atoms.shape[1])
    design = diff[:, ii] * diff[:, jj]
    beta = _fit_coeffs(design, values, f"linear adjustment for {m}")

    def evaluate(x, y):
        d = _atom_matrix(x[:, 0, :], y[:, 0]) - _atom_matrix(x[:, 1, :], y[:, 1])
        return (d[:, ii] * d[:, jj]) @ beta

    return UKernelSpec(order=2, evaluator=evaluate, pattern=m, name=f"linfit[{m}]")
