"""Monte Carlo laboratory: synthetic generators, model oracles, experiments.

Generators draw the complete pairs first and overlay MCAR masks afterwards,
so the complete-data law never depends on the missingness probabilities.
Every replication runs on its own stream derived from (seed, rep), which
makes reports reproducible and safely parallelisable.

Density experiments score estimators by the relative total-variation
improvement (TV(cc) - TV(cam)) / TV(cc) on a grid; regression experiments by
the matching relative integrated-squared-error improvement under fresh query
draws.  Both statistics are at most 1 by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np
from scipy.special import erfcx
from scipy.stats import multivariate_normal

from . import kde, locreg, ustat
from .core import CamComponents, combine
from .dataset import CamError, MaskedDataset, Pattern, group_by_pattern, select_adjustment_set

_MODEL_DIM = {
    "toy_gaussian": 1,
    "example_joint": 1,
    "density_1": 2,
    "density_2": 2,
    "density_3": 2,
    "regression_1": 3,
    "regression_2": 3,
    "regression_3": 2,
}

_DENSITY_COV = np.array([[1.0, 0.7], [0.7, 1.0]])        # 0.3 I + 0.7 J
_REGRESSION3_COV = np.array([[1.1, 0.8], [0.8, 1.1]])    # 0.3 I + 0.8 J, as stated
_TOY_GAMMA = np.array([[1.0, 0.9], [0.9, 1.0]])          # 0.1 I + 0.9 J


@dataclass(frozen=True)
class ModelSpec:
    """A named generator, sample size, MCAR pattern probabilities, and seed."""

    model: str
    n: int
    p_miss: tuple = ()   # ((Pattern, prob), ...) in canonical pattern order
    seed: object = 0
    params: tuple = ()   # sorted (name, value) pairs

    def __post_init__(self):
        if self.model not in _MODEL_DIM:
            raise CamError(f"unknown model {self.model!r}; known: {sorted(_MODEL_DIM)}")
        if self.n < 1:
            raise CamError("n must be >= 1")
        d = _MODEL_DIM[self.model]
        total = 0.0
        norm = []
        for m, p in self.p_miss:
            m = Pattern.from_string(m) if isinstance(m, str) else m
            if m.d != d:
                raise CamError(f"pattern {m} does not match model dimension {d}")
            if m.is_complete:
                raise CamError("missingness probabilities are for incomplete patterns")
            if not 0.0 <= p <= 1.0:
                raise CamError("pattern probabilities must lie in [0, 1]")
            total += p
            norm.append((m, float(p)))
        if total > 1.0 + 1e-12:
            raise CamError("pattern probabilities must sum to at most 1")
        object.__setattr__(self, "p_miss", tuple(sorted(norm, key=lambda mp: mp[0])))
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))

    @classmethod
    def first_feature_missing(cls, model, n, p1, seed=0, **params) -> "ModelSpec":
        """Missingness on the first coordinate only, with probability p1."""
        d = _MODEL_DIM[model]
        p_miss = () if p1 == 0 else ((Pattern(tuple([1] + [0] * (d - 1))), float(p1)),)
        return cls(model=model, n=n, p_miss=p_miss, seed=seed, params=tuple(params.items()))

    @property
    def d(self) -> int:
        return _MODEL_DIM[self.model]

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    def with_seed(self, seed) -> "ModelSpec":
        return ModelSpec(self.model, self.n, self.p_miss, seed, self.params)


def _draw_complete(spec: ModelSpec, rng: np.random.Generator):
    model, n = spec.model, spec.n
    if model == "toy_gaussian":
        gamma = np.asarray(spec.param("gamma", _TOY_GAMMA), dtype=float)
        nu = np.asarray(spec.param("nu", (1.0, 1.0)), dtype=float)
        chol = np.linalg.cholesky(gamma)
        z = rng.standard_normal((2 * n, 2)) @ chol.T + nu
        return z[:, :1], z[:, 1]
    if model == "example_joint":
        sigma = float(spec.param("sigma", 0.2))
        x = rng.exponential(1.0, size=(n, 1))
        y = x[:, 0] + sigma * rng.standard_normal(n)
        return x, y
    if model == "density_1":
        chol = np.linalg.cholesky(_DENSITY_COV)
        return rng.standard_normal((n, 2)) @ chol.T, np.zeros(n)
    if model == "density_2":
        radius = np.sqrt(rng.random(n))
        angle = 2.0 * math.pi * rng.random(n)
        return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]), np.zeros(n)
    if model == "density_3":
        right = rng.random(n) < 0.75
        u1, u2 = rng.random(n), rng.random(n)
        x1 = np.where(right, 1.0 + u1, -2.0 + u1)
        x2 = u2 - 0.5
        return np.column_stack([x1, x2]), np.zeros(n)
    if model in ("regression_1", "regression_2"):
        x = rng.random((n, 3))
        eta = x[:, 0] + x[:, 1] if model == "regression_1" else (x[:, 0] - x[:, 1]) ** 2
        return x, eta + 0.1 * rng.standard_normal(n)
    if model == "regression_3":
        chol = np.linalg.cholesky(_REGRESSION3_COV)
        x = rng.standard_normal((n, 2)) @ chol.T
        return x, np.sin(2.0 * x[:, 0]) + 0.3 * rng.standard_normal(n)
    raise CamError(f"unknown model {model!r}")


def generate(spec: ModelSpec) -> MaskedDataset:
    """Draw the model, then overlay the MCAR masks; deterministic per seed.

    ``toy_gaussian`` is the one fixed-design generator: it emits 2n rows of
    which the first n are complete and the last n have the feature removed
    (its closed-form variance oracle assumes that exact split), so it ignores
    p_miss and rejects a nonempty one.
    """
    rng = np.random.default_rng(spec.seed)
    x, y = _draw_complete(spec, rng)
    if spec.model == "toy_gaussian":
        if spec.p_miss:
            raise CamError("toy_gaussian uses a fixed half split; leave p_miss empty")
        observed = np.ones_like(x, dtype=bool)
        observed[spec.n:, 0] = False
    else:
        observed = np.ones_like(x, dtype=bool)
        if spec.p_miss:
            u = rng.random(x.shape[0])
            lo = 0.0
            for m, p in spec.p_miss:
                hit = (u >= lo) & (u < lo + p)
                for j in m.missing:
                    observed[hit, j] = False
                lo += p
    x = x.copy()
    x[~observed] = np.nan
    return MaskedDataset(x=x, y=y, observed=observed)


# ---------------------------------------------------------------------------
# Model oracles


def density_truth(model: str):
    """The generating density of X, vectorised over (Q, 2) points."""
    if model == "density_1":
        mvn = multivariate_normal(mean=np.zeros(2), cov=_DENSITY_COV)
        return lambda pts: mvn.pdf(pts)
    if model == "density_2":
        return lambda pts: np.where(np.sum(pts * pts, axis=-1) <= 1.0, 1.0 / math.pi, 0.0)
    if model == "density_3":

        def pdf(pts):
            x1, x2 = pts[..., 0], pts[..., 1]
            side = np.abs(x2) <= 0.5
            left = (-2.0 <= x1) & (x1 <= -1.0) & side
            right = (1.0 <= x1) & (x1 <= 2.0) & side
            return 0.25 * left + 0.75 * right

        return pdf
    raise CamError(f"{model!r} is not a density model")


def regression_truth(model: str):
    """(eta, noise sd, X sampler) for a regression model."""
    if model == "regression_1":
        return lambda pts: pts[:, 0] + pts[:, 1], 0.1, lambda rng, k: rng.random((k, 3))
    if model == "regression_2":
        return (
            lambda pts: (pts[:, 0] - pts[:, 1]) ** 2,
            0.1,
            lambda rng, k: rng.random((k, 3)),
        )
    if model == "regression_3":
        chol = np.linalg.cholesky(_REGRESSION3_COV)
        return (
            lambda pts: np.sin(2.0 * pts[:, 0]),
            0.3,
            lambda rng, k: rng.standard_normal((k, 2)) @ chol.T,
        )
    raise CamError(f"{model!r} is not a regression model")


def example_target(target: str) -> float:
    """True value of the example estimands: E(X) and Cov(X, Y) both equal 1."""
    if target not in ("mean", "cov"):
        raise CamError("target must be 'mean' or 'cov'")
    return 1.0


def oracle_phi1_example1(y, sigma: float):
    """E(X | Y = y) when X ~ Exp(1) and Y | X ~ N(X, sigma^2).

    The posterior of X is a normal with mean y - sigma^2 truncated to the
    positive axis, so the conditional mean is the truncation point plus a
    Mills-ratio correction; erfcx keeps the ratio stable for any y.
    """
    if not sigma > 0:
        raise CamError("sigma must be positive")
    y = np.asarray(y, dtype=float)
    t = sigma - y / sigma
    value = y - sigma**2 + sigma * math.sqrt(2.0 / math.pi) / erfcx(t / math.sqrt(2.0))
    return value if value.ndim else float(value)


def oracle_phi1_pairs_example2(y1, y2, sigma: float):
    """0.5 (E(X|Y=y1) - E(X|Y=y2)) (y1 - y2), the covariance-target oracle."""
    return 0.5 * (oracle_phi1_example1(y1, sigma) - oracle_phi1_example1(y2, sigma)) * (
        np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)
    )


# ---------------------------------------------------------------------------
# Illustrative bivariate-Gaussian experiment


def toy_closed_form(gamma, n: int) -> dict:
    """Exact sampling variances of the two mean estimators in the toy model.

    The plain estimator averages the n complete X's; the adjusted one
    subtracts gamma_12 / (2 gamma_22) times the difference of the two Y
    averages, which removes gamma_12^2 / (2 gamma_22) of the variance.
    """
    gamma = np.asarray(gamma, dtype=float)
    try:
        np.linalg.cholesky(gamma)
    except np.linalg.LinAlgError:
        raise CamError("covariance must be positive definite") from None
    var_cc = gamma[0, 0] / n
    var_cam = (gamma[0, 0] - gamma[0, 1] ** 2 / (2.0 * gamma[1, 1])) / n
    return {"var_cc": var_cc, "var_cam": var_cam}


def run_toy_experiment(gamma, n: int, reps: int, seed=0, nu=(1.0, 1.0)) -> dict:
    """Replicate the toy estimators and report empirical vs exact variances."""
    gamma = np.asarray(gamma, dtype=float)
    coef = gamma[0, 1] / (2.0 * gamma[1, 1])
    est_cc = np.empty(reps)
    est_cam = np.empty(reps)
    pattern = Pattern((1,))
    phi = ustat.mean_kernel(0)
    phi1 = ustat.response_mean_kernel()
    for rep in range(reps):
        spec = ModelSpec(
            "toy_gaussian", n, (), [_as_int_seed(seed), rep],
            (("gamma", gamma), ("nu", tuple(nu))),
        )
        ds = generate(spec)
        groups = group_by_pattern(ds)
        cc = ustat.cc_ustat(ds, groups, phi)
        y0, y1 = ustat.adjustment_pair(ds, groups, pattern, phi1)
        est_cc[rep] = cc.value
        est_cam[rep] = combine(
            CamComponents(theta0=cc.value, theta0M=[y0.value], thetaM=[y1.value]), [coef]
        )
    closed = toy_closed_form(gamma, n)
    return {
        "var_cc": float(np.var(est_cc, ddof=1)),
        "var_cam": float(np.var(est_cam, ddof=1)),
        "mean_cc": float(est_cc.mean()),
        "mean_cam": float(est_cam.mean()),
        "closed_var_cc": closed["var_cc"],
        "closed_var_cam": closed["var_cam"],
        "reps": reps,
    }


def _as_int_seed(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    raise CamError("experiment seeds must be integers")


# ---------------------------------------------------------------------------
# Replicated experiments


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    model: str
    reps: int
    seed: int
    columns: dict = field(repr=False)
    summary: dict
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "kind": self.kind,
            "model": self.model,
            "reps": self.reps,
            "seed": self.seed,
            "config": dict(self.config),
            "summary": {k: v for k, v in self.summary.items()},
        }

    def write_csv(self, path):
        import csv as _csv

        names = list(self.columns)
        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["rep"] + names)
            for i in range(self.reps):
                writer.writerow([i] + [repr(float(self.columns[c][i])) for c in names])


@dataclass(frozen=True)
class UStatConfig:
    target: str = "mean"      # mean | cov (feature 1 against the response)
    phim: str = "practical"   # practical | linear | oracle
    level: float = 0.05
    budget: int = ustat.DEFAULT_GEOMETRY_BUDGET
    estimate_budget: int = ustat.DEFAULT_ESTIMATE_BUDGET
    min_count: int = 20


def _ustat_phim(config: UStatConfig, ds, groups, m, phi, sigma):
    if config.phim == "practical":
        if config.target == "mean":
            return ustat.response_mean_kernel(pattern=m)
        return ustat.response_squared_difference_kernel(pattern=m)
    if config.phim == "linear":
        return ustat.linear_adjustment(ds, groups, m, phi)
    if config.phim == "oracle":
        if config.target == "mean":
            return ustat.function_kernel(
                1, lambda x, y: oracle_phi1_example1(y[:, 0], sigma), pattern=m, name="oracle"
            )
        return ustat.function_kernel(
            2,
            lambda x, y: oracle_phi1_pairs_example2(y[:, 0], y[:, 1], sigma),
            pattern=m,
            name="oracle",
        )
    raise CamError(f"unknown adjustment choice {config.phim!r}")


def _ustat_rep(args):
    model, n, p_items, params, cfg_items, seed, rep = args
    config = UStatConfig(**dict(cfg_items))
    spec = ModelSpec(model, n, p_items, [seed, rep], params)
    sigma = float(spec.param("sigma", 0.2))
    ds = generate(spec)
    groups = group_by_pattern(ds)
    adjustment = select_adjustment_set(groups, min_count=config.min_count)
    phi = ustat.mean_kernel(0) if config.target == "mean" else ustat.covariance_kernel(0)
    phim = {
        m: _ustat_phim(config, ds, groups, m, phi, sigma) for m in adjustment.patterns
    }
    result = ustat.cam_ustat(
        ds,
        groups,
        adjustment,
        phi,
        phim,
        level=config.level,
        budget=config.budget,
        estimate_budget=config.estimate_budget,
        seed=_mix_seed(seed, rep),
    )
    theta = example_target(config.target)
    return (
        result.estimate,
        result.cc_estimate,
        float(result.ci[0] <= theta <= result.ci[1]),
        float(result.cc_ci[0] <= theta <= result.cc_ci[1]),
    )


def _mix_seed(seed: int, rep: int) -> int:
    # Distinct scalar stream per replication for the subset sampler.
    return (int(seed) * 1_000_003 + rep) % (2**63 - 1)


def _run_parallel(worker, arglist, threads: int):
    if threads <= 1:
        return [worker(a) for a in arglist]
    with get_context("fork").Pool(processes=threads) as pool:
        return pool.map(worker, arglist)


def run_ustat_experiment(
    spec: ModelSpec, config: UStatConfig, reps: int, seed=None, threads: int = 1
) -> ExperimentReport:
    """Replicate the CAM vs complete-case U-statistic on a synthetic model.

    Reports the empirical means and variances, the variance ratio, the bias
    of the CAM estimate against the known target, interval coverage, and the
    paired spread statistics needed to test variance dominance.
    """
    if spec.model != "example_joint":
        raise CamError("the U-statistic experiment runs on the example_joint model")
    seed = _as_int_seed(spec.seed if seed is None else seed)
    cfg_items = tuple(vars(config).items())
    args = [
        (spec.model, spec.n, spec.p_miss, spec.params, cfg_items, seed, rep)
        for rep in range(reps)
    ]
    rows = np.asarray(_run_parallel(_ustat_rep, args, threads), dtype=float)
    cam, cc, cov_cam, cov_cc = rows.T
    theta = example_target(config.target)
    summary = _ustat_summary(cam, cc, cov_cam, cov_cc, theta)
    columns = {
        "estimate_cam": cam,
        "estimate_cc": cc,
        "cover_cam": cov_cam,
        "cover_cc": cov_cc,
    }
    return ExperimentReport(
        kind="ustat",
        model=spec.model,
        reps=reps,
        seed=seed,
        columns=columns,
        summary=summary,
        config={"target": config.target, "phim": config.phim, "level": config.level,
                "budget": config.budget, "n": spec.n,
                "p_miss": [[str(m), p] for m, p in spec.p_miss]},
    )


def _ustat_summary(cam, cc, cov_cam, cov_cc, theta) -> dict:
    reps = cam.shape[0]
    var_cam = float(np.var(cam, ddof=1))
    var_cc = float(np.var(cc, ddof=1))
    dev_cam = (cam - cam.mean()) ** 2
    dev_cc = (cc - cc.mean()) ** 2
    gap = dev_cc - dev_cam
    return {
        "mean_cam": float(cam.mean()),
        "mean_cc": float(cc.mean()),
        "var_cam": var_cam,
        "var_cc": var_cc,
        "variance_ratio": var_cam / var_cc if var_cc > 0 else math.nan,
        "bias_cam": float(cam.mean() - theta),
        "se_mean_cam": float(cam.std(ddof=1) / math.sqrt(reps)),
        "se_mean_cc": float(cc.std(ddof=1) / math.sqrt(reps)),
        "variance_gap": float(gap.mean()),
        "variance_gap_se": float(gap.std(ddof=1) / math.sqrt(reps)),
        "coverage_cam": float(cov_cam.mean()),
        "coverage_cc": float(cov_cc.mean()),
        "coverage_se": float(math.sqrt(max(cov_cam.mean() * (1 - cov_cam.mean()), 0.0) / reps)),
        "theta": theta,
    }


def _density_rep(args):
    model, n, p_items, params, bandwidth, grid_points, min_count, seed, rep = args
    spec = ModelSpec(model, n, p_items, [seed, rep], params)
    ds = generate(spec)
    groups = group_by_pattern(ds)
    adjustment = select_adjustment_set(groups, min_count=min_count)
    smoother = kde.SmootherSpec(
        family="gaussian",
        h=kde.rule_of_thumb_bandwidth(ds, groups) if bandwidth == "rot" else float(bandwidth),
        d=ds.d,
    )
    axes = kde.grid_axes(ds, groups, smoother, points=grid_points)
    f_cc, f_cam, _ = kde.cam_density_grid(ds, groups, adjustment, axes, smoother)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    truth = density_truth(model)(pts).reshape(f_cc.shape)
    cell = float(np.prod([ax[1] - ax[0] for ax in axes]))
    tv_cc = kde.tv_distance(f_cc, truth, cell)
    tv_cam = kde.tv_distance(f_cam, truth, cell)
    rel = (tv_cc - tv_cam) / tv_cc if tv_cc > 0 else 0.0
    return tv_cc, tv_cam, rel


def run_density_experiment(
    spec: ModelSpec,
    reps: int,
    bandwidth="rot",
    seed=None,
    grid_points: int = 200,
    min_count: int = 20,
    threads: int = 1,
) -> ExperimentReport:
    """Replicate CAM vs complete-case density estimation on one model.

    Each replication regenerates the data, fits both estimators on a shared
    grid, and records the total-variation errors against the generating
    density together with their relative improvement.
    """
    if spec.model not in ("density_1", "density_2", "density_3"):
        raise CamError("density experiments run on the density models")
    seed = _as_int_seed(spec.seed if seed is None else seed)
    args = [
        (spec.model, spec.n, spec.p_miss, spec.params, bandwidth, grid_points, min_count,
         seed, rep)
        for rep in range(reps)
    ]
    rows = np.asarray(_run_parallel(_density_rep, args, threads), dtype=float)
    return _metric_report("density", spec, reps, seed, rows,
                          {"bandwidth": str(bandwidth), "grid_points": grid_points,
                           "n": spec.n, "p_miss": [[str(m), p] for m, p in spec.p_miss]})


def _metric_report(kind, spec, reps, seed, rows, config) -> ExperimentReport:
    metric_cc, metric_cam, rel = rows.T
    summary = {
        "mean_metric_cc": float(metric_cc.mean()),
        "mean_metric_cam": float(metric_cam.mean()),
        "mean_relative": float(rel.mean()),
        "sd_relative": float(rel.std(ddof=1)) if reps > 1 else 0.0,
        "median_relative": float(np.median(rel)),
        "se_mean_relative": float(rel.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
    }
    columns = {"metric_cc": metric_cc, "metric_cam": metric_cam, "relative": rel}
    return ExperimentReport(
        kind=kind, model=spec.model, reps=reps, seed=seed,
        columns=columns, summary=summary, config=config,
    )


def _regression_rep(args):
    model, n, p_items, params, bandwidth, n_mc, min_count, seed, rep = args
    spec = ModelSpec(model, n, p_items, [seed, rep], params)
    ds = generate(spec)
    groups = group_by_pattern(ds)
    adjustment = select_adjustment_set(groups, min_count=min_count)
    eta, _, sampler = regression_truth(model)
    if bandwidth == "loocv":
        rot = kde.rule_of_thumb_bandwidth(ds, groups)
        grid = rot * np.geomspace(0.5, 3.0, 8)
        h = locreg.loocv_bandwidth(ds, groups, grid)
    else:
        h = float(bandwidth)
    smoother = kde.SmootherSpec(family="gaussian", h=h, d=ds.d)
    rng = np.random.default_rng([seed, rep, 1])
    pts = sampler(rng, n_mc)
    eta_cc, eta_cam, _, _, _ = locreg.cam_regress_batch(ds, groups, adjustment, pts, smoother)
    good = np.isfinite(eta_cc) & np.isfinite(eta_cam)
    if np.count_nonzero(~good) > 0.1 * n_mc:
        raise CamError("over 10% of evaluation points had no local data")
    truth = eta(pts[good])
    mise_cc = float(np.mean((eta_cc[good] - truth) ** 2))
    mise_cam = float(np.mean((eta_cam[good] - truth) ** 2))
    rel = (mise_cc - mise_cam) / mise_cc if mise_cc > 0 else 0.0
    return mise_cc, mise_cam, rel


def run_regression_experiment(
    spec: ModelSpec,
    reps: int,
    bandwidth="loocv",
    seed=None,
    n_mc: int = 10_000,
    min_count: int = 20,
    threads: int = 1,
) -> ExperimentReport:
    """Replicate CAM vs complete-case local-constant regression.

    The bandwidth is chosen per replication (leave-one-out by default), both
    estimators are scored on the same fresh query draws, and the report
    carries the integrated-squared-error pair and relative improvement.
    """
    if spec.model not in ("regression_1", "regression_2", "regression_3"):
        raise CamError("regression experiments run on the regression models")
    seed = _as_int_seed(spec.seed if seed is None else seed)
    args = [
        (spec.model, spec.n, spec.p_miss, spec.params, bandwidth, n_mc, min_count, seed, rep)
        for rep in range(reps)
    ]
    rows = np.asarray(_run_parallel(_regression_rep, args, threads), dtype=float)
    return _metric_report("regression", spec, reps, seed, rows,
                          {"bandwidth": str(bandwidth), "n_mc": n_mc,
                           "n": spec.n, "p_miss": [[str(m), p] for m, p in spec.p_miss]})


def predictive_mse(
    ds_train: MaskedDataset,
    x_test,
    y_test,
    bandwidth="loocv",
    grid=None,
    min_count: int = 20,
    integrate: bool = False,
) -> dict:
    """Held-out predictive squared error of the CC and CAM regression fits.

    A train/test evaluation for user-supplied data: fit on the masked
    training set, predict the (complete) test features, and average the
    squared prediction errors over test rows where both fits are defined.
    """
    x_test = np.atleast_2d(np.asarray(x_test, dtype=float))
    y_test = np.asarray(y_test, dtype=float)
    groups = group_by_pattern(ds_train)
    adjustment = select_adjustment_set(groups, min_count=min_count, integrate=integrate)
    if bandwidth == "loocv":
        rot = kde.rule_of_thumb_bandwidth(ds_train, groups)
        grid = rot * np.geomspace(0.5, 3.0, 8) if grid is None else grid
        h = locreg.loocv_bandwidth(ds_train, groups, grid)
    else:
        h = float(bandwidth)
    smoother = kde.SmootherSpec(family="gaussian", h=h, d=ds_train.d)
    eta_cc, eta_cam, _, _, _ = locreg.cam_regress_batch(
        ds_train, groups, adjustment, x_test, smoother
    )
    good = np.isfinite(eta_cc) & np.isfinite(eta_cam)
    if not np.any(good):
        raise CamError("no test point had local data")
    return {
        "mse_cc": float(np.mean((eta_cc[good] - y_test[good]) ** 2)),
        "mse_cam": float(np.mean((eta_cam[good] - y_test[good]) ** 2)),
        "bandwidth": float(h),
        "evaluated": int(np.count_nonzero(good)),
        "skipped": int(np.count_nonzero(~good)),
    }
