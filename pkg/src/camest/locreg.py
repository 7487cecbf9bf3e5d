"""CAM local-constant regression at query points.

The complete-case fit is the kernel-weighted response average at x; each
adjustment pattern contributes the same fit under its marginal kernel, once
on the complete cases and once on its own rows.  The practical weight for a
pattern compares the local residual variance of the complete-case fit with
the pooled local residual variance under the marginal projection:

    gamma_m = sigma^2 nu_0m mu_0m n_m / (sigma_m^2 nu_m (n0 + n_m)).

Weighted means are computed anchored at the heaviest observation (the value
is the anchor response plus the weighted mean of differences), which is the
numerically stable form of the same estimator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

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
from .kde import SmootherSpec, kernel_constants, kernel_values, marginal_kernel

MASS_FLOOR = 1e-300


class NoLocalDataError(CamError):
    """Raised when no observation carries kernel mass at the query point."""


@dataclass(frozen=True)
class LocalWeights:
    """Normalised kernel weights over a sample at one query point."""

    weights: np.ndarray
    rawmass: float


@dataclass(frozen=True)
class CamRegressionResult:
    eta_cam: float
    eta_cc: float
    sigma2_hat: float
    patterns: tuple          # patterns that entered the adjustment
    eta0m: np.ndarray
    etam: np.ndarray
    gamma: np.ndarray
    sigma2_m: np.ndarray
    excluded: tuple = ()     # patterns dropped for lack of local data
    warnings: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "eta_cam": self.eta_cam,
            "eta_cc": self.eta_cc,
            "sigma2": self.sigma2_hat,
            "patterns": [str(m) for m in self.patterns],
            "eta0m": [float(v) for v in self.eta0m],
            "etam": [float(v) for v in self.etam],
            "gamma": [float(v) for v in self.gamma],
            "sigma2_m": [float(v) for v in self.sigma2_m],
            "excluded": [str(m) for m in self.excluded],
            "warnings": list(self.warnings),
        }


def _raw_kernel_mass(sample: ProjectedSample, points: np.ndarray, spec: SmootherSpec) -> np.ndarray:
    """Unnormalised kernel values, (Q, n).  d_m = 0 gives constant weight 1."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != spec.d or sample.d_m != spec.d:
        raise CamError("query points must match the smoother dimension")
    if spec.d == 0:
        return np.ones((points.shape[0], sample.n))
    u = (sample.x[None, :, :] - points[:, None, :]) / spec.h
    return kernel_values(spec, u)


def local_weights(sample: ProjectedSample, x_m, spec: SmootherSpec) -> LocalWeights:
    """Normalised weights w_i proportional to K_m((X_i^m - x^m)/h)."""
    if sample.n < 1:
        raise CamError("local weights need a nonempty sample")
    point = np.asarray(x_m, dtype=float).reshape(1, -1) if spec.d else np.zeros((1, 0))
    raw = _raw_kernel_mass(sample, point, spec)[0]
    mass = float(raw.sum())
    if not mass > MASS_FLOOR:
        raise NoLocalDataError(f"no local data at {np.asarray(x_m)}")
    return LocalWeights(weights=raw / mass, rawmass=mass)


def _anchored_mean(weights: np.ndarray, y: np.ndarray) -> float:
    """Weighted mean as anchor + weighted mean of differences from it."""
    a = int(np.argmax(weights))
    return float(y[a] + weights @ (y - y[a]))


def loccon_point(sample: ProjectedSample, x_m, spec: SmootherSpec) -> float:
    """The local-constant (kernel-weighted least squares) fit at x^m."""
    w = local_weights(sample, x_m, spec)
    return _anchored_mean(w.weights, sample.y)


def local_variance(sample: ProjectedSample, x_m, spec: SmootherSpec, eta_hat: float) -> float:
    """Weighted residual second moment around eta_hat, reusing the fit weights."""
    w = local_weights(sample, x_m, spec)
    resid = sample.y - eta_hat
    return float(w.weights @ (resid * resid))


@dataclass(frozen=True)
class _PatternFit:
    """Per-pattern ingredients shared by the point and batch paths."""

    pattern: Pattern
    eta0m: np.ndarray
    etam: np.ndarray
    sigma2m: np.ndarray
    ok: np.ndarray  # mask of queries where all three pattern fits had mass


def _batch_fit(sample: ProjectedSample, points: np.ndarray, spec: SmootherSpec):
    """(eta, sigma2, ok) arrays for many query points at once."""
    raw = _raw_kernel_mass(sample, points, spec)
    mass = raw.sum(axis=1)
    ok = mass > MASS_FLOOR
    safe = np.where(ok, mass, 1.0)
    w = raw / safe[:, None]
    anchor = np.argmax(w, axis=1)
    ya = sample.y[anchor]
    eta = ya + np.einsum("qi,qi->q", w, sample.y[None, :] - ya[:, None])
    resid = sample.y[None, :] - eta[:, None]
    sigma2 = np.einsum("qi,qi->q", w, resid * resid)
    return np.where(ok, eta, np.nan), np.where(ok, sigma2, np.nan), ok


def cam_regress_batch(
    ds: MaskedDataset,
    groups: PatternGroups,
    adjustment: AdjustmentSet,
    points,
    spec: SmootherSpec,
):
    """Vectorised CAM regression at each row of ``points``.

    Returns (eta_cc, eta_cam, gamma, sigma2) where eta_cc/eta_cam are (Q,)
    with NaN at queries where the complete-case fit has no local mass, and
    gamma is (Q, |M|) with zero columns where a pattern was excluded at that
    query.  Patterns lacking mass at a query are excluded there only.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != ds.d or spec.d != ds.d:
        raise CamError("query points and smoother must match the dataset dimension")
    a0 = groups.complete
    if a0.shape[0] == 0:
        raise CamError("no complete cases")
    sample0 = project(ds, a0, groups.complete_pattern)
    eta_cc, sigma2, ok0 = _batch_fit(sample0, points, spec)

    size = len(adjustment)
    q = points.shape[0]
    gamma = np.zeros((q, size))
    eta_cam = eta_cc.copy()
    constants = kernel_constants(spec, adjustment)
    fits = []
    for i, m in enumerate(adjustment.patterns):
        mspec = marginal_kernel(spec, m)
        sub = points[:, list(m.observed)] if m.observed else np.zeros((q, 0))
        s0 = project(ds, a0, m)
        sm = project(ds, adjustment.indices(m), m)
        pooled = project(ds, np.concatenate([a0, adjustment.indices(m)]), m)
        eta0m, _, ok_a = _batch_fit(s0, sub, mspec)
        etam, _, ok_b = _batch_fit(sm, sub, mspec)
        eta_pool, sigma2m, ok_c = _batch_fit(pooled, sub, mspec)
        ok = ok_a & ok_b & ok_c & ok0
        nm = adjustment.size(m)
        scale = (
            constants.nu_0m[m] * constants.mu0_m[m] * nm
            / (constants.nu_m[m] * (a0.shape[0] + nm))
        )
        # The marginal residual variance dominates the full one by construction
        # (it adds the conditional spread of the regression surface), so a
        # fitted ratio above 1 is estimation noise; cap it to keep the weight
        # inside its population range.
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ok & (sigma2m > 0.0), sigma2 / sigma2m, 0.0)
        g = scale * np.minimum(ratio, 1.0)
        gamma[:, i] = np.where(np.isfinite(g), g, 0.0)
        eta_cam = eta_cam - gamma[:, i] * np.where(ok, eta0m - etam, 0.0)
        fits.append(_PatternFit(pattern=m, eta0m=eta0m, etam=etam, sigma2m=sigma2m, ok=ok))
    return eta_cc, eta_cam, gamma, sigma2, fits


def cam_regress_at(
    ds: MaskedDataset,
    groups: PatternGroups,
    adjustment: AdjustmentSet,
    x,
    spec: SmootherSpec,
) -> CamRegressionResult:
    """CAM regression value at one point.

    The complete-case fit must have local mass (otherwise NoLocalDataError);
    a pattern without mass at the query is excluded with a warning, and with
    every pattern excluded the CAM value equals the complete-case value.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    eta_cc, eta_cam, gamma, sigma2, fits = cam_regress_batch(ds, groups, adjustment, x, spec)
    if not np.isfinite(eta_cc[0]):
        raise NoLocalDataError(f"no local data at {x[0]} for the complete-case fit")
    notes, excluded = [], []
    for fit in fits:
        if not fit.ok[0]:
            excluded.append(fit.pattern)
            notes.append(f"pattern {fit.pattern}: no local data at the query; excluded")
            warnings.warn(notes[-1], CamWarning, stacklevel=2)
    if excluded and len(excluded) == len(adjustment):
        notes.append("every pattern excluded; CAM equals the complete-case fit")
        warnings.warn(notes[-1], CamWarning, stacklevel=2)
    return CamRegressionResult(
        eta_cam=float(eta_cam[0]),
        eta_cc=float(eta_cc[0]),
        sigma2_hat=float(sigma2[0]),
        patterns=adjustment.patterns,
        eta0m=np.array([fit.eta0m[0] for fit in fits]),
        etam=np.array([fit.etam[0] for fit in fits]),
        gamma=gamma[0],
        sigma2_m=np.array([fit.sigma2m[0] for fit in fits]),
        excluded=tuple(excluded),
        warnings=tuple(notes),
    )


def loocv_bandwidth(
    ds: MaskedDataset, groups: PatternGroups, grid, family: str = "gaussian"
) -> float:
    """Leave-one-out bandwidth for the complete-case fit.

    Minimises the held-out squared error of the full-dimension local-constant
    fit over A_0; rows left without local mass contribute a fixed large
    penalty (warned).  Ties break toward the smallest bandwidth.
    """
    grid = [float(h) for h in grid]
    if not grid:
        raise CamError("bandwidth grid must be nonempty")
    a0 = groups.complete
    if a0.shape[0] < 2:
        raise CamError("leave-one-out needs at least two complete cases")
    x0, y0 = ds.x[a0], ds.y[a0]
    n0 = x0.shape[0]
    diff = x0[:, None, :] - x0[None, :, :]
    if family == "gaussian":
        sq = np.sum(diff * diff, axis=-1)
    elif family == "box":
        sup = np.max(np.abs(diff), axis=-1)
    else:
        raise CamError(f"unsupported kernel family {family!r}")

    penalty = 1e12
    best_h, best_err = None, np.inf
    for h in sorted(grid):
        if family == "gaussian":
            k = np.exp(-0.5 * sq / (h * h))
        else:
            k = (sup <= h).astype(float)
        np.fill_diagonal(k, 0.0)
        mass = k.sum(axis=1)
        good = mass > MASS_FLOOR
        # anchored residual form: exact for constant responses at every h
        anchor = np.argmax(k, axis=1)
        ya = y0[anchor]
        num = (k * (y0[None, :] - ya[:, None])).sum(axis=1)
        pred = ya + np.divide(num, mass, out=np.zeros(n0), where=good)
        err = float(np.sum((y0[good] - pred[good]) ** 2))
        nbad = int(np.count_nonzero(~good))
        if nbad:
            warnings.warn(
                f"h={h}: {nbad} held-out rows had no local mass; penalised",
                CamWarning,
                stacklevel=2,
            )
            err += penalty * nbad
        if err < best_err:
            best_h, best_err = h, err
    return best_h


def mise(etahat, eta, sampler, n_mc: int, seed=0) -> float:
    """Monte Carlo integrated squared error of etahat against eta.

    ``sampler(rng, size)`` draws query points (size, d); both functions map
    a (Q, d) array to (Q,) values.  Non-finite etahat values count as skipped
    evaluations; more than 10% skipped is an error.
    """
    if n_mc < 1:
        raise CamError("n_mc must be >= 1")
    rng = np.random.default_rng(seed)
    draws = np.asarray(sampler(rng, n_mc), dtype=float)
    fitted = np.asarray(etahat(draws), dtype=float)
    truth = np.asarray(eta(draws), dtype=float)
    good = np.isfinite(fitted)
    skipped = int(np.count_nonzero(~good))
    if skipped > 0.1 * n_mc:
        raise CamError(f"{skipped}/{n_mc} evaluations failed (over the 10% tolerance)")
    return float(np.mean((fitted[good] - truth[good]) ** 2))
