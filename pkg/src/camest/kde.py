"""CAM kernel density estimation at a point or on a product grid.

Both supported families (gaussian, box) factorise coordinatewise, which is
what lets a full-dimension estimate be adjusted by marginal estimates built
from rows with missing coordinates: the marginal kernel is the same family in
the lower dimension, and all the second-moment constants are analytic.
"""

from __future__ import annotations

import math
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

FAMILIES = ("gaussian", "box")

# 1-d squared-kernel integrals; d-dimensional values are d-th powers.
_NU_1D = {"gaussian": 1.0 / (2.0 * math.sqrt(math.pi)), "box": 0.5}


@dataclass(frozen=True)
class SmootherSpec:
    """A coordinatewise-factorising kernel family with bandwidth h in R^d."""

    family: str
    h: float
    d: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise CamError(f"unsupported kernel family {self.family!r}; use {FAMILIES}")
        if not self.h > 0:
            raise CamError("bandwidth must be positive")
        if self.d < 0:
            raise CamError("dimension must be >= 0")


@dataclass(frozen=True)
class KernelConstants:
    """Analytic kernel constants shared by the density and regression paths."""

    nu: float                 # integral of K^2 in the full dimension
    nu_m: dict                # Pattern -> integral of K_m^2
    nu_0m: dict               # Pattern -> cross integral of K * K_m
    mu0_m: dict               # Pattern -> integral of K_m (1 for these families)
    nu_pairs: dict            # (Pattern, Pattern) -> cross integral for m1 != m2


@dataclass(frozen=True)
class CamDensityResult:
    f_cam: float
    f_cc: float
    patterns: tuple
    f0m: np.ndarray
    fm: np.ndarray
    gamma: np.ndarray
    warnings: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "f_cam": self.f_cam,
            "f_cc": self.f_cc,
            "patterns": [str(m) for m in self.patterns],
            "f0m": [float(v) for v in self.f0m],
            "fm": [float(v) for v in self.fm],
            "gamma": [float(v) for v in self.gamma],
            "warnings": list(self.warnings),
        }


def kernel_constants(spec: SmootherSpec, patterns: AdjustmentSet) -> KernelConstants:
    """Analytic nu / nu_m / nu_0m / mu_0m / pairwise constants.

    For a normalised product kernel the cross integral of K against K_m
    collapses to the marginal squared integral (the off-pattern coordinates
    integrate to one), so nu_0m = nu_m; between two patterns only the
    coordinates observed by both contribute squared factors.
    """
    one = _NU_1D[spec.family]
    nu_m, nu_0m, mu0_m = {}, {}, {}
    for m in patterns.patterns:
        nu_m[m] = one ** m.d_m
        nu_0m[m] = nu_m[m]
        mu0_m[m] = 1.0
    pairs = {}
    for i, m1 in enumerate(patterns.patterns):
        for m2 in patterns.patterns[i + 1:]:
            both = m1.pmax(m2).d_m  # coordinates observed under both patterns
            value = one ** both
            pairs[(m1, m2)] = value
            pairs[(m2, m1)] = value
    return KernelConstants(
        nu=one ** spec.d, nu_m=nu_m, nu_0m=nu_0m, mu0_m=mu0_m, nu_pairs=pairs
    )


def marginal_kernel(spec: SmootherSpec, m: Pattern) -> SmootherSpec:
    """Same family and bandwidth in the pattern's observed dimension."""
    return SmootherSpec(family=spec.family, h=spec.h, d=m.d_m)


def kernel_values(spec: SmootherSpec, u: np.ndarray) -> np.ndarray:
    """K(u) for scaled offsets u of shape (..., d)."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != spec.d:
        raise CamError(f"kernel expects dimension {spec.d}, got {u.shape[-1]}")
    if spec.family == "gaussian":
        return (2.0 * math.pi) ** (-spec.d / 2.0) * np.exp(-0.5 * np.sum(u * u, axis=-1))
    inside = np.all(np.abs(u) <= 1.0, axis=-1)
    return np.where(inside, 2.0 ** (-spec.d), 0.0)


def kernel_values_1d(spec: SmootherSpec, u: np.ndarray) -> np.ndarray:
    """The 1-d factor kernel, for product-grid evaluation."""
    u = np.asarray(u, dtype=float)
    if spec.family == "gaussian":
        return (2.0 * math.pi) ** -0.5 * np.exp(-0.5 * u * u)
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def kde_point(sample: ProjectedSample, x_m, spec: SmootherSpec) -> float:
    """(1 / (|A| h^{d_m})) sum_i K_m((X_i^m - x^m) / h); always >= 0."""
    return float(kde_at(sample, np.atleast_2d(np.asarray(x_m, dtype=float)), spec)[0])


def kde_at(sample: ProjectedSample, points: np.ndarray, spec: SmootherSpec) -> np.ndarray:
    """Vectorised density estimate at each row of ``points`` (Q, d_m)."""
    if sample.n < 1:
        raise CamError("kernel density needs a nonempty sample")
    if spec.d < 1 or sample.d_m != spec.d:
        raise CamError(
            f"smoother dimension {spec.d} incompatible with projection width {sample.d_m}"
        )
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != spec.d:
        raise CamError(f"query points must be (Q, {spec.d})")
    out = np.empty(points.shape[0])
    # Chunked so the (q, n, d) offset block stays small.
    step = max(1, int(4_000_000 // max(sample.n * spec.d, 1)))
    for lo in range(0, points.shape[0], step):
        u = (sample.x[None, :, :] - points[lo:lo + step, None, :]) / spec.h
        out[lo:lo + step] = kernel_values(spec, u).mean(axis=1)
    return out / spec.h ** spec.d


def kde_product_grid(sample: ProjectedSample, axes, spec: SmootherSpec) -> np.ndarray:
    """Density estimate on the product grid spanned by 1-d ``axes``.

    Exploits the coordinatewise factorisation: one (grid, n) kernel matrix
    per axis, contracted over the sample index.  Returns an array of shape
    (len(axes[0]), ..., len(axes[d-1])).
    """
    if sample.d_m != spec.d or len(axes) != spec.d:
        raise CamError("axes must match the smoother dimension")
    mats = []
    for j, ax in enumerate(axes):
        ax = np.asarray(ax, dtype=float)
        mats.append(kernel_values_1d(spec, (sample.x[:, j][None, :] - ax[:, None]) / spec.h))
    letters = "abcdefg"
    expr = ",".join(f"{letters[j]}i" for j in range(spec.d)) + "->" + letters[: spec.d]
    values = np.einsum(expr, *mats, optimize=True)
    return values / (sample.n * spec.h ** spec.d)


def rule_of_thumb_bandwidth(ds: MaskedDataset, groups: PatternGroups) -> float:
    """Normal-reference default h = 1.06 sigma n0^(-1/(d+4)).

    sigma is the geometric mean of the complete-case coordinate standard
    deviations.  A plug-in selector is outside this package's scope; this
    rule is a labelled convenience, not a tuned choice.
    """
    a0 = groups.complete
    if a0.shape[0] < 2:
        raise CamError("need at least two complete cases for a bandwidth rule")
    sds = ds.x[a0].std(axis=0, ddof=1)
    if np.any(sds <= 0):
        raise CamError("degenerate complete-case coordinate (zero variance)")
    sigma = float(np.exp(np.mean(np.log(sds))))
    return 1.06 * sigma * a0.shape[0] ** (-1.0 / (ds.d + 4))


def _usable_patterns(adjustment: AdjustmentSet) -> tuple:
    usable, dropped = [], []
    for m in adjustment.patterns:
        (usable if m.d_m >= 1 else dropped).append(m)
    return tuple(usable), tuple(dropped)


def cam_density_at(
    ds: MaskedDataset,
    groups: PatternGroups,
    adjustment: AdjustmentSet,
    x,
    spec: SmootherSpec,
) -> CamDensityResult:
    """CAM density value at x: the complete-case estimate minus the weighted
    marginal contrasts, with the closed-form per-pattern weights.

    gamma_m = (nu_0m / nu_m) n_m f0 / (n0 f0m + n_m fm); the off-diagonal
    variance terms are lower order and treated as zero, so each weight only
    involves its own pattern.  Patterns observing no coordinate cannot inform
    a density of X and are dropped with a warning.  A vanishing pooled
    denominator zeroes the weight (warned).  The combined value may be
    negative; it is reported raw.
    """
    notes = []
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != ds.d:
        raise CamError(f"query point must have dimension {ds.d}")
    if spec.d != ds.d:
        raise CamError("smoother dimension must equal the dataset dimension")
    a0 = groups.complete
    if a0.shape[0] == 0:
        raise CamError("no complete cases")
    usable, dropped = _usable_patterns(adjustment)
    for m in dropped:
        notes.append(f"pattern {m} observes no coordinate; dropped from the density adjustment")
        warnings.warn(notes[-1], CamWarning, stacklevel=2)

    f_cc = kde_point(project(ds, a0, groups.complete_pattern), x, spec)
    constants = kernel_constants(spec, adjustment)
    k = len(usable)
    f0m, fm, gamma = np.zeros(k), np.zeros(k), np.zeros(k)
    for i, m in enumerate(usable):
        mspec = marginal_kernel(spec, m)
        xm = x[list(m.observed)]
        f0m[i] = kde_point(project(ds, a0, m), xm, mspec)
        fm[i] = kde_point(project(ds, adjustment.indices(m), m), xm, mspec)
        nm = adjustment.size(m)
        denom = a0.shape[0] * f0m[i] + nm * fm[i]
        if denom <= 0.0:
            notes.append(f"pattern {m}: no local density mass at the query; gamma set to 0")
            warnings.warn(notes[-1], CamWarning, stacklevel=2)
            gamma[i] = 0.0
        else:
            gamma[i] = constants.nu_0m[m] / constants.nu_m[m] * nm * f_cc / denom
    f_cam = core.combine(
        core.CamComponents(theta0=f_cc, theta0M=f0m, thetaM=fm), gamma
    )
    return CamDensityResult(
        f_cam=f_cam,
        f_cc=f_cc,
        patterns=usable,
        f0m=f0m,
        fm=fm,
        gamma=gamma,
        warnings=tuple(notes),
    )


def cam_density_grid(
    ds: MaskedDataset,
    groups: PatternGroups,
    adjustment: AdjustmentSet,
    axes,
    spec: SmootherSpec,
):
    """CAM and complete-case densities over a product grid.

    Returns (f_cc, f_cam, per_pattern) where the grids have one axis per
    coordinate and per_pattern maps each usable pattern to its gamma grid.
    Marginal estimates are computed on the sub-grid of observed axes and
    broadcast, which keeps the cost at one kernel matrix per axis.
    """
    if len(axes) != ds.d or spec.d != ds.d:
        raise CamError("need one axis per coordinate")
    a0 = groups.complete
    if a0.shape[0] == 0:
        raise CamError("no complete cases")
    usable, _ = _usable_patterns(adjustment)
    f_cc = kde_product_grid(project(ds, a0, groups.complete_pattern), axes, spec)
    constants = kernel_constants(spec, adjustment)
    f_cam = f_cc.copy()
    per_pattern = {}
    shape = tuple(len(ax) for ax in axes)
    for m in usable:
        mspec = marginal_kernel(spec, m)
        sub_axes = [axes[j] for j in m.observed]
        f0m = kde_product_grid(project(ds, a0, m), sub_axes, mspec)
        fm = kde_product_grid(project(ds, adjustment.indices(m), m), sub_axes, mspec)
        # Broadcast the marginal grids across the unobserved axes.
        expand = tuple(
            slice(None) if j in m.observed else None for j in range(ds.d)
        )
        f0m_b = np.broadcast_to(f0m[expand], shape)
        fm_b = np.broadcast_to(fm[expand], shape)
        nm = adjustment.size(m)
        denom = a0.shape[0] * f0m_b + nm * fm_b
        ratio = constants.nu_0m[m] / constants.nu_m[m]
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma = np.where(denom > 0.0, ratio * nm * f_cc / denom, 0.0)
        f_cam = f_cam - gamma * (f0m_b - fm_b)
        per_pattern[m] = gamma
    return f_cc, f_cam, per_pattern


def grid_axes(ds: MaskedDataset, groups: PatternGroups, spec: SmootherSpec, points: int = 200):
    """Evaluation axes covering the complete-case bounding box padded by 3h."""
    a0 = groups.complete
    if a0.shape[0] == 0:
        raise CamError("no complete cases")
    x0 = ds.x[a0]
    lo = x0.min(axis=0) - 3.0 * spec.h
    hi = x0.max(axis=0) + 3.0 * spec.h
    return [np.linspace(lo[j], hi[j], points) for j in range(ds.d)]


def tv_distance(fhat: np.ndarray, f: np.ndarray, cell_volume: float) -> float:
    """Midpoint-rule total variation: 0.5 sum |fhat - f| * cell_volume."""
    fhat = np.asarray(fhat, dtype=float)
    f = np.asarray(f, dtype=float)
    if fhat.shape != f.shape:
        raise CamError(f"grid shapes differ: {fhat.shape} vs {f.shape}")
    if not cell_volume > 0:
        raise CamError("cell volume must be positive")
    return float(0.5 * np.abs(fhat - f).sum() * cell_volume)
