"""Generic CAM combiner and its mean-squared-error geometry.

A CAM estimate corrects a complete-case estimate theta0 by a weighted,
(approximately) mean-zero contrast built from incomplete observations:

    theta_gamma = theta0 - gamma' (theta0M - thetaM)

The MSE change relative to theta0 is an exact quadratic in gamma,

    gamma' (Lambda + B B') gamma - 2 gamma' (Omega + b0 B),

where Omega = Cov(theta0, theta0M), Lambda = Var(theta0M - thetaM),
B = E(theta0M - thetaM) and b0 is the bias of theta0.  When B = 0 the
minimiser is gamma* = pinv(Lambda) Omega and the attained reduction is
Omega' pinv(Lambda) Omega.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import CamWarning

# Relative eigenvalue cutoff below which Lambda directions are treated as null.
PINV_RTOL = 1e-10


@dataclass(frozen=True)
class CamComponents:
    """The three ingredients of a CAM estimate, in adjustment-set order."""

    theta0: float
    theta0M: np.ndarray
    thetaM: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.theta0M, dtype=float))
        b = np.atleast_1d(np.asarray(self.thetaM, dtype=float))
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("theta0M and thetaM must be 1-d with identical length")
        object.__setattr__(self, "theta0M", a)
        object.__setattr__(self, "thetaM", b)


@dataclass(frozen=True)
class MseGeometry:
    """(Omega, Lambda, B, b0) driving the MSE quadratic."""

    omega: np.ndarray
    lam: np.ndarray
    bias_adj: np.ndarray = None  # B: E(theta0M - thetaM); default zero
    bias0: float = 0.0

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        k = omega.shape[0]
        lam = np.asarray(self.lam, dtype=float).reshape(k, k)
        b = self.bias_adj
        b = np.zeros(k) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
        if b.shape != (k,):
            raise ValueError("bias_adj must match omega's length")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "bias_adj", b)

    @property
    def size(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class GammaSolution:
    gamma: np.ndarray
    reduction: float
    indefinite: bool = False


def combine(c: CamComponents, gamma) -> float:
    """theta0 - gamma' (theta0M - thetaM).  gamma = 0 returns theta0 exactly."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if gamma.shape != c.theta0M.shape:
        raise ValueError(
            f"gamma has length {gamma.shape[0]}, expected {c.theta0M.shape[0]}"
        )
    if gamma.shape[0] == 0:
        return float(c.theta0)
    return float(c.theta0 - gamma @ (c.theta0M - c.thetaM))


def mse_difference(gamma, g: MseGeometry) -> float:
    """Exact MSE(theta_gamma) - MSE(theta0) for the given geometry."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if gamma.shape != g.omega.shape:
        raise ValueError(f"gamma has length {gamma.shape[0]}, expected {g.size}")
    quad = g.lam + np.outer(g.bias_adj, g.bias_adj)
    lin = g.omega + g.bias0 * g.bias_adj
    return float(gamma @ quad @ gamma - 2.0 * gamma @ lin)


def optimal_gamma(g: MseGeometry, rtol: float = PINV_RTOL) -> GammaSolution:
    """MSE-minimising weights gamma* = pinv(Lambda) Omega, for unbiased contrasts.

    Refuses when the adjustment bias B is nonzero (no optimality rule is
    available there).  Lambda is symmetrised first; eigenvalues below
    ``rtol * max_eig`` count as zero, and eigenvalues more negative than that
    tolerance flag the matrix as numerically indefinite (warned, clamped).
    Returns the weights and the attained reduction Omega' pinv(Lambda) Omega,
    so that ``mse_difference(gamma, g) == -reduction``.
    """
    if np.any(g.bias_adj != 0.0):
        raise ValueError("optimal_gamma requires a mean-zero adjustment (bias_adj = 0)")
    k = g.size
    if k == 0:
        return GammaSolution(gamma=np.zeros(0), reduction=0.0)
    lam = 0.5 * (g.lam + g.lam.T)
    evals, evecs = np.linalg.eigh(lam)
    scale = float(np.max(np.abs(evals), initial=0.0))
    cutoff = rtol * scale
    indefinite = bool(np.any(evals < -cutoff))
    if indefinite:
        warnings.warn(
            "adjustment variance matrix is numerically indefinite; "
            "negative directions are dropped",
            CamWarning,
            stacklevel=2,
        )
    keep = evals > cutoff
    proj = evecs[:, keep].T @ g.omega
    inv_evals = 1.0 / evals[keep]
    gamma = evecs[:, keep] @ (inv_evals * proj)
    reduction = float(np.sum(inv_evals * proj * proj))
    return GammaSolution(gamma=gamma, reduction=reduction, indefinite=indefinite)
