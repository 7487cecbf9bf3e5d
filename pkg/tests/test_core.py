import numpy as np
import pytest
from oracle_utils import enumerate_discrete_cam, random_psd_matrix

from camest.core import CamComponents, MseGeometry, combine, mse_difference, optimal_gamma
from camest.dataset import CamWarning


def test_combine_zero_gamma_is_identity_bitwise():
    c = CamComponents(theta0=0.123456789, theta0M=[2.0, -3.0], thetaM=[1.0, 7.0])
    assert combine(c, [0.0, 0.0]) == 0.123456789


def test_combine_zero_difference():
    c = CamComponents(theta0=1.0, theta0M=[2.0], thetaM=[2.0])
    assert combine(c, [5.0]) == 1.0


def test_combine_hand_value():
    c = CamComponents(theta0=1.0, theta0M=[0.4], thetaM=[0.1])
    assert combine(c, [0.5]) == pytest.approx(0.85, abs=1e-15)


def test_combine_dimension_mismatch():
    c = CamComponents(theta0=1.0, theta0M=[0.4], thetaM=[0.1])
    with pytest.raises(ValueError):
        combine(c, [0.5, 0.5])


def test_mse_difference_zero_gamma():
    g = MseGeometry(omega=[1.0, 2.0], lam=np.eye(2))
    assert mse_difference([0.0, 0.0], g) == 0.0


def test_mse_difference_scalar_against_grid_minimum():
    g = MseGeometry(omega=[1.0], lam=[[2.0]])
    # independent check: minimise 2 g^2 - 2 g on a fine grid
    grid = np.linspace(-2, 2, 100001)
    values = 2 * grid**2 - 2 * grid
    assert mse_difference([0.5], g) == pytest.approx(-0.5, abs=1e-12)
    assert grid[np.argmin(values)] == pytest.approx(0.5, abs=1e-4)
    assert values.min() == pytest.approx(mse_difference([0.5], g), abs=1e-8)


def test_mse_difference_with_bias_terms():
    g = MseGeometry(omega=[0.0, 0.0], lam=np.eye(2), bias_adj=[1.0, 1.0], bias0=0.0)
    assert mse_difference([1.0, 0.0], g) == pytest.approx(2.0, abs=1e-15)


def test_optimal_gamma_scalar():
    sol = optimal_gamma(MseGeometry(omega=[1.0], lam=[[2.0]]))
    assert sol.gamma == pytest.approx([0.5], abs=1e-14)
    assert sol.reduction == pytest.approx(0.5, abs=1e-14)
    assert not sol.indefinite


def test_optimal_gamma_zero_covariance():
    sol = optimal_gamma(MseGeometry(omega=[0.0, 0.0], lam=np.eye(2)))
    assert np.all(sol.gamma == 0.0) and sol.reduction == 0.0


def test_optimal_gamma_singular_block():
    sol = optimal_gamma(MseGeometry(omega=[1.0, 0.0], lam=np.diag([1.0, 0.0])))
    assert sol.gamma == pytest.approx([1.0, 0.0], abs=1e-12)
    assert sol.reduction == pytest.approx(1.0, abs=1e-12)


def test_optimal_gamma_refuses_biased_adjustment():
    g = MseGeometry(omega=[1.0], lam=[[2.0]], bias_adj=[0.5])
    with pytest.raises(ValueError, match="mean-zero"):
        optimal_gamma(g)


def test_optimal_gamma_flags_indefinite():
    g = MseGeometry(omega=[1.0, 1.0], lam=np.diag([1.0, -0.5]))
    with pytest.warns(CamWarning):
        sol = optimal_gamma(g)
    assert sol.indefinite
    assert sol.reduction >= 0.0


def test_optimal_gamma_empty_geometry():
    sol = optimal_gamma(MseGeometry(omega=[], lam=np.zeros((0, 0))))
    assert sol.gamma.shape == (0,) and sol.reduction == 0.0


def test_optimal_gamma_dominates_random_gammas():
    rng = np.random.default_rng(7)
    for _ in range(200):
        k = int(rng.integers(1, 5))
        lam = random_psd_matrix(rng, k, rank=int(rng.integers(1, k + 1)))
        omega = np.asarray(lam @ rng.standard_normal(k))  # keep omega attainable
        g = MseGeometry(omega=omega, lam=lam)
        sol = optimal_gamma(g)
        best = mse_difference(sol.gamma, g)
        assert best == pytest.approx(-sol.reduction, rel=1e-9, abs=1e-12)
        for _ in range(10):
            assert best <= mse_difference(rng.standard_normal(k) * 2.0, g) + 1e-10


def test_mse_difference_is_quadratic_in_scale():
    rng = np.random.default_rng(3)
    lam = random_psd_matrix(rng, 3)
    g = MseGeometry(omega=rng.standard_normal(3), lam=lam,
                    bias_adj=rng.standard_normal(3), bias0=0.3)
    gamma = rng.standard_normal(3)
    values = [mse_difference(t * gamma, g) for t in (0.0, 1.0, 2.0)]
    # fit a parabola through t = 0, 1, 2 and check it reproduces t = 3
    coeffs = np.polyfit([0.0, 1.0, 2.0], values, 2)
    predicted = np.polyval(coeffs, 3.0)
    assert mse_difference(3.0 * gamma, g) == pytest.approx(predicted, rel=1e-9)


def test_discrete_enumeration_matches_formula_mcar():
    # identical laws in both groups: the contrast is exactly centred
    atoms = [(0.0, 1.0), (1.0, 2.0), (2.0, 0.0), (0.5, 0.5)]
    probs = [0.4, 0.3, 0.2, 0.1]
    oracle = enumerate_discrete_cam(atoms, probs, atoms, probs, 3, 2,
                                    phim=lambda y: y, theta=0.9)
    assert abs(oracle["bias_adj"]) < 1e-15
    g = MseGeometry(omega=[oracle["omega"]], lam=[[oracle["lam"]]],
                    bias_adj=[0.0], bias0=oracle["bias0"])
    rng = np.random.default_rng(11)
    for gamma in rng.normal(0.0, 2.0, 20):
        assert mse_difference([gamma], g) == pytest.approx(
            oracle["mse_difference"](gamma), abs=1e-12
        )
    sol = optimal_gamma(MseGeometry(omega=[oracle["omega"]], lam=[[oracle["lam"]]]))
    assert oracle["mse_difference"](float(sol.gamma[0])) == pytest.approx(
        -sol.reduction, abs=1e-12
    )
