from fractions import Fraction

import numpy as np
import pytest
from sklearn.base import clone

from raftsurv.exceptions import IdentifiabilityError, InsufficientDataError
from raftsurv.residualize import AgeResidualizer, ResidualModel, apply_stage1, fit_stage1


def _brute_force_ols(a, z):
    """Minimise the squared error on a coarse grid, then refine around the best cell."""
    b0, b1, width = 0.0, 0.0, 8.0
    for _ in range(40):
        g0 = np.linspace(b0 - width, b0 + width, 41)
        g1 = np.linspace(b1 - width, b1 + width, 41)
        sse = ((z[None, None, :] - g0[:, None, None] - g1[None, :, None] * a[None, None, :]) ** 2).sum(-1)
        i, j = np.unravel_index(np.argmin(sse), sse.shape)
        b0, b1, width = g0[i], g1[j], width / 4
    return b0, b1


def test_exact_linear_data():
    model, resid = fit_stage1([1, 2, 3], [5, 8, 11])
    assert model.slope[0] == pytest.approx(3.0, abs=1e-12)
    assert model.intercept[0] == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(resid[:, 0], 0.0, atol=1e-12)


def _exact_ols(a, z):
    a, z = [Fraction(v) for v in a], [Fraction(v) for v in z]
    n = len(a)
    am, zm = sum(a) / n, sum(z) / n
    slope = sum((ai - am) * (zi - zm) for ai, zi in zip(a, z)) / sum((ai - am) ** 2 for ai in a)
    return zm - slope * am, slope


def test_hand_example_matches_exact_and_grid_search():
    a, z = np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 4.0])
    model, resid = fit_stage1(a, z)
    b0, b1 = _exact_ols(a, z)
    assert (b0, b1) == (Fraction(-2, 3), Fraction(3, 2))
    assert abs(model.slope[0] - float(b1)) < 1e-10
    assert abs(model.intercept[0] - float(b0)) < 1e-10
    np.testing.assert_allclose(resid[:, 0], [1 / 6, -1 / 3, 1 / 6], atol=1e-10)
    # the squared error is flat near its minimum, so a grid search resolves only ~sqrt(eps)
    g0, g1 = _brute_force_ols(a, z)
    assert abs(model.intercept[0] - g0) < 1e-6
    assert abs(model.slope[0] - g1) < 1e-6


def test_constant_second_covariate():
    a = np.array([20.0, 35.0, 50.0, 65.0])
    Z = np.column_stack([2 * a + 1, np.full(4, 7.0)])
    model, resid = fit_stage1(a, Z)
    assert model.slope[1] == pytest.approx(0.0, abs=1e-12)
    assert model.intercept[1] == pytest.approx(7.0, abs=1e-12)
    np.testing.assert_allclose(resid, 0.0, atol=1e-10)


def test_apply_on_trend_subject():
    assert apply_stage1(ResidualModel([2.0], [3.0]), 10.0, [32.0]) == pytest.approx([0.0])


def test_identity_model_leaves_z_unchanged(rng):
    z = rng.normal(size=(5, 2))
    np.testing.assert_array_equal(apply_stage1(ResidualModel([0, 0], [0, 0]), rng.uniform(20, 80, 5), z), z)


def test_apply_matches_training_residual():
    model, resid = fit_stage1([1, 2, 3], [1, 2, 4])
    assert apply_stage1(model, 2.0, [2.0])[0] == pytest.approx(-1 / 3, abs=1e-12)
    assert apply_stage1(model, 2.0, [2.0])[0] == resid[1, 0]


def test_residuals_mean_zero_and_uncorrelated_with_age(rng):
    a = rng.uniform(30, 70, 500)
    Z = np.column_stack([100 + 1.5 * a + rng.normal(0, 12, 500), rng.normal(size=500)])
    _, resid = fit_stage1(a, Z)
    np.testing.assert_allclose(resid.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose((a - a.mean()) @ resid, 0.0, atol=1e-7)


def test_too_few_subjects():
    with pytest.raises(InsufficientDataError):
        fit_stage1([1, 2], [3, 4])


def test_identical_ages_unidentifiable():
    with pytest.raises(IdentifiabilityError, match="z_1"):
        fit_stage1([40, 40, 40], [1, 2, 3])


def test_nonfinite_input_rejected():
    with pytest.raises(ValueError):
        fit_stage1([1, 2, 3], [1, np.nan, 3])


def test_covariate_count_mismatch():
    with pytest.raises(ValueError, match="covariates"):
        apply_stage1(ResidualModel([0, 0], [1, 1]), 3.0, [1.0])


def test_serialization_round_trip():
    model, _ = fit_stage1([1, 2, 3, 5], [[1, 0], [2, 1], [4, 1], [5, 3]], names=["z_a", "z_b"])
    again = ResidualModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(again.intercept, model.intercept)
    np.testing.assert_array_equal(again.slope, model.slope)
    assert again.names == ("z_a", "z_b")


def test_transformer_interface(rng):
    a = rng.uniform(30, 70, 50)
    Z = np.column_stack([3 + 0.5 * a + rng.normal(size=50)])
    est = AgeResidualizer()
    out = est.fit_transform(Z, ages=a)
    np.testing.assert_allclose(out, fit_stage1(a, Z)[1])
    np.testing.assert_allclose(est.transform(Z, ages=a), out)
    assert clone(est).get_params() == est.get_params()
