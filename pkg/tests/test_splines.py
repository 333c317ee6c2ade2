import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copulaprobit.splines import (
    DegenerateInputError,
    LinearPredictor,
    MissingColumnError,
    SmoothTerm,
    build_spline_basis,
    eta,
    probit,
    probit_inv,
)


def test_basis_dimensions_and_penalty_rank():
    design, penalty, basis = build_spline_basis(np.linspace(0, 30, 200), 10)
    assert design.shape == (200, 9)
    assert penalty.shape == (9, 9)
    assert np.linalg.matrix_rank(penalty, tol=1e-9 * np.abs(penalty).max()) == 8
    assert len(basis.knots) == 10


def test_penalty_is_symmetric_psd():
    _, penalty, _ = build_spline_basis(np.random.default_rng(0).gamma(2.0, 3.0, 500), 8)
    np.testing.assert_allclose(penalty, penalty.T, atol=1e-14)
    assert np.linalg.eigvalsh(penalty).min() > -1e-9


def test_constant_column_is_degenerate():
    with pytest.raises(DegenerateInputError):
        build_spline_basis(np.full(50, 3.0), 10)


def test_too_few_distinct_values():
    with pytest.raises(DegenerateInputError):
        build_spline_basis(np.tile(np.arange(5.0), 20), 10)


def test_columns_are_centered():
    values = np.random.default_rng(1).exponential(5.0, 400)
    design, _, _ = build_spline_basis(values, 10)
    assert np.abs(design.sum(axis=0)).max() < 1e-8


def test_linear_trend_has_zero_penalty():
    values = np.random.default_rng(2).uniform(-3, 7, 300)
    design, penalty, _ = build_spline_basis(values, 10)
    target = 0.8 * values - 0.8 * values.mean()
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    np.testing.assert_allclose(design @ coef, target, atol=1e-8)
    assert coef @ penalty @ coef < 1e-8


def test_extrapolation_is_linear():
    values = np.linspace(0, 10, 100)
    _, _, basis = build_spline_basis(values, 6)
    x = np.array([11.0, 12.0, 13.0, -1.0, -2.0, -3.0])
    d = basis.design(x)
    np.testing.assert_allclose(d[1] - d[0], d[2] - d[1], atol=1e-12)
    np.testing.assert_allclose(d[4] - d[3], d[5] - d[4], atol=1e-12)


def test_basis_is_continuous_with_continuous_slope_at_boundary():
    values = np.linspace(0, 10, 100)
    _, _, basis = build_spline_basis(values, 6)
    h = 1e-6
    for edge in (0.0, 10.0):
        left, mid, right = basis.design(np.array([edge - h, edge, edge + h]))
        np.testing.assert_allclose(left, mid, atol=1e-5)
        np.testing.assert_allclose((mid - left) / h, (right - mid) / h, atol=1e-4)


def test_reevaluation_matches_training_design():
    values = np.random.default_rng(3).normal(size=120)
    design, _, basis = build_spline_basis(values, 7)
    np.testing.assert_allclose(basis.design(values), design, atol=1e-13)


def test_zero_spline_coefficients_contribute_nothing():
    term = SmoothTerm("age", 5).fitted(np.linspace(0, 30, 50))
    lp = LinearPredictor([], np.r_[0.7, np.zeros(4)], [term])
    assert eta(lp, {"age": 12.3}) == 0.7


def test_eta_examples():
    assert eta(LinearPredictor(["a"], [0.0, 0.0]), {"a": 3.0}) == 0.0
    assert eta(LinearPredictor([], [1.5]), {}) == 1.5
    assert eta(LinearPredictor(["a", "b"], [0.0, 0.5, -0.25]), {"a": 1.0, "b": 2.0}) == 0.0


def test_eta_missing_column():
    with pytest.raises(MissingColumnError):
        eta(LinearPredictor(["a"], [0.0, 1.0]), {"b": 1.0})


def test_linear_predictor_checks_length():
    with pytest.raises(ValueError):
        LinearPredictor(["a"], [1.0])


def test_probit_examples():
    assert probit(0.0) == 0.5
    assert probit(1.959964) == pytest.approx(0.975, abs=1e-6)
    assert probit_inv(probit(0.7)) == pytest.approx(0.7, abs=1e-8)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, float("nan")])
def test_probit_inv_rejects_boundary(p):
    with pytest.raises(ValueError):
        probit_inv(p)


@given(a=st.floats(-8, 8), b=st.floats(-8, 8))
@settings(max_examples=200)
def test_probit_monotone_and_symmetric(a, b):
    if a < b:
        assert probit(a) <= probit(b)
    assert probit(-a) == pytest.approx(1.0 - probit(a), abs=1e-12)
