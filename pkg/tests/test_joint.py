import math

import numpy as np
import pandas as pd
import pytest
from scipy import integrate, stats

from copulaprobit.copulas import ALL_CODES, CopulaSpec, independence_spec
from copulaprobit.joint import (
    JointModel,
    ModelSpec,
    ParamVector,
    SpecificationError,
    cell_probabilities,
    cell_probabilities_from_etas,
    gradient,
    log_likelihood,
    predict_conflict,
)
from copulaprobit.splines import SmoothTerm


def small_frame(n=60, seed=0):
    rng = np.random.default_rng(seed)
    return pd.DataFrame({
        "t": rng.integers(0, 2, n).astype(float),
        "y": rng.integers(0, 2, n).astype(float),
        "x": rng.normal(size=n),
        "z": rng.normal(size=n),
        "age": rng.uniform(0, 20, n),
    })


def spec(copula=None, smooth=False, lam=None):
    return ModelSpec("t", "y", ["x", "z"], ["x"], instruments=["z"],
                     smooths2=[SmoothTerm("age", 6, lam)] if smooth else [],
                     copula=copula or independence_spec())


def test_spec_enforces_exclusion_restriction():
    with pytest.raises(SpecificationError):
        ModelSpec("t", "y", ["x", "z"], ["x", "z"], instruments=["z"])
    with pytest.raises(SpecificationError):
        ModelSpec("t", "y", ["x"], ["x"], instruments=["z"])
    with pytest.raises(SpecificationError):
        ModelSpec("t", "y", ["x"], ["t"])


def test_param_vector_round_trip():
    pv = ParamVector(np.array([1.0, 2.0]), np.array([3.0]), 4.0, 5.0)
    back = ParamVector.from_array(pv.to_array(), 2, 1)
    np.testing.assert_array_equal(back.to_array(), pv.to_array())
    with pytest.raises(ValueError):
        ParamVector.from_array(np.zeros(3), 2, 1)


def test_cells_independence_example():
    cells = cell_probabilities_from_etas(0.0, 0.0, 0.0, independence_spec())
    np.testing.assert_allclose(cells, [0.25] * 4, atol=1e-15)


def test_cells_clayton_example():
    c = CopulaSpec.from_natural("C", 1.0)
    p11, p10, _, _ = cell_probabilities_from_etas(0.0, 0.0, 0.0, c)
    assert p11 == pytest.approx(1 / 3, abs=1e-12)
    assert p10 == pytest.approx(1 / 6, abs=1e-12)


def test_cells_margin_limit():
    for code in ALL_CODES:
        _, _, p01, p00 = cell_probabilities_from_etas(40.0, 0.3, 0.2, CopulaSpec.from_code(code, 0.5))
        assert abs(p01) < 1e-9 and abs(p00) < 1e-9


def test_cell_probabilities_for_a_row():
    s = spec()
    p = np.zeros(3 + 2 + 2)
    np.testing.assert_allclose(cell_probabilities(p, {"x": 0.4, "z": -1.0, "t": 1.0}, s), [0.25] * 4)


def test_cells_sum_to_one():
    rng = np.random.default_rng(5)
    for code in ALL_CODES:
        cop = CopulaSpec.from_code(code, rng.normal())
        cells = cell_probabilities_from_etas(rng.normal(size=50), rng.normal(size=50), rng.normal(), cop)
        np.testing.assert_allclose(sum(cells), 1.0, atol=1e-10)


def _quadrant(lo1, hi1, lo2, hi2, rho):
    pdf = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).pdf
    val, _ = integrate.dblquad(lambda b, a: pdf([a, b]), lo1, hi1, lo2, hi2, epsabs=1e-11, epsrel=1e-11)
    return val


@pytest.mark.parametrize("rho", [-0.8, -0.3, 0.0, 0.3, 0.8])
def test_gaussian_cells_match_quadrature(rho):
    # y = 1 when the latent normal error falls below eta; 12 sd truncates nothing measurable
    inf = 12.0
    cop = CopulaSpec.from_natural("N", rho)
    for eta1, eta2, gamma in [(0.3, -1.2, 0.5), (-0.7, 0.4, -0.9)]:
        p11, p10, p01, p00 = cell_probabilities_from_etas(eta1, eta2, gamma, cop)
        assert p11 == pytest.approx(_quadrant(-inf, eta1, -inf, eta2 + gamma, rho), abs=1e-6)
        assert p10 == pytest.approx(_quadrant(-inf, eta1, eta2 + gamma, inf, rho), abs=1e-6)
        assert p01 == pytest.approx(_quadrant(eta1, inf, -inf, eta2, rho), abs=1e-6)
        assert p00 == pytest.approx(_quadrant(eta1, inf, eta2, inf, rho), abs=1e-6)


def test_loglik_examples():
    s = ModelSpec("t", "y", [], [])
    one = pd.DataFrame({"t": [1.0], "y": [1.0]})
    assert log_likelihood(np.zeros(4), one, s) == pytest.approx(math.log(0.25), abs=1e-14)
    two = pd.concat([one, one])
    assert log_likelihood(np.zeros(4), two, s) == pytest.approx(2 * math.log(0.25), abs=1e-14)


def _naive_loglik(params, df, theta):
    """Row-by-row four-branch likelihood under a Clayton copula, written from scratch."""
    b1 = params[:3]
    b2 = params[3:5]
    g = params[5]
    total = 0.0
    for _, r in df.iterrows():
        e1 = b1[0] + b1[1] * r.x + b1[2] * r.z
        e2 = b2[0] + b2[1] * r.x
        p1 = stats.norm.cdf(e1)
        q = stats.norm.cdf(e2 + g * r.t)
        c = (p1**-theta + q**-theta - 1.0) ** (-1.0 / theta)
        if r.t == 1 and r.y == 1:
            prob = c
        elif r.t == 1 and r.y == 0:
            prob = p1 - c
        elif r.t == 0 and r.y == 1:
            prob = q - c
        else:
            prob = 1.0 - p1 - q + c
        total += math.log(prob)
    return total


def test_loglik_matches_naive_oracle():
    df = small_frame(40, seed=3)
    rng = np.random.default_rng(4)
    theta = 2.0
    for _ in range(3):
        params = np.r_[rng.normal(scale=0.4, size=6), math.log(theta)]
        got = log_likelihood(params, df, spec(CopulaSpec.from_code("C")))
        assert got == pytest.approx(_naive_loglik(params, df, theta), abs=1e-10)


@pytest.mark.parametrize("code", ALL_CODES)
def test_gradient_matches_finite_differences(code):
    df = small_frame(80, seed=7)
    s = spec(CopulaSpec.from_code(code))
    model = JointModel(s, df)
    rng = np.random.default_rng(8)
    params = rng.normal(scale=0.3, size=model.n_params)
    g = model.gradient(params)
    h = 1e-6
    fd = np.array([(model.loglik(params + h * e) - model.loglik(params - h * e)) / (2 * h)
                   for e in np.eye(model.n_params)])
    assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)) < 1e-4


def test_gradient_with_penalized_spline_matches_finite_differences():
    df = small_frame(80, seed=9)
    model = JointModel(spec(CopulaSpec.from_code("F"), smooth=True, lam=3.0), df)
    params = np.random.default_rng(1).normal(scale=0.3, size=model.n_params)
    h = 1e-6
    fd = np.array([(model.loglik(params + h * e) - model.loglik(params - h * e)) / (2 * h)
                   for e in np.eye(model.n_params)])
    np.testing.assert_allclose(model.gradient(params), fd, atol=1e-5)
    np.testing.assert_allclose(gradient(params, df, model.spec), model.gradient(params), atol=1e-12)


def test_hessian_matches_finite_differences_of_gradient():
    df = small_frame(80, seed=10)
    model = JointModel(spec(CopulaSpec.from_code("C180")), df)
    params = np.random.default_rng(2).normal(scale=0.3, size=model.n_params)
    h = 1e-6
    fd = np.column_stack([(model.gradient(params + h * e) - model.gradient(params - h * e)) / (2 * h)
                          for e in np.eye(model.n_params)])
    np.testing.assert_allclose(model.hessian(params), fd, atol=1e-4)


def test_intercept_score_hand_derivation():
    rng = np.random.default_rng(11)
    n = 101
    df = pd.DataFrame({"t": rng.integers(0, 2, n).astype(float), "y": rng.integers(0, 2, n).astype(float)})
    g = gradient(np.zeros(4), df, ModelSpec("t", "y", [], []))
    phi0 = 1.0 / math.sqrt(2 * math.pi)
    assert g[0] == pytest.approx(n * (df.t.mean() - 0.5) * phi0 / 0.25, abs=1e-10)


def test_penalty_monotone_in_lambda():
    df = small_frame(80)
    params = None
    values = []
    for lam in (0.1, 1.0, 10.0, 100.0):
        m = JointModel(spec(smooth=True, lam=lam), df)
        if params is None:
            params = np.random.default_rng(0).normal(scale=0.3, size=m.n_params)
        values.append(m.loglik(params))
    assert all(a > b for a, b in zip(values, values[1:]))


def test_predict_examples():
    indep = spec()
    row = {"x": 0.2, "z": 0.1, "t": 1.0}
    params = np.r_[0.3, 0.1, 0.2, -0.4, 0.5, 0.7, 0.0]
    assert predict_conflict(params, row, indep) == pytest.approx(
        predict_conflict(params, row, indep, mode="marginal"), abs=1e-12)

    clay = ModelSpec("t", "y", [], [], copula=CopulaSpec.from_natural("C", 1.0))
    assert predict_conflict(np.zeros(4), {"t": 1.0}, clay) == pytest.approx(2 / 3, abs=1e-12)


def test_predict_stays_in_unit_interval_at_clamps():
    for code in ALL_CODES:
        s = ModelSpec("t", "y", [], [], copula=CopulaSpec.from_code(code, 2.0))
        for t in (0.0, 1.0):
            for p in ([40.0, 40.0, 0.0], [-40.0, -40.0, 0.0], [40.0, -40.0, 3.0]):
                val = predict_conflict(np.r_[p, 2.0], {"t": t}, s)
                assert 0.0 <= val <= 1.0


def test_zero_gamma_makes_predictions_invariant_to_treatment_under_independence():
    s = spec()
    params = np.r_[0.3, 0.1, 0.2, -0.4, 0.5, 0.0, 0.0]
    a = predict_conflict(params, {"x": 0.2, "z": 0.1, "t": 1.0}, s)
    b = predict_conflict(params, {"x": 0.2, "z": 0.1, "t": 0.0}, s)
    assert a == pytest.approx(b, abs=1e-14)


def test_non_binary_treatment_rejected():
    df = small_frame(10)
    df.loc[0, "t"] = 2.0
    with pytest.raises(ValueError):
        JointModel(spec(), df)
