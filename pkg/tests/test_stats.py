import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import design_rows, normal_equations_solve, two_pass
from treatalloc.seeding import make_rng
from treatalloc.sim import build_grid
from treatalloc.stats import (
    ConditionEstimate,
    InsufficientDataError,
    RegressionModel,
    SingularDesignError,
    ci_width,
    ci_width_or_inf,
    fit_ols,
    fit_ols_grouped,
    predict_with_ci,
    t_quantile,
    update_stats,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


# --------------------------------------------------------------------------
# streaming moments
# --------------------------------------------------------------------------


def test_single_value():
    est = update_stats(ConditionEstimate(), 5.0)
    assert (est.n, est.mean, est.m2) == (1, 5.0, 0.0)


def test_three_values_by_hand():
    est = ConditionEstimate.from_values([1.0, 2.0, 3.0])
    assert est.mean == 2.0
    assert est.m2 == 2.0


def test_ten_thousand_normals_against_two_pass():
    x = make_rng(11).standard_normal(10_000)
    est = ConditionEstimate.from_values(x)
    mean, m2 = two_pass(x)
    assert abs(est.mean - mean) < 0.05
    assert est.mean == pytest.approx(mean, rel=1e-9, abs=1e-12)
    assert est.m2 == pytest.approx(m2, rel=1e-9)


@settings(max_examples=200)
@given(st.lists(finite, min_size=2, max_size=200))
def test_streaming_matches_two_pass(values):
    est = ConditionEstimate.from_values(values)
    mean, m2 = two_pass(values)
    scale = max(1.0, max(abs(v) for v in values))
    assert est.n == len(values)
    assert est.mean == pytest.approx(mean, rel=1e-9, abs=1e-9 * scale)
    assert est.m2 >= 0
    assert est.m2 == pytest.approx(m2, rel=1e-9, abs=1e-9 * scale**2)


# --------------------------------------------------------------------------
# confidence intervals
# --------------------------------------------------------------------------


def test_zero_variance_width_is_exactly_zero():
    for n in (2, 3, 50):
        assert ci_width(ConditionEstimate.from_values([7.5] * n), 0.95) == 0.0


def test_width_n4_sd2():
    # t(0.975, 3) = 3.182446 from tables; 2 * 3.182446 * 2 / sqrt(4)
    est = ConditionEstimate(n=4, mean=0.0, m2=3 * 4.0)
    assert ci_width(est, 0.95) == pytest.approx(6.365, abs=5e-4)


def test_width_scale_at_large_sample_size():
    est = ConditionEstimate(n=2450, mean=2390.35, m2=2449 * 49.8**2)
    assert ci_width(est, 0.95) == pytest.approx(3.94, abs=0.01)


def test_insufficient_data():
    with pytest.raises(InsufficientDataError):
        ci_width(ConditionEstimate(n=1, mean=1.0))
    assert ci_width_or_inf(ConditionEstimate()) == math.inf


def test_t_quantile_table_values():
    assert t_quantile(0.95, 3) == pytest.approx(3.182446, abs=1e-6)
    assert t_quantile(0.95, 10**6) == pytest.approx(1.959966, abs=1e-5)
    assert t_quantile(0.90, 9) == pytest.approx(1.833113, abs=1e-6)


def test_ci_coverage():
    rng = make_rng(2024)
    trials, n, mu = 5000, 30, 3.0
    hits = 0
    for _ in range(trials):
        est = ConditionEstimate.from_values(rng.normal(mu, 2.0, n))
        hits += abs(est.mean - mu) <= ci_width(est, 0.95) / 2
    assert 0.93 <= hits / trials <= 0.97


# --------------------------------------------------------------------------
# OLS
# --------------------------------------------------------------------------


def _grid_points(nx1=5, nx2=2):
    return [(a, b) for b in range(nx2) for a in range(nx1)]


def test_constant_response():
    obs = [(a, b, 7.0) for a, b in _grid_points(2, 2)]
    m = fit_ols(obs, with_interaction=True)
    np.testing.assert_allclose(m.beta, [7, 0, 0, 0], atol=1e-12)
    assert m.sigma2_hat == 0.0


def test_exact_plane_no_interaction():
    obs = [(a, b, 1 + 2 * a + 3 * b) for a, b in _grid_points(2, 2)]
    m = fit_ols(obs, with_interaction=False)
    np.testing.assert_allclose(m.beta, [1, 2, 3], atol=1e-12)
    assert m.sigma2_hat == 0.0
    assert len(m.beta) == 3 and m.n_params == 3


def test_noisy_recovery_against_normal_equations():
    rng = make_rng(8)
    true = np.array([2400.0, -15.0, -7.0, 0.5])
    pts = _grid_points() * 4
    x1 = np.array([p[0] for p in pts], float)
    x2 = np.array([p[1] for p in pts], float)
    X = np.array(design_rows(x1, x2, True))
    y = X @ true + rng.normal(0, 5.0, len(pts))
    m = fit_ols(np.column_stack([x1, x2, y]), with_interaction=True)
    ref = normal_equations_solve(X, y)
    np.testing.assert_allclose(m.beta, ref, rtol=1e-8, atol=1e-8)
    se = np.sqrt(m.sigma2_hat * np.diag(m.xtx_inverse))
    assert np.all(np.abs(m.beta - true) < 3 * se)


def test_xtx_inverse_is_spd():
    m = fit_ols([(a, b, a + b) for a, b in _grid_points()] * 2)
    np.testing.assert_allclose(m.xtx_inverse, m.xtx_inverse.T)
    assert np.all(np.linalg.eigvalsh(m.xtx_inverse) > 0)


@pytest.mark.parametrize("with_interaction", [True, False])
def test_singular_single_condition(with_interaction):
    obs = [(1.0, 1.0, float(v)) for v in range(20)]
    with pytest.raises(SingularDesignError, match="x1"):
        fit_ols(obs, with_interaction)


def test_singular_interaction_not_identifiable():
    # three corners of a square: the x1*x2 column is a combination of the others
    obs = [(0, 0, 1.0), (1, 0, 2.0), (0, 1, 3.0)] * 3
    with pytest.raises(SingularDesignError):
        fit_ols(obs, with_interaction=True)
    fit_ols(obs, with_interaction=False)


def test_too_few_observations():
    with pytest.raises(SingularDesignError, match="at least 4"):
        fit_ols([(0, 0, 1.0), (1, 1, 2.0), (0, 1, 3.0)], True)


@st.composite
def datasets(draw):
    nx1 = draw(st.integers(2, 5))
    nx2 = draw(st.integers(2, 3))
    reps = draw(st.integers(1, 3))
    pts = _grid_points(nx1, nx2) * reps
    ys = draw(st.lists(st.floats(-1e3, 1e3), min_size=len(pts), max_size=len(pts)))
    return np.array([(a, b, y) for (a, b), y in zip(pts, ys)], float)


@settings(max_examples=100, deadline=None)
@given(datasets(), st.booleans())
def test_residuals_orthogonal_to_design(data, with_interaction):
    m = fit_ols(data, with_interaction)
    X = np.array(design_rows(data[:, 0], data[:, 1], with_interaction))
    r = data[:, 2] - X @ m.beta
    assert np.all(np.abs(X.T @ r) <= 1e-8 * max(np.linalg.norm(data[:, 2]), 1.0) * np.abs(X).sum(axis=0).clip(1))


@settings(max_examples=100, deadline=None)
@given(datasets())
def test_interaction_never_increases_rss(data):
    def rss(with_interaction):
        m = fit_ols(data, with_interaction)
        X = np.array(design_rows(data[:, 0], data[:, 1], with_interaction))
        r = data[:, 2] - X @ m.beta
        return float(r @ r)

    assert rss(True) <= rss(False) + 1e-9 * max(1.0, float(data[:, 2] @ data[:, 2]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=4, max_size=4), st.integers(1, 4), st.integers(1, 3))
def test_interpolated_point_predicts_exactly(beta, nx1_extra, reps):
    pts = _grid_points(1 + nx1_extra, 2) * reps
    y = [beta[0] + beta[1] * a + beta[2] * b + beta[3] * a * b for a, b in pts]
    m = fit_ols([(a, b, v) for (a, b), v in zip(pts, y)], True)
    for (a, b), v in zip(pts, y):
        mean, width = predict_with_ci(m, (a, b))
        assert mean == pytest.approx(v, abs=1e-8 * max(1.0, max(map(abs, y))))
        assert width == 0.0


@settings(max_examples=50, deadline=None)
@given(datasets(), st.booleans())
def test_grouped_fit_equals_raw_fit(data, with_interaction):
    raw = fit_ols(data, with_interaction)
    keys = sorted({(a, b) for a, b, _ in data})
    ests = [ConditionEstimate.from_values(data[(data[:, 0] == a) & (data[:, 1] == b), 2]) for a, b in keys]
    grouped = fit_ols_grouped([k[0] for k in keys], [k[1] for k in keys], ests, with_interaction)
    scale = max(1.0, float(np.abs(data[:, 2]).max()))
    np.testing.assert_allclose(grouped.beta, raw.beta, rtol=1e-7, atol=1e-7 * scale)
    assert grouped.n_total == raw.n_total
    assert grouped.sigma2_hat == pytest.approx(raw.sigma2_hat, rel=1e-6, abs=1e-9 * scale**2)


# --------------------------------------------------------------------------
# prediction intervals
# --------------------------------------------------------------------------


def test_unfitted_model():
    with pytest.raises(ValueError, match="not been fitted"):
        predict_with_ci(RegressionModel(with_interaction=True), (0, 0))


def test_prediction_width_formula():
    rng = make_rng(3)
    g = build_grid()
    obs = [(c.x1, c.x2, rng.normal(100, 4)) for c in g.active_conditions for _ in range(6)]
    m = fit_ols(obs, True)
    c = g.condition("Bd")
    mean, width = predict_with_ci(m, c, 0.9)
    x0 = np.array([1, c.x1, c.x2, c.x1 * c.x2], float)
    assert mean == pytest.approx(x0 @ m.beta)
    expected = 2 * t_quantile(0.9, m.n_total - 4) * math.sqrt(m.sigma2_hat * x0 @ m.xtx_inverse @ x0)
    assert width == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("with_interaction", [True, False])
def test_interior_narrower_than_corners(with_interaction):
    g = build_grid()
    x1 = np.array([c.x1 for c in g.active_conditions], float)
    x2 = np.array([c.x2 for c in g.active_conditions], float)
    # leverage computed directly from the balanced design, 20 obs per condition
    X = np.array(design_rows(x1, x2, with_interaction))
    lev = np.einsum("ij,jk,ik->i", X, np.linalg.inv(20 * X.T @ X), X)

    rng = make_rng(17)
    obs = [(a, b, rng.normal(0, 10)) for a, b in zip(x1, x2) for _ in range(20)]
    m = fit_ols(obs, with_interaction)
    widths = np.array([predict_with_ci(m, c)[1] for c in g.active_conditions])
    np.testing.assert_allclose(widths / widths[0], np.sqrt(lev / lev[0]), rtol=1e-10)
    corner = [g.labels.index(lab) for lab in ("Aa", "Ae", "Ba", "Be")]
    interior = [i for i in range(10) if i not in corner]
    assert widths[corner].min() > widths[interior].max()
