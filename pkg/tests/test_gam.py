import warnings

import numpy as np
import pytest
from scipy.special import expit

from pu_tilt.exceptions import NonConvergenceError, ParameterError
from pu_tilt.gam import (
    AdditiveDesign,
    _solve_spd,
    effective_df,
    fit_additive_logistic,
    fit_linear_logistic,
    irls,
    penalized_objective,
)
from pu_tilt.splines import centering_weights, make_spec

from oracles import newton_logistic, penalized_optimum

SPEC = make_spec(4, 6)


def _instance(rng, n=200, p=2):
    X = rng.uniform(size=(n, p))
    f = -0.5 + np.sin(3 * X[:, 0]) + (X[:, 1] - 0.5) ** 2 * 2
    y = (rng.uniform(size=n) < expit(f)).astype(float)
    # fractional responses as produced by an E-step
    y[n // 2:] = expit(f[n // 2:] + rng.normal(0, 0.3, size=n - n // 2))
    return X, y


def test_matches_optimizer_oracle(rng):
    X, y = _instance(rng)
    fit = fit_additive_logistic(X, y, SPEC, kappa=1.0)
    design = AdditiveDesign(X, SPEC)
    assert fit.objective == pytest.approx(penalized_objective(design, y, fit.coef, 1.0), abs=1e-10)
    assert abs(fit.objective - penalized_optimum(X, y, SPEC, 1.0)) < 1e-6
    assert fit.objective >= penalized_optimum(X, y, SPEC, 1.0) - 1e-9


def test_components_centered(rng):
    X, y = _instance(rng)
    fit = fit_additive_logistic(X, y, SPEC, kappa=0.1)
    np.testing.assert_allclose(fit.theta @ centering_weights(SPEC), 0, atol=1e-12)
    assert 1 <= fit.edf <= 1 + 2 * SPEC.n_basis


def test_linear_basis_matches_newton(rng):
    spec = make_spec(2, 0)
    x = rng.uniform(size=(150, 1))
    y = expit(1.5 * x[:, 0] - 0.4 + rng.normal(0, 0.5, 150))
    fit = fit_additive_logistic(x, y, spec, kappa=0.0)
    b = newton_logistic(np.column_stack([np.ones(150), x[:, 0]]), y)
    t0, t1 = fit.theta[0]
    np.testing.assert_allclose([fit.intercept + t0, t1 - t0], b, atol=1e-8)


def test_symmetric_responses_large_penalty(rng):
    X = rng.uniform(size=(100, 2))
    fit = fit_additive_logistic(X, np.full(100, 0.5), SPEC, kappa=1e8)
    assert abs(fit.intercept) < 1e-8
    design = AdditiveDesign(X, SPEC)
    np.testing.assert_allclose(expit(design.F @ fit.coef), 0.5, atol=1e-8)


def test_intercept_score_equation(rng):
    X, y = _instance(rng)
    # the default stopping rule leaves ~1e-7 in the score; solve tightly here
    fit = fit_additive_logistic(X, y, SPEC, kappa=0.0, tol_grad=1e-12, tol_rel=0.0)
    design = AdditiveDesign(X, SPEC)
    assert abs(expit(design.F @ fit.coef).mean() - y.mean()) < 1e-8


def test_objective_trace_monotone(rng):
    X, y = _instance(rng)
    design = AdditiveDesign(X, SPEC)
    trace = []
    irls(design, y, 0.3, np.r_[3.0, rng.normal(0, 2, design.n_coef - 1)], trace=trace)
    assert len(trace) > 2
    assert np.all(np.diff(trace) >= -1e-10)


def test_edf_limits_and_monotone(rng):
    X, y = _instance(rng, n=300)
    design = AdditiveDesign(X, SPEC)
    edf0 = fit_additive_logistic(X, y, SPEC, 0.0, design=design).edf
    assert abs(edf0 - (1 + 2 * (SPEC.n_basis - 1))) < 1e-6
    big = fit_additive_logistic(X, y, SPEC, 1e12, design=design)
    # centered components keep only their linear part in the penalty null space
    assert abs(big.edf - (1 + 2)) < 0.05
    grid = np.logspace(-4, 3, 9)
    edfs = [fit_additive_logistic(X, y, SPEC, k, design=design).edf for k in grid]
    assert np.all(np.diff(edfs) < 0)
    fit = fit_additive_logistic(X, y, SPEC, 0.5, design=design)
    assert effective_df(fit, design) == pytest.approx(fit.edf)


def test_nonconvergence_carries_last_iterate(rng):
    X, y = _instance(rng)
    design = AdditiveDesign(X, SPEC)
    with pytest.raises(NonConvergenceError) as info:
        irls(design, y, 0.0, np.r_[5.0, np.full(design.n_coef - 1, 3.0)], max_iter=1)
    assert info.value.last is not None and len(info.value.last) == design.n_coef


def test_input_validation(rng):
    X = rng.uniform(size=(10, 2))
    with pytest.raises(ParameterError):
        fit_additive_logistic(X, np.full(10, 1.5), SPEC)
    with pytest.raises(ParameterError):
        fit_additive_logistic(X, np.full(9, 0.5), SPEC)
    with pytest.raises(ParameterError):
        fit_additive_logistic(X, np.full(10, 0.5), SPEC, kappa=-1)


def test_singular_system_uses_ridge():
    H = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.warns(RuntimeWarning, match="ridge"):
        step = _solve_spd(H, np.array([1.0, 1.0]))
    assert np.all(np.isfinite(step))


def test_weight_floor_on_separated_data():
    x = np.linspace(0, 1, 40)[:, None]
    y = (x[:, 0] > 0.5).astype(float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            a, b = fit_linear_logistic(x, y, max_iter=100)
        except NonConvergenceError as exc:
            a, b = None, exc.last
    assert np.all(np.isfinite(b))


def test_linear_symmetric_responses(rng):
    X = rng.uniform(size=(50, 3))
    a, b = fit_linear_logistic(X, np.full(50, 0.5))
    assert abs(a) < 1e-12 and np.abs(b).max() < 1e-12


def test_linear_matches_newton_on_block_toy():
    x = np.r_[np.linspace(0, 0.5, 30), np.linspace(0.5, 1, 30)][:, None]
    y = np.r_[np.full(30, 0.1), np.full(30, 0.9)]
    a, b = fit_linear_logistic(x, y)
    ref = newton_logistic(np.column_stack([np.ones(60), x]), y)
    np.testing.assert_allclose(np.r_[a, b], ref, atol=1e-8)


def test_linear_shift_invariance(rng):
    X = rng.uniform(size=(80, 2))
    y = expit(X @ [1.0, -2.0] + rng.normal(0, 0.5, 80))
    a, b = fit_linear_logistic(X, y)
    a2, b2 = fit_linear_logistic(X + [0.3, 0.0], y)
    np.testing.assert_allclose(b2, b, atol=1e-8)
    assert a2 == pytest.approx(a - 0.3 * b[0], abs=1e-8)
