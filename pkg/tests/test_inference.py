from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

import pu_tilt.inference as inf
from pu_tilt.em import EmConfig, em_fit
from pu_tilt.exceptions import EstimationError, InferenceError, ParameterError
from pu_tilt.inference import (
    bootstrap_ci_pi,
    component_statistic,
    fourier_basis,
    fourier_project,
    percentile_interval,
)
from pu_tilt.inference import test_component as run_component_test
from pu_tilt.model import PuDataset

BOOT_CFG = EmConfig(n_starts=3, kappa_grid=(1.0,), seed=7)


def test_interval_of_two():
    assert percentile_interval([0.7, 0.2], 0.95) == (0.2, 0.7)


@given(st.lists(st.floats(0, 1), min_size=5, max_size=200))
def test_interval_widens_with_level(est):
    widths = [np.subtract(*percentile_interval(est, lv)[::-1]) for lv in (0.90, 0.95, 0.99)]
    assert widths[0] <= widths[1] <= widths[2]


def test_interval_validation():
    with pytest.raises(ParameterError):
        percentile_interval([], 0.9)
    with pytest.raises(ParameterError):
        percentile_interval([0.1], 1.0)


def test_fourier_orthonormal():
    x, w = np.polynomial.legendre.leggauss(256)
    Phi = fourier_basis(0.5 * (x + 1), 11)
    np.testing.assert_allclose((Phi.T * (0.5 * w)) @ Phi, np.eye(11), atol=1e-12)


def test_fourier_examples():
    np.testing.assert_array_equal(fourier_project(lambda x: np.zeros_like(x), 11), np.zeros(11))
    b = fourier_project(lambda x: np.sqrt(2) * np.cos(2 * np.pi * x), 3)
    np.testing.assert_allclose(b, [0, 1, 0], atol=1e-10)
    with pytest.raises(ParameterError):
        fourier_project(np.sin, 0)


def test_fourier_of_fit_matches_quadrature(small_fit):
    u = lambda x: small_fit.params.component(0, np.atleast_1d(x))
    b = fourier_project(u, 11)
    knots = list(small_fit.params.spec.interior)
    for k in range(11):
        phi = lambda x, k=k: fourier_basis(np.atleast_1d(x), 11)[0, k]
        ref = quad(lambda x: u(x)[0] * phi(x), 0, 1, points=knots, limit=200, epsabs=1e-13)[0]
        assert abs(b[k] - ref) < 1e-6


@given(st.lists(st.floats(-5, 5), min_size=11, max_size=11), st.integers(1, 5000))
def test_statistic_sign_invariant(b, n):
    b = np.array(b)
    assert component_statistic(b, n) == component_statistic(-b, n) >= 0


@pytest.fixture(scope="module")
def boot(small_s1):
    fit = em_fit(small_s1, BOOT_CFG)
    return fit, bootstrap_ci_pi(small_s1, BOOT_CFG, B=50, fit=fit)


def test_bootstrap_result(boot):
    fit, res = boot
    assert res.B == 50 and len(res.estimates) == 50 - res.failures
    assert res.ci_lower <= fit.pi <= res.ci_upper
    b = BOOT_CFG.bounds
    assert np.all((res.estimates >= b.pi_min) & (res.estimates <= 1 - b.pi_min))
    assert res.kappa == fit.kappa_selected and res.kappa_fixed


def test_bootstrap_normalization_invariant(small_s1):
    # an affine change of units that the min-max scaling undoes
    scale, shift = np.array([2.0, 0.5, 10.0, 3.0, 1.0]), np.array([-1.0, 4.0, 0.0, 7.0, 100.0])
    base = PuDataset.from_raw(small_s1.labeled, small_s1.unlabeled)
    moved = PuDataset.from_raw(small_s1.labeled * scale + shift, small_s1.unlabeled * scale + shift)
    a = bootstrap_ci_pi(base, BOOT_CFG, B=50)
    b = bootstrap_ci_pi(moved, BOOT_CFG, B=50)
    assert b.ci_lower == pytest.approx(a.ci_lower, abs=1e-8)
    assert b.ci_upper == pytest.approx(a.ci_upper, abs=1e-8)
    again = bootstrap_ci_pi(base, BOOT_CFG, B=50)
    assert np.array_equal(again.estimates, a.estimates)


def test_bootstrap_preconditions(small_s1):
    with pytest.raises(ParameterError):
        bootstrap_ci_pi(small_s1, BOOT_CFG, B=10)


def test_bootstrap_failure_threshold(monkeypatch, small_s1, small_fit):
    real = inf.em_fit
    count = {"n": 0}

    def flaky(ds, cfg, inits=None):
        count["n"] += 1
        if count["n"] % 4 == 0:
            raise EstimationError("forced")
        return real(ds, cfg, inits)

    monkeypatch.setattr(inf, "em_fit", flaky)
    with pytest.raises(InferenceError):
        bootstrap_ci_pi(small_s1, BOOT_CFG, B=50, fit=small_fit)


def test_component_test_zero_component(small_s1):
    fit = em_fit(small_s1, BOOT_CFG)
    theta = fit.params.theta.copy()
    theta[2] = 0.0
    zeroed = replace(fit, params=replace(fit.params, theta=theta))
    res = run_component_test(small_s1, BOOT_CFG, 2, B=100, fit=zeroed)
    assert res.statistic == 0.0 and not res.reject
    assert res.p_value == 1.0
    assert len(res.b_hat) == 11


def test_component_test_fields(small_s1):
    fit = em_fit(small_s1, BOOT_CFG)
    res = run_component_test(small_s1, BOOT_CFG, 0, B=100, fit=fit)
    assert res.statistic >= 0 and 0 < res.p_value <= 1
    assert res.reject == (res.statistic > res.critical_value)
    assert res.statistic == pytest.approx(small_s1.n * res.b_hat @ res.b_hat)


def test_component_test_preconditions(small_s1, small_fit):
    with pytest.raises(ParameterError):
        run_component_test(small_s1, BOOT_CFG, 0, B=50, fit=small_fit)
    with pytest.raises(ParameterError):
        run_component_test(small_s1, BOOT_CFG, 7, B=100, fit=small_fit)
    with pytest.raises(ParameterError):
        run_component_test(small_s1, replace(BOOT_CFG, model="linear"), 0, B=100)
