import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import naive_gaussian_loglik, naive_predict, random_design
from spinfer.design import build_design
from spinfer.gp import GPFit, fit_gp, gp_loglik, gp_predict
from spinfer.kernels import KernelSpec, kernel_matrix
from spinfer.ode import LV_MODEL, LV_TRUE, solve_on_grid


def test_single_point_loglik():
    v = 0.3
    got = gp_loglik(KernelSpec("se", 1.0, 1.0), v, build_design([(0.0, 0.0)]))
    assert got == pytest.approx(-0.5 * math.log(2 * math.pi * (1 + v)), rel=1e-7)


@pytest.mark.parametrize("seed", range(10))
def test_unique_n_matches_full_n(seed):
    rng = np.random.default_rng(seed)
    design = random_design(rng, n_max=6, a_max=4)
    k = KernelSpec("se", rng.uniform(0.3, 3), rng.uniform(0.5, 2))
    v = rng.uniform(0.05, 1.0)
    assert gp_loglik(k, v, design) == pytest.approx(naive_gaussian_loglik(k, design, v), rel=1e-8)
    grid = np.linspace(-1, 11, 9)
    pred = gp_predict(GPFit(k, v, design), grid)
    mean, cov, _ = naive_predict(k, design, v, grid)
    np.testing.assert_allclose(pred.mean, mean, rtol=1e-8, atol=1e-8 * np.abs(mean).max())
    np.testing.assert_allclose(pred.cov, cov, rtol=1e-8, atol=1e-8 * k.scale)


def test_recovers_lengthscale_from_noise_free_draw():
    rng = np.random.default_rng(11)
    t = np.linspace(0, 10, 40)
    K = kernel_matrix(KernelSpec("se", 0.5, 1.0), t) + 1e-6 * np.eye(40)
    d = np.linalg.cholesky(K) @ rng.standard_normal(40)
    fit = fit_gp(build_design(zip(t, d)))
    assert 0.25 < fit.kernel.lengthscale < 1.0


def test_constant_data_interpolates():
    obs = [(t, 3.0) for t in (0.0, 1.0, 2.0, 3.0) for _ in range(3)]
    fit = fit_gp(build_design(obs))
    assert fit.noise < 1e-6
    np.testing.assert_allclose(fit.predict([0.0, 1.0, 2.0, 3.0]).mean, 3.0, rtol=1e-6)


def test_lv_band_covers_truth(lv_fits):
    # the band is the 90% predictive interval for a new observation
    grid = np.linspace(0, 10, 201)
    truth = solve_on_grid(LV_MODEL, LV_TRUE, grid)
    for k, fit in enumerate(lv_fits):
        lo, hi = fit.predict(grid).interval(0.9, include_noise=True)
        inside = np.mean((truth[k] >= lo) & (truth[k] <= hi))
        assert inside == 1.0, (k, inside)


def test_prior_prediction_without_data():
    k = KernelSpec("se", 1.0, 2.0)
    pred = GPFit(k, 0.5, None).predict([0.0, 4.0], include_noise=True)
    np.testing.assert_array_equal(pred.mean, 0.0)
    np.testing.assert_allclose(np.diag(pred.cov), 2.5)


def test_near_noise_free_interpolation():
    d = build_design([(0.0, 1.0), (1.0, -0.5), (2.5, 0.7)])
    pred = GPFit(KernelSpec("se", 1.0, 1.0), 1e-10, d).predict(d.times)
    np.testing.assert_allclose(pred.mean, d.means, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_variance_bounds(seed):
    rng = np.random.default_rng(seed)
    design = random_design(rng)
    k = KernelSpec("matern52", rng.uniform(0.2, 4), rng.uniform(0.1, 3))
    pred = GPFit(k, rng.uniform(1e-4, 1), design).predict(np.linspace(-2, 12, 30))
    var = np.diag(pred.cov)
    assert np.all(var >= -1e-10 * k.scale)
    assert np.all(var <= k.scale * (1 + 1e-12))
    np.testing.assert_array_equal(pred.cov, pred.cov.T)
    assert np.linalg.eigvalsh(pred.cov + 1e-8 * k.scale * np.eye(30)).min() > -1e-10


def test_round_trip(lv_fits):
    fit = lv_fits[0]
    back = GPFit.from_dict(fit.to_dict())
    np.testing.assert_allclose(back.predict([1.0, 2.0]).mean, fit.predict([1.0, 2.0]).mean, rtol=1e-14)
