import math

import numpy as np
import pytest
from scipy.special import gammaln

from conftest import naive_gaussian_loglik, naive_predict, naive_tp_loglik, random_design
from spinfer.design import build_design
from spinfer.errors import InvalidDofError
from spinfer.gp import FitConfig
from spinfer.hetgp import HetGPFit, HetState, hetgp_predict
from spinfer.hettp import HetTPFit, TPState, fit_hettp, hettp_loglik, hettp_loglik_grad, hettp_predict
from spinfer.kernels import KernelSpec, kernel_matrix


def random_tp_state(rng, design):
    return TPState(rng.uniform(2.5, 30), rng.uniform(0.5, 3), rng.uniform(0.3, 3),
                   rng.uniform(0.05, 1.0, design.n), rng.choice(["squared-exponential", "matern-5/2"]))


def fd_partials(state, design, h=1e-6):
    """Central differences with relative step ``h`` for every partial."""
    def f(dof=state.dof, th=state.lengthscale, tau2=state.scale, noise=state.noise):
        return hettp_loglik(TPState(dof, th, tau2, noise, state.family), design)

    def cd(fun, x):
        s = h * max(1.0, abs(x))
        return (fun(x + s) - fun(x - s)) / (2 * s)

    d_noise = []
    for i in range(design.n):
        def fi(x, i=i):
            v = state.noise.copy()
            v[i] = x
            return f(noise=v)
        d_noise.append(cd(fi, state.noise[i]))
    return (cd(lambda x: f(dof=x), state.dof), cd(lambda x: f(th=x), state.lengthscale),
            cd(lambda x: f(tau2=x), state.scale), np.array(d_noise))


def relative_gap(a, b, floor=1e-6):
    return abs(a - b) / max(abs(b), floor)


@pytest.mark.parametrize("seed", range(10))
def test_loglik_matches_full_n(seed):
    rng = np.random.default_rng(seed)
    design = random_design(rng, n_max=6)
    st = random_tp_state(rng, design)
    k = KernelSpec(st.family, st.lengthscale, st.scale)
    assert hettp_loglik(st, design) == pytest.approx(naive_tp_loglik(st.dof, k, design, st.noise), rel=1e-8)


def test_gaussian_limit_of_loglik():
    rng = np.random.default_rng(1)
    design = random_design(rng)
    st = TPState(1e7, 1.0, 1.2, np.full(design.n, 0.3))
    k = KernelSpec(st.family, 1.0, 1.2)
    assert abs(hettp_loglik(st, design) - naive_gaussian_loglik(k, design, 0.3)) < 1e-3


def test_zero_data_drops_last_term():
    design = build_design([(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)])
    st = TPState(5.0, 1.0, 1.0, np.array([0.2, 0.4]))
    s = st.system(design)
    assert s.quadratic() == 0.0
    N = 3
    expect = -N / 2 * math.log(3 * math.pi) - s.logdet_full() / 2 + gammaln(4.0) - gammaln(2.5)
    assert hettp_loglik(st, design) == pytest.approx(expect, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_fd(seed):
    rng = np.random.default_rng(1000 + seed)
    design = random_design(rng, n_max=6)
    st = random_tp_state(rng, design)
    got = hettp_loglik_grad(st, design)
    fd = fd_partials(st, design)
    for a, b in zip(got[:3], fd[:3]):
        assert relative_gap(a, b) < 1e-4
    for a, b in zip(got[3], fd[3]):
        assert relative_gap(a, b) < 1e-4


def test_dof_derivative_flat_in_gaussian_limit():
    rng = np.random.default_rng(2)
    design = random_design(rng)
    st = TPState(1e7, 1.0, 1.0, np.full(design.n, 0.2))
    assert abs(hettp_loglik_grad(st, design)[0]) < 1e-6


def test_invalid_dof():
    with pytest.raises(InvalidDofError):
        hettp_loglik(TPState(2.0, 1.0, 1.0, np.array([0.1])), build_design([(0, 1.0)]))


def _tp(design, dof, nu=1.3, log_ratio=-1.5, lengthscale=1.1):
    lat = HetState(1.0, 2.0, 0.1, np.full(design.n, log_ratio) + np.linspace(-0.5, 0.5, design.n))
    return HetTPFit(dof, lengthscale, nu, lat, design)


def _het(tp):
    state = HetState(tp.lengthscale, tp.latent_state.noise_lengthscale, tp.latent_state.nugget,
                     tp.latent_state.latents)
    return HetGPFit(state, tp.scale, tp.latent_design, tp.design)


def test_mean_independent_of_dof_and_matches_full_n():
    rng = np.random.default_rng(3)
    design = random_design(rng)
    grid = np.linspace(-1, 11, 15)
    a, b = hettp_predict(_tp(design, 3.0), grid), hettp_predict(_tp(design, 300.0), grid)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-14, atol=1e-14)
    tp = _tp(design, 7.0)
    mean, cov, beta = naive_predict(tp.kernel, design, tp.noise_variance(design.times), grid)
    pred = hettp_predict(tp, grid)
    np.testing.assert_allclose(pred.mean, mean, rtol=1e-8, atol=1e-10)
    factor = (7.0 + beta - 2) / (7.0 + design.N - 2)
    np.testing.assert_allclose(pred.cov, factor * cov, rtol=1e-8, atol=1e-10)
    assert pred.dof == 7.0 + design.N


def test_beta_equal_to_n_gives_gaussian_variance():
    rng = np.random.default_rng(4)
    design = random_design(rng)
    beta0 = _tp(design, 5.0).beta
    c = math.sqrt(design.N / beta0)
    scaled = build_design([(t, c * v) for t, vals in zip(design.times, design.values) for v in vals])
    tp = _tp(scaled, 5.0)
    assert tp.beta == pytest.approx(scaled.N, rel=1e-9)
    grid = np.linspace(0, 10, 12)
    np.testing.assert_allclose(hettp_predict(tp, grid).cov, hetgp_predict(_het(tp), grid).cov, rtol=1e-8, atol=1e-12)


def test_doubling_data():
    rng = np.random.default_rng(5)
    design = random_design(rng)
    doubled = build_design([(t, 2 * v) for t, vals in zip(design.times, design.values) for v in vals])
    grid = np.linspace(0, 10, 9)
    a, b = _tp(design, 6.0), _tp(doubled, 6.0)
    assert b.beta == pytest.approx(4 * a.beta, rel=1e-10)
    np.testing.assert_allclose(b.predict(grid).mean, 2 * a.predict(grid).mean, rtol=1e-10, atol=1e-12)
    ratio = (6.0 + 4 * a.beta - 2) / (6.0 + a.beta - 2)
    np.testing.assert_allclose(b.predict(grid).cov, ratio * a.predict(grid).cov, rtol=1e-9, atol=1e-14)


def test_variance_increases_with_beta():
    rng = np.random.default_rng(6)
    design = random_design(rng)
    grid = np.linspace(0, 10, 20)
    prev = None
    for c in (0.5, 1.0, 2.0, 4.0):
        scaled = build_design([(t, c * v) for t, vals in zip(design.times, design.values) for v in vals])
        var = hettp_predict(_tp(scaled, 4.0), grid).variance()
        if prev is not None:
            assert np.all(var > prev)
        prev = var


def test_gaussian_limit_of_prediction():
    rng = np.random.default_rng(7)
    design = random_design(rng)
    tp = _tp(design, 1e7)
    grid = np.linspace(-1, 11, 30)
    a, b = hettp_predict(tp, grid), hetgp_predict(_het(tp), grid)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-5)
    np.testing.assert_allclose(a.variance(), b.variance(), rtol=1e-3)


def _gp_draw_design(rng, outliers=0.0):
    t = np.repeat(np.linspace(0, 10, 25), 4)
    K = kernel_matrix(KernelSpec("se", 1.5, 1.0), np.unique(t)) + 1e-8 * np.eye(25)
    f = np.repeat(np.linalg.cholesky(K) @ rng.standard_normal(25), 4)
    y = f + rng.normal(0, 0.2, t.size)
    bad = rng.random(t.size) < outliers
    y[bad] += rng.choice([-1, 1], bad.sum()) * rng.uniform(2, 4, bad.sum())
    return t, y, bad


def test_gaussian_data_gives_large_dof():
    t, y, _ = _gp_draw_design(np.random.default_rng(8))
    fit = fit_hettp(build_design(zip(t, y)), FitConfig(starts=2))
    assert fit.dof > 30


@pytest.mark.xfail(strict=True, reason="dof is not identified once the scale is fitted; the fit runs to the "
                                       "upper dof bound either way")
def test_outliers_lower_fitted_dof():
    t, y, bad = _gp_draw_design(np.random.default_rng(9), outliers=0.1)
    with_out = fit_hettp(build_design(zip(t, y)), FitConfig(starts=2))
    clean = fit_hettp(build_design(zip(t[~bad], y[~bad])), FitConfig(starts=2))
    assert with_out.dof < clean.dof


@pytest.mark.xfail(strict=True, reason="with dof at its upper bound the Student-t fit is the hetGP fit, so its "
                                       "bands are not narrower")
def test_influenza_intervals_narrower_than_hetgp(flu_hettp, flu_hetgp):
    t = np.array([1.0, 6.0, 7.0])
    w_tp = np.diff(flu_hettp.predict(t).interval(0.95, include_noise=True), axis=0)
    w_gp = np.diff(flu_hetgp.predict(t).interval(0.95, include_noise=True), axis=0)
    assert np.all(w_tp < w_gp)


def test_round_trip(flu_hettp):
    back = HetTPFit.from_dict(flu_hettp.to_dict())
    g = np.array([2.0, 9.5])
    assert back.dof == flu_hettp.dof
    np.testing.assert_allclose(back.predict(g).cov, flu_hettp.predict(g).cov, rtol=1e-12)
