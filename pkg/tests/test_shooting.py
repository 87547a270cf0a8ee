import numpy as np
import pytest

from spinfer.errors import EnsembleQualityError, SpinferError
from spinfer.ode import INFLUENZA_MODEL, LV_MODEL, LV_TRUE, TIV_MAP, solve_on_grid
from spinfer.pipeline import SurrogateBundle, generate_paths
from spinfer.sampler import SamplePath
from spinfer.shooting import (OptimizerConfig, ShootingProblem, default_grid, default_optimizer, estimate_ensemble,
                              estimate_one, shooting_objective, start_points)

GRID = default_grid(LV_MODEL)


def _exact_path(p, grid=GRID, index=0):
    return SamplePath(grid, ShootingProblem(LV_MODEL, grid).predict(p), 0, index)


def test_self_residual_is_zero():
    assert shooting_objective(LV_MODEL, LV_TRUE, _exact_path(LV_TRUE)) < 1e-10


def test_constant_offset():
    path = _exact_path(LV_TRUE)
    shifted = SamplePath(GRID, path.values + 0.3, 0, 0)
    assert shooting_objective(LV_MODEL, LV_TRUE, shifted) == pytest.approx(0.09, rel=1e-12)


def test_objective_transcription():
    other = solve_on_grid(LV_MODEL, [1.1, 1, 2, 0.5], GRID)
    path = SamplePath(GRID, other, 0, 0)
    mine = solve_on_grid(LV_MODEL, LV_TRUE, GRID)
    expect = sum((mine[k, i] - other[k, i]) ** 2 for k in range(2) for i in range(GRID.size)) / (2 * GRID.size)
    got = shooting_objective(LV_MODEL, LV_TRUE, path)
    assert got > 0 and got == pytest.approx(expect, rel=1e-12)


def test_noise_free_inversion():
    res = estimate_one(LV_MODEL, _exact_path(LV_TRUE), p0=1.2 * np.array(LV_TRUE))
    assert res.converged
    np.testing.assert_allclose(res.p_hat, LV_TRUE, rtol=1e-3)


def test_start_already_optimal():
    res = estimate_one(LV_MODEL, _exact_path(LV_TRUE), p0=LV_TRUE)
    assert res.iterations == 0 and res.converged
    np.testing.assert_array_equal(res.p_hat, LV_TRUE)


def test_surrogate_path_lands_near_truth(lv_fits):
    paths = generate_paths(SurrogateBundle(LV_MODEL.name, lv_fits), GRID, 3, seed=0)
    for p in paths:
        res = estimate_one(LV_MODEL, p)
        assert res.converged
        np.testing.assert_allclose(res.p_hat, LV_TRUE, rtol=0.3)


def test_ensemble_invariants(lv_fits):
    paths = generate_paths(SurrogateBundle(LV_MODEL.name, lv_fits), GRID, 6, seed=3)
    ens = estimate_ensemble(LV_MODEL, paths)
    prob = ShootingProblem(LV_MODEL, GRID)
    for r, p in zip(ens.results, paths):
        assert r.index == p.index
        assert LV_MODEL.feasible(r.p_hat)
        assert prob.objective(r.p_hat, p.values) <= prob.objective(LV_TRUE, p.values)
    # permuting paths permutes results
    perm = [4, 0, 5, 2, 1, 3]
    again = estimate_ensemble(LV_MODEL, [paths[i] for i in perm])
    np.testing.assert_array_equal(again.estimates, ens.estimates[perm])
    # worker count does not change anything
    par = estimate_ensemble(LV_MODEL, paths, workers=2)
    assert par.estimates.tobytes() == ens.estimates.tobytes()


def test_single_path_ensemble():
    ens = estimate_ensemble(LV_MODEL, [_exact_path(LV_TRUE)])
    assert len(ens.results) == 1
    q = ens.quantiles()
    for name, p in zip(LV_MODEL.param_names, LV_TRUE):
        assert set(q[name]) == {p}


def test_quality_gate():
    paths = [_exact_path([1.3, 0.8, 2.1, 0.6], index=j) for j in range(3)]
    opt = OptimizerConfig(max_iter=3)
    with pytest.raises(EnsembleQualityError):
        estimate_ensemble(LV_MODEL, paths, opt)
    ens = estimate_ensemble(LV_MODEL, paths, opt, max_failure_fraction=1.0)
    assert ens.failures == 3 and np.isnan(ens.quantiles()["alpha1"][0])


def test_influenza_noise_free_inversion():
    grid = np.linspace(1, 11, 300)
    p_true = np.array(TIV_MAP) * np.array([1.1, 0.9, 1.05, 1.0, 0.95, 1.0])
    prob = ShootingProblem(INFLUENZA_MODEL, grid)
    path = SamplePath(grid, prob.predict(p_true), 0, 0)
    res = estimate_one(INFLUENZA_MODEL, path, opt=default_optimizer(INFLUENZA_MODEL), problem=prob)
    assert res.objective < 1e-8


def test_start_points():
    cfg = OptimizerConfig(starts=4, spread=2.0)
    pts = start_points(LV_MODEL, cfg, index=5)
    assert len(pts) == 4
    np.testing.assert_array_equal(pts[0], [1, 1, 2, 0.5])
    ratios = np.array(pts[1:]) / np.array(LV_TRUE)
    assert np.all((ratios >= 0.5) & (ratios <= 2.0))
    np.testing.assert_array_equal(pts[1], start_points(LV_MODEL, cfg, 5)[1])
    with pytest.raises(SpinferError):
        start_points(LV_MODEL, OptimizerConfig(p0=(-1.0, 1.0, 1.0, 1.0)), 0)


def test_grid_must_be_equidistant():
    with pytest.raises(SpinferError):
        ShootingProblem(LV_MODEL, [0.0, 1.0, 3.0])


def test_config_round_trip():
    cfg = default_optimizer(INFLUENZA_MODEL, p0=TIV_MAP)
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.starts == 3 and cfg.adaptive
