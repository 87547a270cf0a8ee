"""Single-shooting inversion of sample paths and the ensemble driver.

Each sample path ``g_j`` is mapped to the parameter vector minimizing the
mean squared misfit between the observed ODE solution and ``g_j`` on the
path's grid. The map is deterministic, so the collection of estimates is the
pushforward of the surrogate posterior through it.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .errors import BlowUpError, EnsembleQualityError, SpinferError
from .ode import INFLUENZA_TIV, LOTKA_VOLTERRA, TIV_MAP, ODEModel, get_model, integrate_nodes, refined_nodes

log = logging.getLogger(__name__)

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)
PENALTY = 1e100


@dataclass(frozen=True)
class OptimizerConfig:
    """Nelder-Mead settings and start policy.

    ``p0`` of ``None`` means the model default (see :func:`default_p0`).
    With ``starts > 1`` the extra starts are log-uniform within a factor
    ``spread`` of ``p0``, drawn from a stream keyed by the path index.
    """

    xtol: float = 1e-8
    max_iter: int = 5000
    target: float = 1e-14
    initial_step: float = 0.1
    starts: int = 1
    spread: float = 2.0
    adaptive: bool = False
    screen_xtol: float = 1e-4
    p0: tuple | None = None
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("p0") is not None:
            d["p0"] = tuple(float(x) for x in d["p0"])
        return cls(**d)


def default_p0(model: ODEModel):
    if model.name == LOTKA_VOLTERRA:
        return (1.0, 1.0, 2.0, 0.5)
    if model.name == INFLUENZA_TIV:
        return TIV_MAP
    lo, hi = model.bounds
    return tuple(np.sqrt(lo * hi))


def default_grid(model: ODEModel, points=None):
    if model.name == INFLUENZA_TIV:
        return np.linspace(1.0, 11.0, points or 3000)
    return np.linspace(0.0, 10.0, points or 201)


def default_optimizer(model: ODEModel, **overrides) -> OptimizerConfig:
    base = {"starts": 3, "adaptive": True} if model.name == INFLUENZA_TIV else {}
    base.update(overrides)
    return OptimizerConfig(**base)


@dataclass(frozen=True)
class ShootingResult:
    p_hat: np.ndarray
    objective: float
    iterations: int
    evaluations: int
    converged: bool
    index: int = 0
    start: int = 0


class ShootingProblem:
    """Model plus a fixed residual grid, with the RK4 nodes precomputed."""

    def __init__(self, model: ODEModel, grid, step=None):
        self.model = model
        self.grid = np.asarray(grid, float)
        d = np.diff(self.grid)
        if d.size and (np.any(d <= 0) or np.ptp(d) > 1e-9 * max(1.0, abs(d.mean()))):
            raise SpinferError("residual grid must be strictly increasing and equidistant")
        self.nodes, pts, idx = refined_nodes(self.grid, model.t0, step or model.default_step)
        self.at = idx[np.searchsorted(pts, self.grid)]

    def predict(self, p):
        p = np.asarray(p, float)
        states = integrate_nodes(self.model, p, self.model.initial_state(p), self.nodes)
        return self.model.observe_states(states[self.at])

    def objective(self, p, values) -> float:
        """Mean squared residual over the grid (and outputs); ``inf`` on blow-up."""
        try:
            pred = self.predict(p)
        except BlowUpError:
            return math.inf
        r = pred - np.atleast_2d(values)
        val = float(np.mean(r * r))
        return val if math.isfinite(val) else math.inf


def shooting_objective(model: ODEModel, p, path, step=None) -> float:
    return ShootingProblem(model, path.grid, step).objective(p, path.values)


def _minimize(f, simplex, xtol, max_iter, adaptive):
    return optimize.minimize(f, simplex[0], method="Nelder-Mead", options={
        "initial_simplex": simplex, "xatol": xtol, "fatol": math.inf,
        "maxiter": max_iter, "maxfev": 50 * max_iter, "adaptive": adaptive})


def _log_objective(problem: ShootingProblem, values):
    lo, hi = (np.log(b) for b in problem.model.bounds)

    def f(x):
        # infeasible or blown-up points get a large finite penalty so the
        # simplex bookkeeping stays free of inf - inf
        if np.any(x < lo) or np.any(x > hi):
            return PENALTY
        v = problem.objective(np.exp(x), values)
        return v if v < PENALTY else PENALTY

    return f


def start_points(model: ODEModel, cfg: OptimizerConfig, index: int):
    p0 = np.asarray(cfg.p0 if cfg.p0 is not None else default_p0(model), float)
    if not model.feasible(p0):
        raise SpinferError(f"initial guess {p0.tolist()} outside the feasible set")
    pts = [p0]
    if cfg.starts > 1:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(index, 7)))
        w = math.log(cfg.spread)
        lo, hi = model.bounds
        for _ in range(cfg.starts - 1):
            pts.append(np.clip(p0 * np.exp(rng.uniform(-w, w, p0.size)), lo, hi))
    return pts


def estimate_one(model: ODEModel, path, p0=None, opt: OptimizerConfig | None = None,
                 problem: ShootingProblem | None = None, step=None) -> ShootingResult:
    """Nelder-Mead in log coordinates from one or more starts.

    With several starts each is first run to ``screen_xtol``; the best is
    then polished from its final simplex to ``xtol``. The returned point is
    never worse than the best start.
    """
    opt = opt or default_optimizer(model)
    if p0 is not None:
        opt = OptimizerConfig(**{**opt.to_dict(), "p0": tuple(p0)})
    problem = problem or ShootingProblem(model, path.grid, step)
    index = getattr(path, "index", 0)
    f = _log_objective(problem, path.values)
    starts = start_points(model, opt, index)
    f0 = [problem.objective(p, path.values) for p in starts]
    k0 = int(np.argmin(f0))
    if f0[k0] <= opt.target:
        return ShootingResult(starts[k0], f0[k0], 0, len(starts), True, index, k0)
    screen = opt.screen_xtol if len(starts) > 1 else opt.xtol
    best, nit, nfev = None, 0, len(starts)
    for k, p in enumerate(starts):
        x0 = np.log(p)
        res = _minimize(f, np.vstack([x0, x0 + opt.initial_step * np.eye(x0.size)]),
                        screen, opt.max_iter, opt.adaptive)
        nit, nfev = nit + int(res.nit), nfev + int(res.nfev)
        if best is None or res.fun < best[1].fun:
            best = (k, res)
    k, res = best
    if screen > opt.xtol and res.status == 0:
        res = _minimize(f, res.final_simplex[0], opt.xtol, opt.max_iter, opt.adaptive)
        nit, nfev = nit + int(res.nit), nfev + int(res.nfev)
    x, val = np.asarray(res.x), float(res.fun)
    if not val <= f0[k]:
        x, val = np.log(starts[k]), f0[k]
    converged = bool(res.status == 0) or val <= opt.target
    return ShootingResult(np.exp(x), val, nit, nfev, converged, index, k)


@dataclass
class PosteriorEnsemble:
    """Estimates in path order; quantiles use converged results only."""

    results: list
    param_names: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.p_hat for r in self.results])

    @property
    def converged_mask(self) -> np.ndarray:
        return np.array([r.converged for r in self.results], bool)

    @property
    def failures(self) -> int:
        return int((~self.converged_mask).sum())

    def converged_estimates(self):
        return self.estimates[self.converged_mask]

    def quantiles(self, q=QUANTILES) -> dict:
        est = self.converged_estimates()
        if est.size == 0:
            return {name: [math.nan] * len(q) for name in self.param_names}
        vals = np.quantile(est, q, axis=0)
        return {name: vals[:, i].tolist() for i, name in enumerate(self.param_names)}


# one problem per worker process, rebuilt lazily
_WORKER: dict = {}


def _solve_chunk(args):
    model_name, grid, step, opt, items = args
    key = (model_name, grid.tobytes(), step)
    if _WORKER.get("key") != key:
        _WORKER["key"] = key
        _WORKER["problem"] = ShootingProblem(get_model(model_name), grid, step)
    prob = _WORKER["problem"]
    return [estimate_one(prob.model, path, opt=opt, problem=prob) for path in items]


def estimate_ensemble(model: ODEModel, paths, opt: OptimizerConfig | None = None, workers=1,
                      step=None, max_failure_fraction=0.5) -> PosteriorEnsemble:
    """Invert every path; result order follows path order for any worker count.

    With ``workers > 1`` paths are solved in contiguous chunks by a process
    pool; ``model`` must then be registered under its name.
    """
    paths = list(paths)
    if not paths:
        raise SpinferError("need at least one path")
    opt = opt or default_optimizer(model)
    grid = paths[0].grid
    workers = max(1, min(int(workers), len(paths)))
    if workers == 1:
        prob = ShootingProblem(model, grid, step)
        results = [estimate_one(model, p, opt=opt, problem=prob) for p in paths]
    else:
        get_model(model.name)
        size = math.ceil(len(paths) / (4 * workers))
        chunks = [(model.name, grid, step, opt, paths[i:i + size]) for i in range(0, len(paths), size)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [r for part in ex.map(_solve_chunk, chunks) for r in part]
    ens = PosteriorEnsemble(results, model.param_names,
                            {"workers": workers, "optimizer": opt.to_dict(), "paths": len(paths)})
    frac = ens.failures / len(results)
    ens.diagnostics["failures"] = ens.failures
    if frac > max_failure_fraction:
        raise EnsembleQualityError(
            f"{ens.failures} of {len(results)} inversions did not converge",
            diagnostics=ens.diagnostics)
    return ens


def default_workers():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
