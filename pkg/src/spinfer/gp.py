"""Homoskedastic Gaussian process surrogate with replicate-aware likelihood."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .design import ReplicatedDesign
from .errors import IllConditionedError, OptimizationFailure, SpinferError
from .kernels import SQUARED_EXPONENTIAL, KernelSpec, canonical_family
from .surrogate import Surrogate, UniqueNSystem

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    """Knobs for maximum-likelihood hyperparameter search.

    Bounds left as ``None`` are derived from the data (see :func:`default_bounds`).
    """

    starts: int = 5
    tol: float = 1e-8
    maxiter: int = 500
    seed: int = 0
    lengthscale_bounds: tuple | None = None
    noise_bounds: tuple | None = None
    scale_bounds: tuple | None = None


def data_scales(design: ReplicatedDesign):
    t, d = design.observations()
    var = float(np.var(d))
    m2 = float(np.mean(d**2))
    floor = max(1e-8 * m2, 1e-300)
    return max(var, floor), max(m2, var, floor)


def default_bounds(design: ReplicatedDesign, cfg: FitConfig):
    t = design.times
    span = float(t[-1] - t[0]) if t.size > 1 else 1.0
    gaps = np.diff(t)
    dt_min = float(gaps.min()) if gaps.size else span
    var, m2 = data_scales(design)
    theta = cfg.lengthscale_bounds or (dt_min / 2.0, 2.0 * span)
    noise = cfg.noise_bounds or (1e-8 * var, var)
    scale = cfg.scale_bounds or (1e-3 * m2, 1e3 * m2)
    return theta, scale, noise


@dataclass
class GPFit(Surrogate):
    """Fitted homoskedastic GP: kernel, constant noise ``v`` and training design."""

    kernel: KernelSpec
    noise: float
    design: ReplicatedDesign | None
    loglik: float | None = None
    diagnostics: dict = field(default_factory=dict)

    kind = "gp"

    def __post_init__(self):
        if not self.noise >= 0:
            raise SpinferError(f"noise variance must be nonnegative, got {self.noise}")
        if self.loglik is None and self.design is not None:
            self.loglik = gp_loglik(self.kernel, self.noise, self.design)

    def noise_variance(self, t):
        return np.full(np.shape(np.atleast_1d(t)), float(self.noise))

    def condition(self, design):
        return GPFit(self.kernel, self.noise, design, diagnostics=self.diagnostics)

    def to_dict(self):
        return {
            "kind": self.kind,
            "kernel": self.kernel.to_dict(),
            "noise": self.noise,
            "loglik": self.loglik,
            "design": None if self.design is None else self.design.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        design = None if d["design"] is None else ReplicatedDesign.from_dict(d["design"])
        return cls(KernelSpec.from_dict(d["kernel"]), float(d["noise"]), design)


def gp_loglik(kernel: KernelSpec, v: float, design: ReplicatedDesign) -> float:
    """Zero-mean Gaussian log density of all ``N`` observations via unique-n statistics."""
    return UniqueNSystem(kernel, design, v).gaussian_loglik()


def gp_predict(fit: GPFit, grid, include_noise=False):
    return fit.predict(grid, include_noise)


def _starts(bounds, count, rng):
    lo = np.log([b[0] for b in bounds])
    hi = np.log([b[1] for b in bounds])
    mid = 0.5 * (lo + hi)
    pts = [mid]
    # Latin-hypercube style stratification in log space
    if count > 1:
        k = count - 1
        cols = [(rng.permutation(k) + rng.uniform(size=k)) / k for _ in bounds]
        u = np.column_stack(cols)
        pts.extend(lo + u * (hi - lo))
    return np.array(pts)


def multistart_lbfgsb(objective, bounds, starts, tol, maxiter, jac=None):
    """Minimize ``objective`` in log-parameter space from several starts.

    Returns ``(best_x, best_f, results)``; the best point is never worse than
    any start point.
    """
    lb = [(np.log(lo), np.log(hi)) for lo, hi in bounds]
    best_x, best_f = None, np.inf
    results = []
    for x0 in starts:
        f0 = objective(x0)
        if np.isfinite(f0) and f0 < best_f:
            best_x, best_f = x0.copy(), f0
        try:
            res = optimize.minimize(
                objective, x0, jac=jac, method="L-BFGS-B", bounds=lb,
                options={"maxiter": maxiter, "ftol": tol, "gtol": 1e-10},
            )
        except (SpinferError, FloatingPointError) as exc:
            results.append({"start": x0.tolist(), "error": str(exc)})
            continue
        results.append({"start": x0.tolist(), "fun": float(res.fun), "nit": int(res.nit),
                        "message": str(res.message)})
        if np.isfinite(res.fun) and res.fun < best_f:
            best_x, best_f = np.asarray(res.x).copy(), float(res.fun)
    return best_x, best_f, results


def fit_gp(design: ReplicatedDesign, family: str = SQUARED_EXPONENTIAL,
           config: FitConfig | None = None) -> GPFit:
    """Maximum-likelihood GP fit over (lengthscale, scale, noise), multi-start L-BFGS-B."""
    cfg = config or FitConfig()
    family = canonical_family(family)
    if design.n < 2:
        raise OptimizationFailure("GP fit needs at least two unique times")
    theta_b, scale_b, noise_b = default_bounds(design, cfg)
    bounds = [theta_b, scale_b, noise_b]
    scale = abs(gp_loglik(KernelSpec(family, np.sqrt(theta_b[0] * theta_b[1]),
                                     np.sqrt(scale_b[0] * scale_b[1])),
                          np.sqrt(noise_b[0] * noise_b[1]), design)) + 1.0

    def objective(x):
        th, nu, v = np.exp(x)
        try:
            return -gp_loglik(KernelSpec(family, th, nu), v, design) / scale
        except IllConditionedError:
            return np.inf

    rng = np.random.default_rng(cfg.seed)
    starts = _starts(bounds, cfg.starts, rng)
    best_x, best_f, results = multistart_lbfgsb(objective, bounds, starts, cfg.tol, cfg.maxiter)
    if best_x is None:
        raise OptimizationFailure("all GP fit starts failed", diagnostics={"starts": results})
    th, nu, v = np.exp(best_x)
    fit = GPFit(KernelSpec(family, th, nu), float(v), design,
                diagnostics={"starts": results, "bounds": bounds})
    log.debug("GP fit: theta=%.4g nu=%.4g v=%.4g loglik=%.6g", th, nu, v, fit.loglik)
    return fit
