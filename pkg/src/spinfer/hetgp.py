"""Heteroskedastic GP with a latent, GP-smoothed log noise process.

The covariance of the ``N`` observations is ``nu * (C_N + Lambda_N)`` where
``C`` is a correlation matrix and ``Lambda`` holds noise-to-signal ratios.
The log ratios at the unique design times are the smoothed prediction of a
second zero-mean GP fitted to latent values ``Delta``::

    log Lambda_n = C_g (C_g + g A^{-1})^{-1} Delta

``nu`` and the latent process scale are concentrated out of the likelihood.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .design import ReplicatedDesign
from .errors import IllConditionedError, OptimizationFailure, SpinferError
from .gp import FitConfig, data_scales, default_bounds, fit_gp
from .kernels import (JITTER, SQUARED_EXPONENTIAL, KernelSpec, canonical_family,
                      correlation_matrix, correlation_matrix_dlengthscale)
from .surrogate import LOG2PI, Surrogate, UniqueNSystem, cholesky

log = logging.getLogger(__name__)

LATENT_BOUNDS = (-30.0, 12.0)
# lower bound on the latent log-variance scale; see LatentNoise.loglik
LATENT_SCALE_FLOOR = 0.1


class LatentNoise:
    """Zero-mean latent GP over log noise ratios, conditioned on ``Delta``."""

    def __init__(self, family, lengthscale, nugget, times, counts, latents,
                 scale_floor=LATENT_SCALE_FLOOR):
        self.scale_floor = float(scale_floor)
        self.family = family
        self.lengthscale = float(lengthscale)
        self.nugget = float(nugget)
        self.times = np.asarray(times, dtype=float)
        self.counts = np.asarray(counts)
        self.latents = np.asarray(latents, dtype=float)
        self.C = correlation_matrix(family, self.lengthscale, self.times)
        n = self.times.size
        self.Kg = self.C + np.diag(self.nugget / self.counts) + JITTER * np.eye(n)
        self.L = cholesky(self.Kg, "latent noise covariance")
        self.w = linalg.cho_solve((self.L, True), self.latents)

    def log_ratios(self):
        """Smoothed log noise ratios at the design times."""
        return self.C @ self.w

    def smoother(self):
        """``C_g (C_g + g A^{-1})^{-1}``, mapping latents to smoothed log ratios."""
        return self.C @ linalg.cho_solve((self.L, True), np.eye(self.times.size))

    def predict(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return correlation_matrix(self.family, self.lengthscale, t, self.times) @ self.w

    def scale_hat(self):
        """``nu_g = Delta^T (C_g + g A^{-1})^{-1} Delta / n``."""
        return float(self.latents @ self.w) / self.times.size

    def chain(self, u, dC):
        """Pull a gradient ``u`` w.r.t. the smoothed log ratios back to
        (noise lengthscale, nugget, latents); ``dC`` is ``dC_g/dtheta_g``."""
        Kinv = linalg.cho_solve((self.L, True), np.eye(self.times.size))
        M = self.C @ Kinv
        g_delta = Kinv @ (self.C @ u)
        g_theta = float(u @ ((dC @ self.w) - M @ (dC @ self.w)))
        g_nugget = float(-u @ (M @ (self.w / self.counts)))
        return g_theta, g_nugget, g_delta, Kinv

    def loglik_grad(self, dC, Kinv):
        """Gradient of :meth:`loglik` w.r.t. (noise lengthscale, nugget, latents)."""
        n = self.times.size
        q = float(self.latents @ self.w)
        # d loglik / d q, for the quadratic form q = Delta^T Kg^{-1} Delta
        dq = -0.5 * n / q if q >= n * self.scale_floor else -0.5 / self.scale_floor
        g_delta = 2.0 * dq * self.w
        g_theta = -dq * float(self.w @ dC @ self.w) - 0.5 * float(np.sum(Kinv * dC))
        g_nugget = -dq * float(np.sum(self.w**2 / self.counts)) \
            - 0.5 * float(np.sum(np.diag(Kinv) / self.counts))
        return g_theta, g_nugget, g_delta

    def dC(self):
        return correlation_matrix_dlengthscale(self.family, self.lengthscale, self.times)

    def loglik(self):
        """Log density of ``Delta`` under the latent GP, profiled over its scale.

        The scale is profiled over ``[scale_floor, inf)``. Without the floor
        the profile is unbounded as ``Delta -> 0``, which would collapse every
        fit onto the homoskedastic model ``lambda = 1``.
        """
        n = self.times.size
        q = float(self.latents @ self.w)
        logdet = 2.0 * float(np.sum(np.log(np.diag(self.L))))
        if q >= n * self.scale_floor:
            quad = -0.5 * n * math.log(q / n) - 0.5 * n
        else:
            quad = -0.5 * n * math.log(self.scale_floor) - 0.5 * q / self.scale_floor
        return quad - 0.5 * logdet - 0.5 * n * LOG2PI


@dataclass(frozen=True)
class HetState:
    """Free parameters of the heteroskedastic model (scales excluded)."""

    lengthscale: float
    noise_lengthscale: float
    nugget: float
    latents: np.ndarray
    family: str = SQUARED_EXPONENTIAL
    noise_family: str = SQUARED_EXPONENTIAL

    def latent(self, design: ReplicatedDesign) -> LatentNoise:
        return LatentNoise(self.noise_family, self.noise_lengthscale, self.nugget,
                           design.times, design.counts, self.latents)


def _mean_system(state: HetState, design, ratios):
    return UniqueNSystem(KernelSpec(state.family, state.lengthscale, 1.0), design, ratios)


def hetgp_nu_hat(state: HetState, design: ReplicatedDesign, ratios=None) -> float:
    """Concentrated scale ``N^{-1} (sum a_i s_i^2 / lambda_i + dbar^T (C + A^{-1} Lambda)^{-1} dbar)``.

    A single ``1/N`` weights both terms; that is the stationary point of the
    unconcentrated likelihood in ``nu``.
    """
    if ratios is None:
        ratios = np.exp(state.latent(design).log_ratios())
    return _mean_system(state, design, ratios).quadratic() / design.N


def hetgp_joint_loglik(state: HetState, design: ReplicatedDesign, parts=False):
    """Concentrated joint log-likelihood of the mean and latent noise processes.

    The constant is chosen so the mean part is the exact profile Gaussian log
    density of the data and the latent part that of ``Delta``.
    """
    latent = state.latent(design)
    ratios = np.exp(latent.log_ratios())
    sys_ = _mean_system(state, design, ratios)
    N = design.N
    nu = sys_.quadratic() / N
    if not nu > 0:
        raise IllConditionedError("concentrated scale is not positive", smallest_pivot=nu)
    mean_part = -0.5 * N * math.log(nu) - 0.5 * sys_.replicate_terms() \
        - 0.5 * sys_.logdet_upsilon() - 0.5 * N * (LOG2PI + 1.0)
    latent_part = latent.loglik()
    if parts:
        return mean_part, latent_part, nu
    return mean_part + latent_part


def hetgp_joint_loglik_grad(state: HetState, design: ReplicatedDesign):
    """Gradient of :func:`hetgp_joint_loglik` w.r.t.
    ``(lengthscale, noise_lengthscale, nugget, latents...)``."""
    latent = state.latent(design)
    lam = np.exp(latent.log_ratios())
    sys_ = _mean_system(state, design, lam)
    a = design.counts
    N = design.N
    nu = sys_.quadratic() / N
    lam_e = sys_.noise
    Uinv = sys_.inverse()
    alpha = sys_.alpha
    dC = correlation_matrix_dlengthscale(state.family, state.lengthscale, design.times)
    g_theta = 0.5 / nu * float(alpha @ dC @ alpha) - 0.5 * float(np.sum(Uinv * dC))
    d_lam = 0.5 / nu * (a * design.biased_var / lam_e**2 + alpha**2 / a) \
        - 0.5 * (a - 1) / lam_e - 0.5 * np.diag(Uinv) / a
    dCg = latent.dC()
    gt, gg, gd, Kinv = latent.chain(lam * d_lam, dCg)
    lt, lg, ld = latent.loglik_grad(dCg, Kinv)
    return np.concatenate([[g_theta, gt + lt, gg + lg], gd + ld])


@dataclass
class HetGPFit(Surrogate):
    """Fitted heteroskedastic GP.

    ``design`` is the data the predictor conditions on; the latent noise
    process stays attached to the design it was fitted on (``latent_design``),
    so conditioning on augmented data reuses the fitted noise function.
    """

    state: HetState
    nu: float
    latent_design: ReplicatedDesign
    design: ReplicatedDesign | None = None
    loglik: float | None = None
    diagnostics: dict = field(default_factory=dict)

    kind = "hetgp"

    def __post_init__(self):
        if self.design is None:
            self.design = self.latent_design
        self._latent = self.state.latent(self.latent_design)

    @property
    def kernel(self):
        return KernelSpec(self.state.family, self.state.lengthscale, self.nu)

    @property
    def latent_scale(self):
        return self._latent.scale_hat()

    def log_ratios(self):
        return self._latent.log_ratios()

    def noise_variance(self, t):
        return self.nu * np.exp(self._latent.predict(t))

    def condition(self, design):
        return replace(self, design=design, diagnostics=self.diagnostics)

    def to_dict(self):
        s = self.state
        return {
            "kind": self.kind,
            "family": s.family, "noise_family": s.noise_family,
            "lengthscale": s.lengthscale, "noise_lengthscale": s.noise_lengthscale,
            "nugget": s.nugget, "latents": np.asarray(s.latents).tolist(),
            "nu": self.nu, "loglik": self.loglik,
            "latent_design": self.latent_design.to_dict(),
            "design": self.design.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        state = HetState(d["lengthscale"], d["noise_lengthscale"], d["nugget"],
                         np.asarray(d["latents"], float), d["family"], d["noise_family"])
        return cls(state, float(d["nu"]), ReplicatedDesign.from_dict(d["latent_design"]),
                   ReplicatedDesign.from_dict(d["design"]), d.get("loglik"))


def hetgp_predict(fit: HetGPFit, grid):
    """Noise-free predictive law plus pointwise noise ``nu * lambda(t)``."""
    return fit.predict(grid, include_noise=False)


def hetgp_noise_predict(fit: HetGPFit, t):
    return fit.noise_variance(t)


def latent_init(design: ReplicatedDesign, nu0: float, v0: float):
    """Initial latents ``log(max(sigma_hat_i^2, 1e-6 var(d)) / nu0)``.

    Locations without replicates fall back to the homoskedastic noise ``v0``.
    """
    var, _ = data_scales(design)
    s2 = np.where(design.counts > 1, np.nan_to_num(design.unbiased_var, nan=v0), v0)
    return np.log(np.maximum(s2, 1e-6 * var) / nu0)


def het_bounds(design, cfg: FitConfig):
    theta_b, _, _ = default_bounds(design, cfg)
    span = float(design.times[-1] - design.times[0])
    noise_theta_b = (theta_b[0], 2.0 * span)
    nugget_b = (1e-3, 1e2)
    return theta_b, noise_theta_b, nugget_b


def fit_hetgp(design: ReplicatedDesign, config: FitConfig | None = None,
              family: str = SQUARED_EXPONENTIAL, noise_family: str | None = None) -> HetGPFit:
    """Maximize the joint likelihood over (lengthscales, nugget, latents)."""
    cfg = config or FitConfig()
    family = canonical_family(family)
    noise_family = canonical_family(noise_family or family)
    if design.n < 3:
        raise OptimizationFailure("hetGP fit needs at least three unique times")
    pre = fit_gp(design, family, cfg)
    theta_b, noise_theta_b, nugget_b = het_bounds(design, cfg)
    delta0 = np.clip(latent_init(design, pre.kernel.scale, pre.noise), *LATENT_BOUNDS)
    n = design.n
    bounds = [tuple(np.log(theta_b)), tuple(np.log(noise_theta_b)), tuple(np.log(nugget_b))] \
        + [LATENT_BOUNDS] * n
    norm = float(design.N)

    def unpack(x):
        return HetState(math.exp(x[0]), math.exp(x[1]), math.exp(x[2]), np.asarray(x[3:]),
                        family, noise_family)

    def objective(x):
        state = unpack(x)
        try:
            f = -hetgp_joint_loglik(state, design) / norm
            g = -hetgp_joint_loglik_grad(state, design) / norm
        except (IllConditionedError, FloatingPointError, ValueError):
            return np.inf, np.zeros_like(x)
        g[:3] *= np.exp(x[:3])
        return f, g

    th0 = np.clip(pre.kernel.lengthscale, *theta_b)
    starts = []
    for thg_mult, g0 in ((2.0, 0.1), (1.0, 1.0), (4.0, 0.01 * 10)):
        thg = np.clip(thg_mult * th0, *noise_theta_b)
        x0 = np.concatenate([[math.log(th0), math.log(thg), math.log(np.clip(g0, *nugget_b))], delta0])
        starts.append(x0)
    best_x, best_f, results = None, np.inf, []
    for x0 in starts[: max(1, min(cfg.starts, len(starts)))]:
        f0 = objective(x0)[0]
        if f0 < best_f:
            best_x, best_f = x0, f0
        res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": cfg.maxiter, "ftol": cfg.tol, "maxfun": 50000})
        results.append({"fun": float(res.fun), "nit": int(res.nit), "message": str(res.message)})
        if np.isfinite(res.fun) and res.fun < best_f:
            best_x, best_f = np.asarray(res.x), float(res.fun)
    if best_x is None or not np.isfinite(best_f):
        raise OptimizationFailure("hetGP fit failed from every start",
                                  best_state=None, diagnostics={"starts": results})
    state = unpack(best_x)
    mean_part, latent_part, nu = hetgp_joint_loglik(state, design, parts=True)
    fit = HetGPFit(state, nu, design, design, mean_part + latent_part,
                   diagnostics={"starts": results, "homoskedastic_prefit": pre.to_dict()})
    log.debug("hetGP fit: theta=%.4g theta_g=%.4g g=%.4g nu=%.4g", state.lengthscale,
              state.noise_lengthscale, state.nugget, nu)
    return fit
