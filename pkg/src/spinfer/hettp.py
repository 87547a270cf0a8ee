"""Heteroskedastic Student-t process.

Observations follow a multivariate Student-t law with ``alpha`` degrees of
freedom and covariance ``K_N = tau^2 C_N + Sigma_N`` (``alpha > 2`` so that
``K_N`` is a covariance). The likelihood and its gradient take ``Sigma`` as
absolute variances. When fitting, ``Sigma = tau^2 Lambda`` with ``log Lambda``
smoothed by the same latent GP as in :mod:`spinfer.hetgp`, which keeps the
fit equivariant to rescaling the data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize
from scipy.special import digamma, gammaln

from .design import ReplicatedDesign
from .errors import IllConditionedError, InvalidDofError, OptimizationFailure
from .gp import FitConfig
from .hetgp import LATENT_BOUNDS, HetState, fit_hetgp, het_bounds
from .kernels import (JITTER, SQUARED_EXPONENTIAL, KernelSpec, canonical_family,
                      correlation_matrix, correlation_matrix_dlengthscale)
from .surrogate import Surrogate, UniqueNSystem

log = logging.getLogger(__name__)

DOF_BOUNDS = (2.01, 1e8)
# dof above this is reported as effectively Gaussian
GAUSSIAN_DOF = 1e4


@dataclass(frozen=True)
class TPState:
    """Hyperparameters of the Student-t likelihood at fixed noise variances."""

    dof: float
    lengthscale: float
    scale: float
    noise: np.ndarray
    family: str = SQUARED_EXPONENTIAL

    def system(self, design) -> UniqueNSystem:
        if not self.dof > 2:
            raise InvalidDofError(f"degrees of freedom must exceed 2, got {self.dof}")
        return UniqueNSystem(KernelSpec(self.family, self.lengthscale, self.scale),
                             design, self.noise)


def _tp_value(dof, N, logdet, beta):
    return (-0.5 * N * math.log((dof - 2.0) * math.pi) - 0.5 * logdet
            + gammaln(0.5 * (dof + N)) - gammaln(0.5 * dof)
            - 0.5 * (dof + N) * math.log1p(beta / (dof - 2.0)))


def hettp_loglik(state: TPState, design: ReplicatedDesign) -> float:
    """Student-t log-likelihood of all observations from unique-n statistics.

    Uses ``beta = sum_i a_i s_i^2 / lambda_i + dbar^T Upsilon^{-1} dbar`` and
    ``log|K_N| = log|Upsilon| + sum_i (a_i - 1) log lambda_i + log a_i`` with
    ``Upsilon = tau^2 C_n + A^{-1} Sigma_n``.
    """
    s = state.system(design)
    return _tp_value(state.dof, design.N, s.logdet_full(), s.quadratic())


def hettp_loglik_grad(state: TPState, design: ReplicatedDesign):
    """Gradient of :func:`hettp_loglik`.

    Returns ``(d_dof, d_lengthscale, d_scale, d_noise)`` with ``d_noise`` a
    vector over unique times. Two groupings differ from a naive reading of
    the published expressions and are fixed by finite differences: the
    ``dof`` derivative carries ``-1/2 log(1 + beta/(dof-2))``, and both data
    terms of the noise derivative share the ``(dof+N)/(2(dof+beta-2))``
    prefactor::

        d/dlambda_i = -(Upsilon^{-1})_ii / (2 a_i) - (a_i - 1) / (2 lambda_i)
                      + (dof+N)/(2(dof+beta-2)) * (a_i s_i^2 / lambda_i^2
                                                  + (Upsilon^{-1} dbar)_i^2 / a_i)
    """
    s = state.system(design)
    a = design.counts
    N = design.N
    dof = state.dof
    tau2 = state.scale
    beta = s.quadratic()
    lam = s.noise
    Uinv = s.inverse()
    w = s.alpha
    C = correlation_matrix(state.family, state.lengthscale, design.times)
    dC = correlation_matrix_dlengthscale(state.family, state.lengthscale, design.times)
    c = (dof + N) / (2.0 * (dof + beta - 2.0))

    d_dof = (-0.5 * N / (dof - 2.0) + 0.5 * digamma(0.5 * (dof + N)) - 0.5 * digamma(0.5 * dof)
             - 0.5 * math.log1p(beta / (dof - 2.0))
             + (dof + N) * beta / (2.0 * (dof - 2.0) ** 2 + 2.0 * beta * (dof - 2.0)))
    d_theta = -0.5 * tau2 * float(np.sum(Uinv * dC)) + c * tau2 * float(w @ dC @ w)
    d_noise = -0.5 * np.diag(Uinv) / a - 0.5 * (a - 1) / lam \
        + c * (a * design.biased_var / lam**2 + w**2 / a)
    # the diagonal nugget JITTER * tau^2 moves with tau^2
    d_scale = -0.5 * float(np.sum(Uinv * C)) + c * float(w @ C @ w) + JITTER * float(np.sum(d_noise))
    return d_dof, d_theta, d_scale, d_noise


@dataclass
class HetTPFit(Surrogate):
    """Fitted heteroskedastic Student-t process."""

    dof: float
    lengthscale: float
    scale: float
    latent_state: HetState
    latent_design: ReplicatedDesign
    design: ReplicatedDesign | None = None
    loglik: float | None = None
    family: str = SQUARED_EXPONENTIAL
    diagnostics: dict = field(default_factory=dict)

    kind = "hettp"

    def __post_init__(self):
        if not self.dof > 2:
            raise InvalidDofError(f"degrees of freedom must exceed 2, got {self.dof}")
        if self.design is None:
            self.design = self.latent_design
        self._latent = self.latent_state.latent(self.latent_design)

    @property
    def kernel(self):
        return KernelSpec(self.family, self.lengthscale, self.scale)

    @property
    def effectively_gaussian(self):
        return self.dof > GAUSSIAN_DOF

    @property
    def beta(self):
        return self.system().quadratic()

    @property
    def dof_posterior(self):
        return self.dof + self.design.N

    def noise_variance(self, t):
        return self.scale * np.exp(self._latent.predict(t))

    def cov_factor(self):
        return (self.dof + self.beta - 2.0) / (self.dof + self.design.N - 2.0)

    def predictive_dof(self):
        return self.dof_posterior

    def tp_state(self):
        return TPState(self.dof, self.lengthscale, self.scale,
                       self.noise_variance(self.design.times), self.family)

    def condition(self, design):
        return replace(self, design=design, diagnostics=self.diagnostics)

    def to_dict(self):
        s = self.latent_state
        return {
            "kind": self.kind, "dof": self.dof, "lengthscale": self.lengthscale,
            "scale": self.scale, "family": self.family,
            "noise_family": s.noise_family, "noise_lengthscale": s.noise_lengthscale,
            "nugget": s.nugget, "latents": np.asarray(s.latents).tolist(),
            "loglik": self.loglik,
            "latent_design": self.latent_design.to_dict(),
            "design": self.design.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        lat = HetState(1.0, d["noise_lengthscale"], d["nugget"], np.asarray(d["latents"], float),
                       d["family"], d["noise_family"])
        return cls(float(d["dof"]), float(d["lengthscale"]), float(d["scale"]), lat,
                   ReplicatedDesign.from_dict(d["latent_design"]),
                   ReplicatedDesign.from_dict(d["design"]), d.get("loglik"), d["family"])


def hettp_predict(fit: HetTPFit, grid, include_noise=False):
    """Student-t predictive law; its ``dof`` field carries ``alpha + N``."""
    return fit.predict(grid, include_noise)


def _objective_parts(x, design, family, noise_family):
    dof = 2.0 + math.exp(x[0])
    theta, tau2, theta_g, g = np.exp(x[1:5])
    lat = HetState(1.0, theta_g, g, np.asarray(x[5:]), family, noise_family).latent(design)
    lam = tau2 * np.exp(lat.log_ratios())
    state = TPState(dof, theta, tau2, lam, family)
    return state, lat, lam


def hettp_joint_objective(x, design, family=SQUARED_EXPONENTIAL, noise_family=SQUARED_EXPONENTIAL):
    """Joint log-likelihood and gradient in the fitting coordinates.

    ``x = [log(dof - 2), log theta, log tau^2, log theta_g, log g, Delta...]``;
    the value adds the latent-process log density to :func:`hettp_loglik`.
    """
    state, lat, lam = _objective_parts(x, design, family, noise_family)
    value = hettp_loglik(state, design) + lat.loglik()
    d_dof, d_theta, d_scale, d_noise = hettp_loglik_grad(state, design)
    dCg = lat.dC()
    gt, gg, gd, Kinv = lat.chain(lam * d_noise, dCg)
    lt, lg, ld = lat.loglik_grad(dCg, Kinv)
    grad = np.concatenate([
        [d_dof * (state.dof - 2.0), d_theta * state.lengthscale,
         d_scale * state.scale + float(lam @ d_noise),
         (gt + lt) * lat.lengthscale, (gg + lg) * lat.nugget],
        gd + ld,
    ])
    return value, grad


def fit_hettp(design: ReplicatedDesign, config: FitConfig | None = None,
              family: str = SQUARED_EXPONENTIAL, noise_family: str | None = None,
              het_start=None) -> HetTPFit:
    """Maximize the joint Student-t likelihood, starting from a hetGP fit."""
    cfg = config or FitConfig()
    family = canonical_family(family)
    noise_family = canonical_family(noise_family or family)
    if design.n < 3:
        raise OptimizationFailure("hetTP fit needs at least three unique times")
    het = het_start or fit_hetgp(design, cfg, family, noise_family)
    theta_b, noise_theta_b, nugget_b = het_bounds(design, cfg)
    m2 = float(np.mean(np.concatenate(design.values) ** 2))
    scale_b = (1e-3 * het.nu, 1e3 * max(het.nu, m2))
    dof_b = (math.log(DOF_BOUNDS[0] - 2.0), math.log(DOF_BOUNDS[1] - 2.0))
    bounds = [dof_b, tuple(np.log(theta_b)), tuple(np.log(scale_b)),
              tuple(np.log(noise_theta_b)), tuple(np.log(nugget_b))] + [LATENT_BOUNDS] * design.n
    norm = float(design.N)

    def objective(x):
        try:
            v, g = hettp_joint_objective(x, design, family, noise_family)
        except (IllConditionedError, FloatingPointError, ValueError, InvalidDofError):
            return np.inf, np.zeros_like(x)
        if not np.isfinite(v):
            return np.inf, np.zeros_like(x)
        return -v / norm, -g / norm

    st = het.state
    delta0 = np.clip(np.asarray(st.latents), *LATENT_BOUNDS)
    base = [math.log(np.clip(st.lengthscale, *theta_b)), math.log(np.clip(het.nu, *scale_b)),
            math.log(np.clip(st.noise_lengthscale, *noise_theta_b)),
            math.log(np.clip(st.nugget, *nugget_b))]
    starts = [np.concatenate([[math.log(dof0 - 2.0)], base, delta0]) for dof0 in (5.0, 50.0)]
    best_x, best_f, results = None, np.inf, []
    for x0 in starts:
        f0 = objective(x0)[0]
        if f0 < best_f:
            best_x, best_f = x0, f0
        res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": cfg.maxiter, "ftol": cfg.tol, "maxfun": 50000})
        results.append({"dof0": 2.0 + math.exp(x0[0]), "fun": float(res.fun), "nit": int(res.nit),
                        "message": str(res.message)})
        if np.isfinite(res.fun) and res.fun < best_f:
            best_x, best_f = np.asarray(res.x), float(res.fun)
    if best_x is None or not np.isfinite(best_f):
        raise OptimizationFailure("hetTP fit failed from every start", diagnostics={"starts": results})
    state, lat, lam = _objective_parts(best_x, design, family, noise_family)
    latent_state = HetState(1.0, lat.lengthscale, lat.nugget, np.asarray(best_x[5:]),
                            family, noise_family)
    fit = HetTPFit(state.dof, state.lengthscale, state.scale, latent_state, design, design,
                   -best_f * norm, family, diagnostics={"starts": results})
    log.debug("hetTP fit: dof=%.4g theta=%.4g tau2=%.4g", fit.dof, fit.lengthscale, fit.scale)
    return fit
