"""End-to-end steps: fit surrogates, draw (censoring-aware) paths, invert them."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .censoring import CensoringSpec, augment_censored
from .design import ReplicatedDesign
from .errors import SchemaError, SpinferError
from .gp import FitConfig, GPFit, fit_gp
from .hetgp import HetGPFit, fit_hetgp
from .hettp import HetTPFit, fit_hettp
from .kernels import canonical_family
from .ode import ODEModel, integrate_nodes, refined_nodes
from .sampler import SamplePath, draw, path_rng, sample_paths
from .shooting import OptimizerConfig, PosteriorEnsemble, default_grid, estimate_ensemble
from .surrogate import PredictiveDistribution, jittered_cholesky

log = logging.getLogger(__name__)

SURROGATES = {"gp": GPFit, "hetgp": HetGPFit, "hettp": HetTPFit}


def fit_surrogate(design: ReplicatedDesign, kind="gp", family="se", config: FitConfig | None = None):
    family = canonical_family(family)
    if kind == "gp":
        return fit_gp(design, family, config)
    if kind == "hetgp":
        return fit_hetgp(design, config, family)
    if kind == "hettp":
        return fit_hettp(design, config, family)
    raise SpinferError(f"unknown surrogate {kind!r}; choose from {sorted(SURROGATES)}")


def fit_from_dict(d):
    try:
        cls = SURROGATES[d["kind"]]
    except KeyError:
        raise SchemaError(f"unknown fit kind {d.get('kind')!r}") from None
    return cls.from_dict(d)


@dataclass
class SurrogateBundle:
    """One fitted surrogate per observed output, plus optional censoring."""

    model: str
    fits: list
    censoring: CensoringSpec | None = None
    transform: str | None = None

    def to_dict(self):
        return {"model": self.model, "transform": self.transform,
                "censoring": None if self.censoring is None else self.censoring.to_dict(),
                "fits": [f.to_dict() for f in self.fits]}

    @classmethod
    def from_dict(cls, d):
        for key in ("model", "fits"):
            if key not in d:
                raise SchemaError(f"fit artifact lacks {key!r}")
        cens = d.get("censoring")
        return cls(d["model"], [fit_from_dict(f) for f in d["fits"]],
                   None if cens is None else CensoringSpec.from_dict(cens), d.get("transform"))


def censored_paths(fit, design, spec: CensoringSpec, grid, count, seed, start=0):
    """Paths each conditioned on its own augmentation of the censored data.

    Every augmentation has the same times, counts and noise, so the
    conditional covariance is shared (up to the Student-t scalar factor)
    and factorized once.
    """
    grid = np.asarray(grid, float)
    noise = np.asarray(fit.noise_variance(grid), float) * np.ones_like(grid)
    base, base_L, key = None, None, None
    out = []
    for j in range(start, start + count):
        rng = path_rng(seed, j)
        aug = augment_censored(fit, design, spec, rng)
        cond = fit.condition(aug.design)
        sys_ = cond.system()
        k = (aug.design.times.tobytes(), aug.design.counts.tobytes())
        if k != key:
            key = k
            base = sys_.cov(grid)
            base_L = jittered_cholesky(base)[0]
        c = cond.cov_factor()
        pred = PredictiveDistribution(grid, sys_.mean(grid), c * base, noise, cond.predictive_dof(),
                                      {False: np.sqrt(c) * base_L})
        out.append(SamplePath(grid, draw(pred, rng)[None, :], seed, j, augmentation_id=j))
    return out


def generate_paths(bundle: SurrogateBundle, grid, count, seed, start=0):
    if bundle.censoring is not None and bundle.censoring.censored:
        if len(bundle.fits) != 1:
            raise SpinferError("censoring is supported for single-output models only")
        fit = bundle.fits[0]
        return censored_paths(fit, fit.design, bundle.censoring, grid, count, seed, start)
    preds = [f.predict(np.asarray(grid, float)) for f in bundle.fits]
    return sample_paths(preds, count, seed, noise_free=True, start=start)


def run_ensemble(bundle: SurrogateBundle, model: ODEModel, count, seed, opt: OptimizerConfig | None = None,
                 workers=1, grid=None) -> tuple[PosteriorEnsemble, list]:
    grid = default_grid(model) if grid is None else grid
    paths = generate_paths(bundle, grid, count, seed)
    return estimate_ensemble(model, paths, opt, workers=workers), paths


def state_trajectories(model: ODEModel, estimates, grid, step=None):
    """States of every estimate at ``grid`` times, shape ``(J, len(grid), state_dim)``."""
    nodes, pts, idx = refined_nodes(grid, model.t0, step or model.default_step)
    at = idx[np.searchsorted(pts, np.asarray(grid, float))]
    out = []
    for p in np.atleast_2d(estimates):
        out.append(integrate_nodes(model, p, model.initial_state(p), nodes)[at])
    return np.array(out)


def is_unimodal(values) -> bool:
    """True when the series rises to a single interior maximum and then falls."""
    d = np.diff(np.asarray(values, float))
    s = np.sign(d[d != 0])
    if s.size == 0:
        return False
    changes = np.count_nonzero(np.diff(s))
    return bool(changes == 1 and s[0] > 0 and s[-1] < 0)
