"""Random-walk Metropolis over ODE parameters, the MCMC comparison baseline.

The target is a uniform box prior times ``exp(-1/2 ||s(y(p)) - d||^2)`` over
all replicate values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .design import ReplicatedDesign
from .errors import BlowUpError, SpinferError
from .ode import INFLUENZA_TIV, ODEModel, integrate_nodes, refined_nodes
from .shooting import default_p0

log = logging.getLogger(__name__)

INFLUENZA_BOX = 1e15
MIN_BURN_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class McmcConfig:
    prior_lo: tuple
    prior_hi: tuple
    p_start: tuple
    proposal_sd: float = math.sqrt(0.2)
    n_burn: int = 100_000
    n_keep: int = 100_000
    seed: int = 0

    def __post_init__(self):
        lo, hi, p = (np.asarray(x, float) for x in (self.prior_lo, self.prior_hi, self.p_start))
        if not (lo.shape == hi.shape == p.shape):
            raise SpinferError("prior bounds and start must have equal length")
        if np.any(lo >= hi):
            raise SpinferError("prior_lo must be below prior_hi")
        if np.any(p < lo) or np.any(p > hi):
            raise SpinferError("p_start outside the prior box")
        if self.n_burn < 0 or self.n_keep < 1:
            raise SpinferError("need n_burn >= 0 and n_keep >= 1")
        if self.proposal_sd < 0:
            raise SpinferError("proposal_sd must be nonnegative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("prior_lo", "prior_hi", "p_start"):
            d[k] = tuple(float(x) for x in d[k])
        return cls(**d)


def default_mcmc_config(model: ODEModel, **overrides) -> McmcConfig:
    k = model.n_params
    if model.name == INFLUENZA_TIV:
        box = (tuple([-INFLUENZA_BOX] * k), tuple([INFLUENZA_BOX] * k))
    else:
        box = (tuple([0.0] * k), tuple([10.0] * k))
    base = {"prior_lo": box[0], "prior_hi": box[1], "p_start": tuple(default_p0(model))}
    base.update(overrides)
    return McmcConfig(**base)


class MisfitTarget:
    """``-1/2`` sum of squared residuals against replicated data, per output.

    Uses the per-time sufficient statistics, so the sum over replicates costs
    one model evaluation per unique time.
    """

    def __init__(self, model: ODEModel, designs, step=None):
        if isinstance(designs, ReplicatedDesign):
            designs = [designs]
        self.model = model
        self.designs = list(designs)
        if len(self.designs) != model.outputs:
            raise SpinferError(f"{model.name} observes {model.outputs} output(s), got {len(self.designs)} designs")
        times = np.unique(np.concatenate([d.times for d in self.designs]))
        self.nodes, pts, idx = refined_nodes(times, model.t0, step or model.default_step)
        self.at = [idx[np.searchsorted(pts, d.times)] for d in self.designs]
        self.within = sum(float(np.sum(d.counts * d.biased_var)) for d in self.designs)

    def __call__(self, p) -> float:
        p = np.asarray(p, float)
        try:
            states = integrate_nodes(self.model, p, self.model.initial_state(p), self.nodes)
        except BlowUpError:
            return -math.inf
        obs = self.model.observe_states(states)
        total = self.within
        for k, d in enumerate(self.designs):
            r = obs[k, self.at[k]] - d.means
            total += float(np.sum(d.counts * r * r))
        return -0.5 * total if math.isfinite(total) else -math.inf


def log_posterior(model: ODEModel, data, p, config: McmcConfig, target=None) -> float:
    """Unnormalized log posterior; ``-inf`` outside the prior box or on blow-up."""
    p = np.asarray(p, float)
    if np.any(p < config.prior_lo) or np.any(p > config.prior_hi):
        return -math.inf
    return (target or MisfitTarget(model, data))(p)


@dataclass
class McmcResult:
    chain: np.ndarray
    acceptance_rate: float
    burn_acceptance_rate: float
    log_post: np.ndarray
    warnings: list = field(default_factory=list)


def metropolis(logpdf, p_start, lo, hi, proposal_sd, n_burn, n_keep, rng) -> McmcResult:
    """Isotropic Gaussian random-walk Metropolis restricted to a box."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    x = np.asarray(p_start, float).copy()
    lp = logpdf(x)
    d = x.size
    total = n_burn + n_keep
    chain = np.empty((n_keep, d))
    lps = np.empty(n_keep)
    accepted = np.zeros(total, bool)
    for i in range(total):
        y = x + proposal_sd * rng.standard_normal(d)
        log_u = math.log(rng.random() or 5e-324)
        if np.all(y >= lo) and np.all(y <= hi):
            ly = logpdf(y)
            if log_u < ly - lp:
                x, lp = y, ly
                accepted[i] = True
        if i >= n_burn:
            chain[i - n_burn] = x
            lps[i - n_burn] = lp
    burn = float(accepted[:n_burn].mean()) if n_burn else math.nan
    res = McmcResult(chain, float(accepted[n_burn:].mean()), burn, lps)
    if n_burn and burn < MIN_BURN_ACCEPTANCE:
        res.warnings.append(f"burn-in acceptance {burn:.2e} below {MIN_BURN_ACCEPTANCE:g}: chain may not mix")
        log.warning(res.warnings[-1])
    return res


def metropolis_run(model: ODEModel, data, config: McmcConfig, rng=None) -> McmcResult:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    target = MisfitTarget(model, data)
    if not math.isfinite(target(config.p_start)):
        raise SpinferError("log posterior is -inf at p_start")
    return metropolis(target, config.p_start, config.prior_lo, config.prior_hi,
                      config.proposal_sd, config.n_burn, config.n_keep, rng)
