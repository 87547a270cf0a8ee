"""Imputation of observations censored below a detection limit.

Censored times are visited in order. At each one a noise-free predictive path
is drawn until it decreases monotonically over the censored times reached so
far, the censored replicates are replaced by noise draws centered on the path
and truncated below the limit, and the imputed values join the conditioning
data for the next time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .design import ReplicatedDesign, build_design
from .errors import DegenerateTruncationError, RejectionExhaustedError, SpinferError
from .sampler import draw

LOD_THRESHOLD = math.log10(201.0)
DECREASING_RIGHT = "decreasing-right"
DECREASING_LEFT = "decreasing-left"


@dataclass(frozen=True)
class CensoringSpec:
    """Where and how data are censored.

    ``censored`` lists ``(time, replicate_count)`` pairs. ``region``, when
    given, restricts the monotone constraint to censored times inside the
    closed interval; censored times outside it are still imputed but only
    the truncation applies to them.
    """

    censored: tuple = ()
    threshold: float = LOD_THRESHOLD
    direction: str = DECREASING_RIGHT
    max_attempts: int = 10_000
    region: tuple | None = None

    def __post_init__(self):
        pairs = tuple(sorted((float(t), int(c)) for t, c in self.censored))
        object.__setattr__(self, "censored", pairs)
        if math.isnan(self.threshold):
            raise SpinferError("censoring threshold must not be NaN")
        if any(c < 1 for _, c in pairs):
            raise SpinferError("censored replicate counts must be >= 1")
        if len({t for t, _ in pairs}) != len(pairs):
            raise SpinferError("censored times must be distinct")
        if self.direction not in (DECREASING_RIGHT, DECREASING_LEFT):
            raise SpinferError(f"unknown monotone direction {self.direction!r}")
        if self.max_attempts < 1:
            raise SpinferError("max_attempts must be positive")

    @property
    def times(self):
        return np.array([t for t, _ in self.censored])

    def in_region(self, t):
        if self.region is None:
            return True
        return self.region[0] <= t <= self.region[1]

    def to_dict(self):
        return {"censored": [list(p) for p in self.censored], "threshold": self.threshold,
                "direction": self.direction, "max_attempts": self.max_attempts,
                "region": None if self.region is None else list(self.region)}

    @classmethod
    def from_dict(cls, d):
        region = d.get("region")
        return cls(tuple(tuple(p) for p in d.get("censored", ())), float(d.get("threshold", LOD_THRESHOLD)),
                   d.get("direction", DECREASING_RIGHT), int(d.get("max_attempts", 10_000)),
                   None if region is None else tuple(region))


def _is_monotone(values, direction):
    steps = np.diff(values)
    return bool(np.all(steps < 0)) if direction == DECREASING_RIGHT else bool(np.all(steps > 0))


def draw_monotone_path(fit, grid, constraint, rng, max_attempts=10_000, direction=DECREASING_RIGHT):
    """Noise-free predictive draw on ``grid`` monotone over the ``constraint`` indices.

    Every consecutive pair of constrained indices (in grid order) is checked.
    """
    grid = np.asarray(grid, float)
    constraint = np.sort(np.asarray(constraint, dtype=int))
    pred = fit.predict(grid)
    for attempt in range(1, max_attempts + 1):
        path = draw(pred, rng, noise_free=True)
        if constraint.size < 2 or _is_monotone(path[constraint], direction):
            return path, attempt
    raise RejectionExhaustedError(
        f"no monotone path in {max_attempts} attempts over t={grid[constraint].tolist()}",
        acceptance_rate=0.0,
    )


def noise_law(fit, t):
    """Frozen scipy distribution of one observation's noise at ``t`` (zero centered)."""
    var = float(np.asarray(fit.noise_variance(np.atleast_1d(t)))[0])
    sd = math.sqrt(max(var, 0.0))
    dof = fit.predictive_dof()
    if dof is None:
        return stats.norm(0.0, sd)
    return stats.t(dof, 0.0, sd)


def draw_truncated_noise(fit, t, threshold, count, rng, center=0.0):
    """``count`` draws of ``center + noise`` conditioned to lie strictly below ``threshold``.

    Inverse-CDF sampling, so it terminates whatever the truncated mass.
    """
    if count < 1:
        raise SpinferError("count must be >= 1")
    b = threshold - center
    if not float(np.asarray(fit.noise_variance(np.atleast_1d(t)))[0]) > 0.0:
        if b > 0:
            return np.full(count, float(center))
        raise DegenerateTruncationError(f"zero-noise center {center} not below threshold {threshold}")
    law = noise_law(fit, t)
    mass = float(law.cdf(b))
    if mass < 1e-12:
        raise DegenerateTruncationError(
            f"truncated mass {mass:.3e} below 1e-12 (center {center:.4g}, threshold {threshold:.4g})"
        )
    u = mass * rng.random(count)
    u = np.maximum(u, np.finfo(float).tiny)
    x = center + law.ppf(u)
    if math.isfinite(threshold):
        x = np.minimum(x, np.nextafter(threshold, -np.inf))
    return x


@dataclass
class Augmentation:
    """Result of one imputation pass."""

    design: ReplicatedDesign
    imputed: dict = field(default_factory=dict)
    paths: list = field(default_factory=list)
    attempts: list = field(default_factory=list)


def augment_censored(fit, design: ReplicatedDesign | None, spec: CensoringSpec, rng) -> Augmentation:
    """Impute every censored replicate; see the module docstring.

    ``fit`` carries hyperparameters estimated on the uncensored ``design``;
    it is re-conditioned (not refitted) on the growing data at each step.
    """
    if not spec.censored:
        return Augmentation(design)
    order = spec.censored if spec.direction == DECREASING_RIGHT else spec.censored[::-1]
    obs_t, obs_v = design.observations() if design is not None else (np.empty(0), np.empty(0))
    obs_t, obs_v = list(obs_t), list(obs_v)
    current = design
    aug = Augmentation(design)
    done: list = []
    for t, count in order:
        cond = fit.condition(current)
        region = [s for s in done if spec.in_region(s)] + ([t] if spec.in_region(t) else [])
        grid = np.array(sorted(set(region) | {t}))
        idx = np.flatnonzero(np.isin(grid, region))
        path, attempts = draw_monotone_path(cond, grid, idx, rng, spec.max_attempts, spec.direction)
        center = float(path[np.searchsorted(grid, t)])
        vals = draw_truncated_noise(cond, t, spec.threshold, count, rng, center)
        aug.imputed[t] = vals
        aug.paths.append((grid, path))
        aug.attempts.append(attempts)
        obs_t.extend([t] * count)
        obs_v.extend(vals.tolist())
        current = build_design(zip(obs_t, obs_v))
        done.append(t)
    aug.design = current
    return aug
