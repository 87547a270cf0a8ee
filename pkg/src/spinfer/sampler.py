"""Posterior predictive sample paths from fitted surrogates.

Every path owns a random stream derived from ``(seed, path index)``, so a
path does not depend on how many others are drawn or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpinferError
from .surrogate import PredictiveDistribution


@dataclass(frozen=True)
class SamplePath:
    """One draw ``g_j`` on ``grid``; ``values`` has one row per observed output."""

    grid: np.ndarray
    values: np.ndarray
    seed: int
    index: int
    augmentation_id: int = -1

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, float))
        object.__setattr__(self, "values", v)
        if v.shape[1] != len(self.grid):
            raise SpinferError("path length differs from its grid")
        if not np.all(np.isfinite(v)):
            raise SpinferError(f"non-finite values in path {self.index}")


def path_rng(seed: int, index: int, *stream) -> np.random.Generator:
    """Independent generator for path ``index`` (and optional sub-stream keys)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), *stream)))


def draw(pred: PredictiveDistribution, rng, noise_free=True, size=None):
    """Draw from ``pred`` using ``rng``; ``size`` adds a leading batch axis."""
    L = pred.factor(include_noise=not noise_free)
    G = pred.grid.size
    shape = (G,) if size is None else (size, G)
    z = rng.standard_normal(shape)
    if pred.dof is not None:
        dof = pred.dof
        w = rng.chisquare(dof, size=None if size is None else (size, 1))
        # scale mixture with shape cov * (dof - 2) / dof has covariance cov
        z = z * np.sqrt((dof - 2.0) / w)
    return pred.mean + z @ L.T


def sample_paths(preds, count: int, seed: int, noise_free=True, start=0):
    """Draw ``count`` paths with indices ``start .. start + count - 1``.

    Parameters
    ----------
    preds : PredictiveDistribution or sequence of them
        One predictive law per observed output, all on the same grid. Output
        ``k`` of path ``j`` uses the stream ``(seed, j, k)``.
    count : int
        Number of paths ``J``.
    seed : int
        Master seed.
    noise_free : bool
        Leave out the pointwise observation noise.
    """
    if isinstance(preds, PredictiveDistribution):
        preds = [preds]
    if count < 1:
        raise SpinferError("need at least one path")
    grid = preds[0].grid
    if any(p.grid.shape != grid.shape or not np.array_equal(p.grid, grid) for p in preds):
        raise SpinferError("all outputs must share one grid")
    for p in preds:
        p.factor(include_noise=not noise_free)
    out = []
    for j in range(start, start + count):
        vals = np.vstack([draw(p, path_rng(seed, j, k), noise_free) for k, p in enumerate(preds)])
        out.append(SamplePath(grid, vals, seed, j))
    return out


def paths_to_array(paths) -> np.ndarray:
    """Stack to ``(J, outputs, G)``."""
    return np.stack([p.values for p in paths])
