"""Unique-n conditioning shared by the GP, hetGP and hetTP surrogates.

All three surrogates reduce to the same computation: a zero-mean process
with covariance ``k(t, t')`` plus independent per-observation noise ``v_i``
at the unique design times. With ``a_i`` replicates at ``t_i`` the averaged
outputs see noise ``v_i / a_i``, which is what :class:`UniqueNSystem`
factorizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .design import ReplicatedDesign
from .errors import IllConditionedError
from .kernels import JITTER, KernelSpec, kernel_matrix

LOG2PI = math.log(2.0 * math.pi)


def cholesky(matrix, what="matrix"):
    """Lower Cholesky factor, raising :class:`IllConditionedError` on failure."""
    try:
        return linalg.cholesky(matrix, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        pivot = float(np.min(np.linalg.eigvalsh(matrix))) if np.all(np.isfinite(matrix)) else float("nan")
        raise IllConditionedError(
            f"{what} is not positive definite (smallest eigenvalue {pivot:.3e})",
            smallest_pivot=pivot,
        ) from None


def jittered_cholesky(cov, start=1e-8, stop=1e-4):
    """Cholesky of a PSD matrix, escalating a relative diagonal jitter.

    Jitter is relative to the mean diagonal and grows by a factor of ten from
    ``start`` to ``stop``. Returns ``(L, jitter_used)``.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    level = float(np.mean(np.diag(cov))) if n else 0.0
    if level <= 0.0:
        if np.allclose(cov, 0.0):
            return np.zeros_like(cov), 0.0
        level = float(np.max(np.abs(cov)))
    jitter = start
    last = None
    while jitter <= stop * (1 + 1e-9):
        try:
            return linalg.cholesky(cov + jitter * level * np.eye(n), lower=True), jitter
        except linalg.LinAlgError as exc:
            last = exc
            jitter *= 10.0
    pivot = float(np.min(np.linalg.eigvalsh(cov)))
    raise IllConditionedError(
        f"covariance not factorizable with jitter up to {stop:g} (smallest eigenvalue {pivot:.3e})",
        smallest_pivot=pivot,
    ) from last


@dataclass
class PredictiveDistribution:
    """Joint predictive law on a grid.

    ``cov`` is the noise-free covariance; ``noise_var`` holds the pointwise
    observation noise, added to the diagonal by :meth:`covariance` on request.
    ``dof`` is ``None`` for Gaussian predictions and ``alpha_N`` for
    Student-t ones (in which case ``cov`` is a covariance, not a shape).
    """

    grid: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    noise_var: np.ndarray
    dof: float | None = None
    _factor: dict = field(default_factory=dict, repr=False, compare=False)

    def covariance(self, include_noise=False):
        if include_noise:
            return self.cov + np.diag(self.noise_var)
        return self.cov

    def variance(self, include_noise=False):
        v = np.clip(np.diag(self.cov), 0.0, None)
        return v + self.noise_var if include_noise else v

    def factor(self, include_noise=False):
        """Cached jittered Cholesky factor of :meth:`covariance`."""
        key = bool(include_noise)
        if key not in self._factor:
            self._factor[key] = jittered_cholesky(self.covariance(include_noise))[0]
        return self._factor[key]

    def interval(self, level=0.95, include_noise=False):
        from scipy import stats

        q = 0.5 + level / 2.0
        sd = np.sqrt(self.variance(include_noise))
        if self.dof is None:
            z = stats.norm.ppf(q)
        else:
            # scale the t quantile so the band has the stated variance
            z = stats.t.ppf(q, self.dof) * math.sqrt((self.dof - 2.0) / self.dof)
        return self.mean - z * sd, self.mean + z * sd


class UniqueNSystem:
    """Factorized ``Upsilon = K(t, t) + diag(v / a)`` for a replicated design.

    ``noise`` is the per-observation noise variance at each unique time; a
    nugget of ``JITTER * scale`` is added to it so that the reduced and
    full-N formulations describe the same model exactly.
    """

    def __init__(self, kernel: KernelSpec, design: ReplicatedDesign, noise):
        self.kernel = kernel
        self.design = design
        noise = np.broadcast_to(np.asarray(noise, dtype=float), design.times.shape)
        self.noise = noise + JITTER * kernel.scale
        a = design.counts
        self.K = kernel_matrix(kernel, design.times)
        self.upsilon = self.K + np.diag(self.noise / a)
        self.L = cholesky(self.upsilon, "unique-n covariance")
        self.alpha = linalg.cho_solve((self.L, True), design.means)

    def solve(self, b):
        return linalg.cho_solve((self.L, True), b)

    def inverse(self):
        return self.solve(np.eye(self.design.n))

    def logdet_upsilon(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def replicate_terms(self):
        """``sum_i (a_i - 1) log v_i + log a_i``, the rest of ``log|K_N|``."""
        a = self.design.counts
        return float(np.sum((a - 1) * np.log(self.noise) + np.log(a)))

    def logdet_full(self):
        return self.logdet_upsilon() + self.replicate_terms()

    def within_term(self):
        """``sum_i a_i s_i^2 / v_i``."""
        d = self.design
        return float(np.sum(d.counts * d.biased_var / self.noise))

    def quadratic(self):
        """``d^T K_N^{-1} d`` from sufficient statistics."""
        return self.within_term() + float(self.design.means @ self.alpha)

    def gaussian_loglik(self):
        N = self.design.N
        return -0.5 * (N * LOG2PI + self.logdet_full() + self.quadratic())

    def cross(self, grid):
        return kernel_matrix(self.kernel, grid, self.design.times)

    def mean(self, grid):
        return self.cross(grid) @ self.alpha

    def cov(self, grid, grid2=None):
        g2 = grid if grid2 is None else grid2
        kx = self.cross(grid)
        kx2 = kx if grid2 is None else self.cross(g2)
        w = linalg.solve_triangular(self.L, kx.T, lower=True)
        w2 = w if grid2 is None else linalg.solve_triangular(self.L, kx2.T, lower=True)
        out = kernel_matrix(self.kernel, grid, g2) - w.T @ w2
        if grid2 is None:
            out = 0.5 * (out + out.T)
        return out


class Surrogate:
    """Common interface of fitted surrogates.

    Subclasses provide ``kernel``, ``design``, :meth:`noise_variance` and
    :meth:`condition`; prediction and sampling work off :meth:`system`.
    """

    kind = "abstract"

    def noise_variance(self, t):
        raise NotImplementedError

    def condition(self, design):
        raise NotImplementedError

    def system(self) -> UniqueNSystem:
        sys_ = self.__dict__.get("_system")
        if sys_ is None:
            sys_ = UniqueNSystem(self.kernel, self.design, self.noise_variance(self.design.times))
            self.__dict__["_system"] = sys_
        return sys_

    def cov_factor(self):
        """Multiplier applied to the conditional kernel covariance (1 for Gaussians)."""
        return 1.0

    def predictive_dof(self):
        return None

    def predict(self, grid, include_noise=False) -> PredictiveDistribution:
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        noise = np.asarray(self.noise_variance(grid), dtype=float) * np.ones_like(grid)
        if self.design is None:
            mean = np.zeros_like(grid)
            cov = kernel_matrix(self.kernel, grid)
        else:
            s = self.system()
            mean = s.mean(grid)
            cov = self.cov_factor() * s.cov(grid)
        pred = PredictiveDistribution(grid, mean, cov, noise, self.predictive_dof())
        if include_noise:
            pred.cov = pred.cov + np.diag(noise)
            pred.noise_var = np.zeros_like(noise)
        return pred
