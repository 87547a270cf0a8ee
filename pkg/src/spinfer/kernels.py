"""Stationary covariance kernels on scalar inputs.

Every kernel is written as ``k(t, t') = scale * c((t - t') / lengthscale)``
with a correlation function ``c`` satisfying ``c(0) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyInputError, InvalidHyperparameterError

SQUARED_EXPONENTIAL = "squared-exponential"
MATERN52 = "matern-5/2"
FAMILIES = (SQUARED_EXPONENTIAL, MATERN52)

_ALIASES = {
    "se": SQUARED_EXPONENTIAL,
    "gauss": SQUARED_EXPONENTIAL,
    "gaussian": SQUARED_EXPONENTIAL,
    "squared-exponential": SQUARED_EXPONENTIAL,
    "matern52": MATERN52,
    "matern5_2": MATERN52,
    "matern-5/2": MATERN52,
}

# relative diagonal nugget, in units of the kernel scale
JITTER = 1e-8


def canonical_family(family: str) -> str:
    try:
        return _ALIASES[family.lower()]
    except KeyError:
        raise InvalidHyperparameterError(
            f"unknown kernel family {family!r}; expected one of {FAMILIES}"
        ) from None


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its two hyperparameters.

    Parameters
    ----------
    family : str
        ``"squared-exponential"`` or ``"matern-5/2"``.
    lengthscale : float
        Positive lengthscale in time units.
    scale : float
        Positive output variance (``nu``, or ``tau^2`` for Student-t processes).
    """

    family: str = SQUARED_EXPONENTIAL
    lengthscale: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise InvalidHyperparameterError(
                f"lengthscale must be positive, got {self.lengthscale}"
            )
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidHyperparameterError(f"scale must be positive, got {self.scale}")

    def with_(self, **changes) -> "KernelSpec":
        return replace(self, **changes)

    def to_dict(self):
        return {"family": self.family, "lengthscale": self.lengthscale, "scale": self.scale}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], float(d["lengthscale"]), float(d["scale"]))


def correlation(family: str, h):
    """Correlation ``c(h)`` for scaled lag ``h = (t - t') / lengthscale``."""
    h = np.abs(np.asarray(h, dtype=float))
    if family == SQUARED_EXPONENTIAL:
        return np.exp(-h * h)
    if family == MATERN52:
        r = math.sqrt(5.0) * h
        return (1.0 + r + r * r / 3.0) * np.exp(-r)
    canon = canonical_family(family)
    if canon != family:
        return correlation(canon, h)
    raise InvalidHyperparameterError(f"unknown kernel family {family!r}")


def correlation_dlengthscale(family: str, lag, lengthscale: float):
    """Derivative of ``c(lag / lengthscale)`` with respect to the lengthscale."""
    lag = np.abs(np.asarray(lag, dtype=float))
    if family == SQUARED_EXPONENTIAL:
        h = lag / lengthscale
        return np.exp(-h * h) * 2.0 * h * h / lengthscale
    if family == MATERN52:
        r = math.sqrt(5.0) * lag / lengthscale
        return r * r * (1.0 + r) * np.exp(-r) / (3.0 * lengthscale)
    canon = canonical_family(family)
    if canon != family:
        return correlation_dlengthscale(canon, lag, lengthscale)
    raise InvalidHyperparameterError(f"unknown kernel family {family!r}")


def kernel_eval(spec: KernelSpec, t: float, t2: float) -> float:
    return float(spec.scale * correlation(spec.family, (t - t2) / spec.lengthscale))


def _as_times(x, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if x.size == 0:
        raise EmptyInputError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite times")
    return x


def correlation_matrix(family, lengthscale, rows, cols=None):
    """Correlation matrix ``c((rows[i] - cols[j]) / lengthscale)``."""
    rows = _as_times(rows, "rows")
    cols = rows if cols is None else _as_times(cols, "cols")
    return correlation(family, np.subtract.outer(rows, cols) / lengthscale)


def kernel_matrix(spec: KernelSpec, rows, cols=None) -> np.ndarray:
    """Tabulate ``k(rows[i], cols[j])``; ``cols`` defaults to ``rows``."""
    return spec.scale * correlation_matrix(spec.family, spec.lengthscale, rows, cols)


def correlation_matrix_dlengthscale(family, lengthscale, rows, cols=None):
    rows = _as_times(rows, "rows")
    cols = rows if cols is None else _as_times(cols, "cols")
    return correlation_dlengthscale(family, np.subtract.outer(rows, cols), lengthscale)
