"""Replicated designs: unique inputs plus per-location sufficient statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyInputError, InsufficientReplicationError


@dataclass(frozen=True)
class ReplicatedDesign:
    """Observations grouped by exactly-equal time.

    ``values[i]`` holds the raw replicates observed at ``times[i]``; the
    remaining arrays are sufficient statistics derived from them.
    """

    times: np.ndarray
    counts: np.ndarray
    values: tuple
    means: np.ndarray
    biased_var: np.ndarray
    unbiased_var: np.ndarray

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    def observations(self):
        """Flat ``(time, value)`` arrays in design order."""
        t = np.repeat(self.times, self.counts)
        d = np.concatenate(self.values) if self.values else np.empty(0)
        return t, d

    def sum_of_squares(self) -> float:
        """``sum_i a_i s_i^2 + a_i mean_i^2``; equals the raw sum of squares."""
        return float(np.sum(self.counts * self.biased_var + self.counts * self.means**2))

    def merge(self, times, values) -> "ReplicatedDesign":
        t, d = self.observations()
        return build_design(
            list(zip(np.concatenate([t, np.asarray(times, float)]),
                     np.concatenate([d, np.asarray(values, float)])))
        )

    def to_dict(self):
        t, d = self.observations()
        return {"time": t.tolist(), "value": d.tolist()}

    @classmethod
    def from_dict(cls, d):
        return build_design(list(zip(d["time"], d["value"])))


def _from_arrays(t, d):
    order = np.argsort(t, kind="stable")
    t, d = t[order], d[order]
    times, start, counts = np.unique(t, return_index=True, return_counts=True)
    values = tuple(np.sort(d[s:s + c]) for s, c in zip(start, counts))
    means = np.array([v.mean() for v in values])
    ss = np.array([np.sum((v - m) ** 2) for v, m in zip(values, means)])
    biased = ss / counts
    with np.errstate(invalid="ignore", divide="ignore"):
        unbiased = np.where(counts > 1, ss / np.maximum(counts - 1, 1), np.nan)
    return ReplicatedDesign(times, counts, values, means, biased, unbiased)


def build_design(observations) -> ReplicatedDesign:
    """Group ``(time, value)`` pairs by identical time.

    Replicate values within a location are stored sorted, so the result does
    not depend on the input row order.
    """
    obs = list(observations)
    if not obs:
        raise EmptyInputError("no observations")
    arr = np.asarray(obs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DataError("observations must be (time, value) pairs")
    bad = np.flatnonzero(~np.all(np.isfinite(arr), axis=1))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"non-finite observation in row {i}: {tuple(arr[i])}")
    return _from_arrays(arr[:, 0], arr[:, 1])


def moment_variances(design: ReplicatedDesign) -> np.ndarray:
    """Stochastic-kriging noise matrix ``diag(sigma_hat_i^2 / a_i)``."""
    if np.any(design.counts < 2):
        i = int(np.flatnonzero(design.counts < 2)[0])
        raise InsufficientReplicationError(
            f"moment-based variances need a_i >= 2; time {design.times[i]} has one replicate"
        )
    return np.diag(design.unbiased_var / design.counts)
