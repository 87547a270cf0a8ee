"""Observation tables, CSV I/O and the two synthetic data generators.

The data CSV has header ``time,value,censored`` and an optional ``output``
column naming which observed component a row belongs to (the Lotka-Volterra
data observe both species). Censored rows carry the detection limit in
``value``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .censoring import LOD_THRESHOLD, CensoringSpec
from .design import ReplicatedDesign, build_design
from .errors import DataError, EmptyInputError, SchemaError
from .ode import INFLUENZA_MODEL, LV_MODEL, TIV_MAP, solve_on_grid

REQUIRED_COLUMNS = ("time", "value", "censored")
TRANSFORMS = {
    None: lambda x: x,
    "identity": lambda x: x,
    "log10p1": lambda x: np.log10(np.asarray(x, float) + 1.0),
}
LOD_TITER = 200.0


@dataclass(frozen=True)
class Dataset:
    """Flat observation table; all arrays have one entry per row."""

    time: np.ndarray
    value: np.ndarray
    censored: np.ndarray
    output: np.ndarray

    def __post_init__(self):
        n = len(self.time)
        if n == 0:
            raise EmptyInputError("dataset has no rows")
        for name in ("value", "censored", "output"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name!r} length differs from time")

    @property
    def outputs(self):
        return sorted(set(int(k) for k in self.output))

    def design(self, output=0) -> ReplicatedDesign | None:
        """Uncensored rows of one output as a replicated design."""
        m = (self.output == output) & ~self.censored
        if not m.any():
            return None
        return build_design(zip(self.time[m], self.value[m]))

    def censoring(self, output=0, threshold=LOD_THRESHOLD, **kw) -> CensoringSpec:
        m = (self.output == output) & self.censored
        times, counts = np.unique(self.time[m], return_counts=True)
        return CensoringSpec(tuple(zip(times.tolist(), counts.tolist())), threshold, **kw)

    def transformed(self, name):
        f = TRANSFORMS[name]
        return Dataset(self.time, f(self.value), self.censored, self.output)


def read_data_csv(path, transform=None) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; need {list(REQUIRED_COLUMNS)}")
        rows = list(reader)
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    t, v, c, o = [], [], [], []
    for i, r in enumerate(rows, start=2):
        try:
            t.append(float(r["time"]))
            v.append(float(r["value"]))
            flag = r["censored"].strip()
            if flag not in ("0", "1"):
                raise ValueError(f"censored must be 0 or 1, got {flag!r}")
            c.append(flag == "1")
            o.append(int(r.get("output") or 0))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{i}: {exc}") from None
        if not (math.isfinite(t[-1]) and math.isfinite(v[-1])):
            raise DataError(f"{path}:{i}: non-finite time or value")
    ds = Dataset(np.array(t), np.array(v), np.array(c, bool), np.array(o, int))
    return ds.transformed(transform) if transform else ds


def write_data_csv(path, ds: Dataset, with_output=None):
    with_output = len(ds.outputs) > 1 if with_output is None else with_output
    cols = list(REQUIRED_COLUMNS) + (["output"] if with_output else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(len(ds.time)):
            row = [repr(float(ds.time[i])), repr(float(ds.value[i])), int(ds.censored[i])]
            if with_output:
                row.append(int(ds.output[i]))
            w.writerow(row)


def simulate_lv(seed=0, p=(1.0, 1.0, 2.0, 0.5), n_times=20, replicates=5, noise_var=0.1,
                span=10.0) -> Dataset:
    """Noisy Lotka-Volterra observations of both species.

    ``n_times`` equidistant times on ``[0, span]``, ``replicates`` draws per
    species and time, additive ``N(0, noise_var)`` noise.
    """
    times = span / (n_times - 1) * np.arange(n_times)
    clean = solve_on_grid(LV_MODEL, p, times)
    rng = np.random.default_rng(seed)
    t, v, o = [], [], []
    for k in range(clean.shape[0]):
        for i, ti in enumerate(times):
            eps = rng.normal(0.0, math.sqrt(noise_var), replicates) if noise_var > 0 else np.zeros(replicates)
            t.extend([ti] * replicates)
            v.extend(clean[k, i] + eps)
            o.extend([k] * replicates)
    return Dataset(np.array(t), np.array(v), np.zeros(len(t), bool), np.array(o))


# log10-scale noise sd by day: wide on day 1 and from day 6 on, narrow around day 4
INFLUENZA_NOISE_SD = {1: 0.55, 2: 0.35, 3: 0.25, 4: 0.12, 5: 0.25, 6: 0.5, 7: 0.6,
                      8: 0.6, 9: 0.25, 10: 0.25, 11: 0.25}


def simulate_influenza(seed=0, p=TIV_MAP, replicates=15, days=range(1, 12), dof=5.0,
                       noise_sd=None) -> Dataset:
    """Synthetic stand-in for the mouse viral-titer data.

    Raw titers (TCID50) at daily times: log10 titers from the TIV model at
    ``p`` plus Student-t noise with a day-dependent scale; titers under the
    200 TCID50 detection limit are recorded as censored at the limit.
    """
    noise_sd = noise_sd or INFLUENZA_NOISE_SD
    days = np.asarray(list(days), float)
    clean = solve_on_grid(INFLUENZA_MODEL, p, days)[0]
    rng = np.random.default_rng(seed)
    t, v, c = [], [], []
    for d, mu in zip(days, clean):
        sd = noise_sd.get(int(d), 0.4)
        # unit-variance t innovations
        y = mu + sd * rng.standard_t(dof, replicates) * math.sqrt((dof - 2.0) / dof)
        titer = 10.0 ** y - 1.0
        cens = titer < LOD_TITER
        t.extend([d] * replicates)
        v.extend(np.where(cens, LOD_TITER, titer))
        c.extend(cens)
    return Dataset(np.array(t), np.array(v), np.array(c, bool), np.zeros(len(t), int))
