"""Quantile summaries, kernel density curves and method comparisons."""

from __future__ import annotations

import math

import numpy as np

QUANTILE_LEVELS = (0.025, 0.25, 0.5, 0.75, 0.975)
BANDWIDTH_FLOOR = 1e-9


def silverman_bandwidth(x) -> float:
    """``0.9 min(sd, IQR/1.34) n^(-1/5)``, floored for degenerate samples."""
    x = np.asarray(x, float)
    n = x.size
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    h = 0.9 * spread * n ** (-0.2)
    scale = max(1.0, float(np.max(np.abs(x)))) if n else 1.0
    return max(h, BANDWIDTH_FLOOR * scale)


def kde(x, points=256, bandwidth=None, pad=3.0):
    """Gaussian KDE on an even grid spanning the data plus ``pad`` bandwidths."""
    x = np.asarray(x, float)
    h = bandwidth or silverman_bandwidth(x)
    grid = np.linspace(x.min() - pad * h, x.max() + pad * h, points)
    dens = np.zeros(points)
    for chunk in np.array_split(x, max(1, x.size // 4096)):
        u = (grid[:, None] - chunk[None, :]) / h
        dens += np.exp(-0.5 * u * u).sum(axis=1)
    dens /= x.size * h * math.sqrt(2.0 * math.pi)
    return grid, dens, h


def summarize_samples(samples, names, method, extra=None) -> dict:
    """Per-parameter quantiles and interquartile widths in a fixed schema."""
    samples = np.atleast_2d(np.asarray(samples, float))
    out = {"method": method, "count": int(samples.shape[0]), "quantile_levels": list(QUANTILE_LEVELS),
           "parameters": {}}
    if samples.shape[0] == 0:
        for name in names:
            out["parameters"][name] = {"quantiles": [math.nan] * len(QUANTILE_LEVELS), "iqr": math.nan,
                                       "mean": math.nan}
    else:
        q = np.quantile(samples, QUANTILE_LEVELS, axis=0)
        for i, name in enumerate(names):
            out["parameters"][name] = {"quantiles": q[:, i].tolist(), "iqr": float(q[3, i] - q[1, i]),
                                       "mean": float(samples[:, i].mean())}
    if extra:
        out.update(extra)
    return out


def width_ratios(reference: dict, other: dict) -> list:
    """One row per shared parameter with both IQRs and ``iqr_other / iqr_reference``."""
    rows = []
    for name, s in reference["parameters"].items():
        if name not in other["parameters"]:
            continue
        a, b = s["iqr"], other["parameters"][name]["iqr"]
        rows.append({"parameter": name, "reference": reference["method"], "other": other["method"],
                     "iqr_reference": a, "iqr_other": b, "ratio": b / a if a > 0 else math.inf})
    return rows
