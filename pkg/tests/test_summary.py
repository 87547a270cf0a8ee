import math

import numpy as np
import pytest
from scipy import stats

from spinfer.summary import BANDWIDTH_FLOOR, kde, silverman_bandwidth, summarize_samples, width_ratios


def test_kde_integrates_to_one():
    x = np.random.default_rng(0).normal(2.0, 0.5, 5000)
    g, d, h = kde(x, points=512)
    assert np.trapezoid(d, g) == pytest.approx(1.0, abs=1e-3)
    assert np.max(np.abs(d - stats.norm.pdf(g, 2.0, 0.5))) < 0.06


def test_degenerate_sample_uses_floor():
    x = np.full(100, 3.0)
    h = silverman_bandwidth(x)
    assert h == pytest.approx(BANDWIDTH_FLOOR * 3.0)
    g, d, _ = kde(x)
    assert np.all(np.isfinite(d)) and d.max() > 0


def test_summary_schema():
    s = np.random.default_rng(1).normal(size=(400, 2))
    out = summarize_samples(s, ["a", "b"], "ensemble", {"J": 400})
    assert out["method"] == "ensemble" and out["count"] == 400 and out["J"] == 400
    q = out["parameters"]["a"]["quantiles"]
    assert q == sorted(q) and out["parameters"]["a"]["iqr"] == pytest.approx(q[3] - q[1])


def test_single_sample_summary():
    out = summarize_samples(np.array([[1.0, 2.0]]), ["a", "b"], "ensemble")
    assert set(out["parameters"]["b"]["quantiles"]) == {2.0}


def test_empty_summary():
    out = summarize_samples(np.empty((0, 2)), ["a", "b"], "ensemble")
    assert math.isnan(out["parameters"]["a"]["iqr"])


def test_width_ratios():
    rng = np.random.default_rng(2)
    a = summarize_samples(rng.normal(size=(5000, 2)), ["x", "y"], "ensemble")
    b = summarize_samples(3 * rng.normal(size=(5000, 2)), ["x", "y"], "mcmc")
    rows = width_ratios(a, b)
    assert [r["parameter"] for r in rows] == ["x", "y"]
    assert all(2.5 < r["ratio"] < 3.5 for r in rows)
    assert rows[0]["reference"] == "ensemble" and rows[0]["other"] == "mcmc"
