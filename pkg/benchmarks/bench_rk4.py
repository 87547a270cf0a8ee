"""Time the compiled RK4 kernel against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_rk4.py [--repeat 5]

Both backends integrate the same node sequence for each built-in model; the
script checks that they agree and prints the best-of-``repeat`` wall time.
"""

import argparse
import timeit

import numpy as np

from spinfer import _rk4_py
from spinfer.ode import INFLUENZA_MODEL, LV_MODEL, LV_TRUE, TIV_MAP, refined_nodes

try:
    from spinfer import _rk4
except ImportError:
    _rk4 = None

CASES = [
    (LV_MODEL, LV_TRUE, np.linspace(0.0, 10.0, 201)),
    (INFLUENZA_MODEL, TIV_MAP, np.linspace(1.0, 11.0, 3000)),
]


def prepare(model, p, grid):
    p = np.asarray(p, float)
    nodes = refined_nodes(grid, model.t0, model.default_step)[0]
    q = np.ascontiguousarray(model.dynamics(p))
    y0 = np.ascontiguousarray(model.initial_state(p), dtype=float)
    return model.compiled_id, q, y0, nodes


def best_time(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.2:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _rk4 is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'model':<16}{'steps':>8}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for model, p, grid in CASES:
        call = prepare(model, p, grid)
        py = best_time(_rk4_py.integrate, call, args.repeat)
        if _rk4 is None:
            print(f"{model.name:<16}{call[3].size - 1:>8}{py * 1e3:>14.3f}{'n/a':>14}{'n/a':>10}")
            continue
        a, b = _rk4.integrate(*call), _rk4_py.integrate(*call)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
        cy = best_time(_rk4.integrate, call, args.repeat)
        print(f"{model.name:<16}{call[3].size - 1:>8}{py * 1e3:>14.3f}{cy * 1e3:>14.3f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
