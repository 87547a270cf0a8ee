"""Pure-Python RK4 for the built-in models, used when the extension is absent.

``integrate(model, params, y0, nodes)`` steps classical RK4 between
consecutive ``nodes`` and returns ``(states, fail_index, fail_code)`` where
``fail_code`` is 0 on success, 1 for a non-finite state and 2 for a vanishing
clearance denominator. Rows from ``fail_index`` on are undefined.
"""

import math

import numpy as np

LV = 0
TIV = 1


def _lv(p):
    a1, a2 = p[0], p[1]

    def f(y1, y2):
        return -y1 + a1 * y1 * y2, y2 - a2 * y1 * y2

    return f


def _tiv(p):
    beta, rho, c, delta, kd, kappa = p[:6]

    def f(T, I1, I2, V):
        den = kd + I2
        if -1e-300 < den < 1e-300:
            raise ZeroDivisionError
        tv = beta * T * V
        return -tv, tv - kappa * I1, kappa * I1 - delta * I2 / den, rho * I2 - c * V

    return f


def integrate(model, params, y0, nodes):
    if model == LV:
        f = _lv(params)
    elif model == TIV:
        f = _tiv(params)
    else:
        raise ValueError(f"unknown compiled model id {model}")
    nodes = [float(x) for x in nodes]
    y = [float(v) for v in y0]
    if len(y) != (2 if model == LV else 4):
        raise ValueError("initial state has wrong dimension")
    out = np.empty((len(nodes), len(y)))
    out[0] = y
    isfinite = math.isfinite
    for i in range(len(nodes) - 1):
        h = nodes[i + 1] - nodes[i]
        try:
            k1 = f(*y)
            k2 = f(*[a + 0.5 * h * b for a, b in zip(y, k1)])
            k3 = f(*[a + 0.5 * h * b for a, b in zip(y, k2)])
            k4 = f(*[a + h * b for a, b in zip(y, k3)])
        except ZeroDivisionError:
            return out, i, 2
        except OverflowError:
            return out, i + 1, 1
        y = [a + h / 6.0 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]
        if not all(isfinite(v) for v in y):
            return out, i + 1, 1
        out[i + 1] = y
    return out, -1, 0
