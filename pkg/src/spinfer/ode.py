"""ODE models and a fixed-step classical Runge-Kutta 4 integrator.

Two models ship built in: the Lotka-Volterra predator-prey system and the
target-cell / eclipse / productive / virus (TIV) influenza model. Both have a
compiled right-hand side (see :mod:`spinfer._backend`); user models registered
with :func:`register_model` run through a generic NumPy stepper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend
from .errors import BlowUpError, ExtrapolationError, SingularityError, SpinferError

LOTKA_VOLTERRA = "lotka-volterra"
INFLUENZA_TIV = "influenza-tiv"

KAPPA = 4.0
TIV_FIXED_STATE = (10.0, 0.02, 0.07)  # I1(0), I2(0), V(0)
V_FLOOR = 0.1
LV_TRUE = (1.0, 1.0, 2.0, 0.5)
TIV_MAP = (2.9601e-5, 4.4085e4, 2.8540, 28.1280, 0.0436, 154.3949)


@dataclass(frozen=True)
class Trajectory:
    """RK4 nodes and states, ``states[k]`` being the state at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray


@dataclass(frozen=True)
class ODEModel:
    """An initial value problem ``y' = f(t, y, p)`` plus its observation operator.

    ``p`` holds the estimated quantities, which may include initial
    conditions; :attr:`initial_state` maps ``p`` to ``y(t0)`` and
    :attr:`dynamics` picks out the right-hand-side parameters.

    Parameters
    ----------
    name : str
        Registry key.
    state_dim : int
        Dimension of ``y``.
    param_names : tuple of str
        Names of the entries of ``p``.
    rhs : callable
        ``rhs(t, y, q) -> dy`` with ``q = dynamics(p)``.
    observe_states : callable
        Maps a ``(len(grid), state_dim)`` state array to observed outputs of
        shape ``(outputs, len(grid))``.
    initial_state : callable
        ``p -> y(t0)``.
    dynamics : callable
        ``p -> q``, the vector passed to ``rhs``.
    bounds : tuple
        ``(lo, hi)`` arrays delimiting the feasible set.
    t0 : float
        Initial time of the problem.
    default_step : float
        Solver step used when none is given.
    compiled_id : int or None
        Identifier of the compiled right-hand side, if any.
    """

    name: str
    state_dim: int
    param_names: tuple
    rhs: Callable
    observe_states: Callable
    initial_state: Callable
    dynamics: Callable
    bounds: tuple
    t0: float = 0.0
    default_step: float = 10.0 / 2048
    outputs: int = 1
    compiled_id: int | None = None
    fixed: dict = field(default_factory=dict)

    @property
    def n_params(self):
        return len(self.param_names)

    def feasible(self, p) -> bool:
        p = np.asarray(p, float)
        lo, hi = self.bounds
        return bool(np.all(np.isfinite(p)) and np.all(p >= lo) and np.all(p <= hi))


def lotka_volterra_rhs(t, y, p):
    y1, y2 = y[0], y[1]
    return np.array([-y1 + p[0] * y1 * y2, y2 - p[1] * y1 * y2])


def influenza_rhs(t, y, p, kappa=KAPPA):
    """TIV right-hand side with ``p = [beta, rho, c, delta, K_d]``."""
    T, I1, I2, V = y
    beta, rho, c, delta, kd = p[:5]
    den = kd + I2
    if abs(den) < 1e-300:
        raise SingularityError(f"K_d + I2 vanished ({den:.3e})", time=t, params=list(p))
    return np.array([-beta * T * V, beta * T * V - kappa * I1,
                     kappa * I1 - delta * I2 / den, rho * I2 - c * V])


def lv_first_integral(y, p):
    """``alpha2 y1 - log y1 + alpha1 y2 - log y2``, constant along exact solutions."""
    y = np.asarray(y, float)
    return p[1] * y[..., 0] - np.log(y[..., 0]) + p[0] * y[..., 1] - np.log(y[..., 1])


def _observe_log_virus(states, floor=V_FLOOR):
    return np.log10(np.maximum(states[:, 3], floor))[None, :]


LV_MODEL = ODEModel(
    name=LOTKA_VOLTERRA,
    state_dim=2,
    param_names=("alpha1", "alpha2", "y1_0", "y2_0"),
    rhs=lotka_volterra_rhs,
    observe_states=lambda s: np.asarray(s).T,
    initial_state=lambda p: np.asarray(p[2:4], float),
    dynamics=lambda p: np.asarray(p[:2], float),
    bounds=(np.full(4, 1e-8), np.full(4, 1e3)),
    t0=0.0,
    default_step=10.0 / 2048,
    outputs=2,
    compiled_id=0,
)

INFLUENZA_MODEL = ODEModel(
    name=INFLUENZA_TIV,
    state_dim=4,
    param_names=("beta", "rho", "c", "delta", "K_d", "T0"),
    rhs=lambda t, y, q: influenza_rhs(t, y, q[:5], q[5]),
    observe_states=_observe_log_virus,
    initial_state=lambda p: np.array([p[5], *TIV_FIXED_STATE]),
    dynamics=lambda p: np.array([*np.asarray(p[:5], float), KAPPA]),
    bounds=(np.array([1e-12, 1e-2, 1e-4, 1e-4, 1e-8, 1e-2]),
            np.array([1.0, 1e9, 1e4, 1e5, 1e4, 1e10])),
    t0=0.0,
    # RK4 is stable for h * delta / K_d below about 2.8, which at the
    # reference parameters needs h < 0.0043; 0.0034 also puts one step per
    # gap of the 3000-point residual grid
    default_step=0.0034,
    outputs=1,
    compiled_id=1,
    fixed={"kappa": KAPPA, "I1_0": TIV_FIXED_STATE[0], "I2_0": TIV_FIXED_STATE[1],
           "V_0": TIV_FIXED_STATE[2], "V_floor": V_FLOOR},
)

_REGISTRY: dict[str, ODEModel] = {LOTKA_VOLTERRA: LV_MODEL, INFLUENZA_TIV: INFLUENZA_MODEL}


def register_model(model: ODEModel, replace=False):
    if model.name in _REGISTRY and not replace:
        raise SpinferError(f"model {model.name!r} already registered")
    _REGISTRY[model.name] = model


def get_model(name: str) -> ODEModel:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise SpinferError(f"unknown model {name!r}; known: {sorted(_REGISTRY)}") from None


def uniform_nodes(t0, t1, h):
    """Uniform nodes from ``t0`` with the last step shortened to land on ``t1``."""
    if not h > 0:
        raise SpinferError(f"step must be positive, got {h}")
    k = int(math.floor((t1 - t0) / h * (1 + 1e-12)))
    nodes = t0 + h * np.arange(k + 1)
    if t1 - nodes[-1] > 1e-12 * max(1.0, abs(t1)):
        nodes = np.append(nodes, t1)
    else:
        nodes[-1] = t1
    return nodes


def refined_nodes(grid, t0, hmax):
    """Nodes containing ``t0`` and every grid time, gaps split evenly to steps <= ``hmax``."""
    pts = np.concatenate([[t0], np.asarray(grid, float)])
    pts = np.unique(pts)
    if pts[0] < t0:
        raise ExtrapolationError(f"grid starts at {pts[0]} before t0={t0}")
    gaps = np.diff(pts)
    steps = np.maximum(1, np.ceil(gaps / hmax * (1 - 1e-12))).astype(int)
    idx = np.concatenate([[0], np.cumsum(steps)])
    within = np.arange(1, idx[-1] + 1) - np.repeat(idx[:-1], steps)
    nodes = np.concatenate([pts[:1], np.repeat(pts[:-1], steps) + np.repeat(gaps / steps, steps) * within])
    # place grid times exactly
    nodes[idx] = pts
    return nodes, pts, idx


def _generic_integrate(model, q, y0, nodes):
    y = np.asarray(y0, float).copy()
    out = np.empty((nodes.size, y.size))
    out[0] = y
    f = model.rhs
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(nodes.size - 1):
            t, h = nodes[i], nodes[i + 1] - nodes[i]
            k1 = f(t, y, q)
            k2 = f(t + h / 2, y + h / 2 * k1, q)
            k3 = f(t + h / 2, y + h / 2 * k2, q)
            k4 = f(t + h, y + h * k3, q)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(y)):
                return out, i + 1, 1
            out[i + 1] = y
    return out, -1, 0


def integrate_nodes(model: ODEModel, p, y0, nodes):
    """RK4 through arbitrary increasing ``nodes``; states at every node."""
    nodes = np.ascontiguousarray(nodes, dtype=float)
    q = np.ascontiguousarray(model.dynamics(np.asarray(p, float)), dtype=float)
    y0 = np.ascontiguousarray(y0, dtype=float)
    if model.compiled_id is not None:
        states, fail, code = _backend.integrate(model.compiled_id, q, y0, nodes)
    else:
        states, fail, code = _generic_integrate(model, q, y0, nodes)
    if code == 2:
        raise SingularityError(f"singular right-hand side near t={nodes[fail]:.6g}",
                               time=float(nodes[fail]), params=list(map(float, p)))
    if code:
        raise BlowUpError(f"non-finite state at t={nodes[fail]:.6g}",
                          time=float(nodes[fail]), params=list(map(float, p)))
    return states


def rk4_solve(model: ODEModel, p, y0=None, span=None, step=None) -> Trajectory:
    """Classical RK4 over ``span`` with fixed step (final step shortened if needed).

    ``y0`` defaults to ``model.initial_state(p)``, ``span`` to
    ``(model.t0, model.t0 + 10)`` and ``step`` to ``model.default_step``.
    """
    y0 = model.initial_state(np.asarray(p, float)) if y0 is None else y0
    t0, t1 = span if span is not None else (model.t0, model.t0 + 10.0)
    if not t1 > t0:
        raise SpinferError(f"empty integration span ({t0}, {t1})")
    nodes = uniform_nodes(float(t0), float(t1), float(step or model.default_step))
    return Trajectory(nodes, integrate_nodes(model, p, y0, nodes))


def observe(model: ODEModel, trajectory: Trajectory, grid) -> np.ndarray:
    """Observation operator on ``grid`` by linear interpolation between nodes.

    Returns an ``(outputs, len(grid))`` array.
    """
    grid = np.asarray(grid, float)
    t = trajectory.times
    tol = 1e-12 * max(1.0, abs(t[-1]))
    if grid.size and (grid.min() < t[0] - tol or grid.max() > t[-1] + tol):
        raise ExtrapolationError(f"grid [{grid.min()}, {grid.max()}] outside [{t[0]}, {t[-1]}]")
    states = np.column_stack([np.interp(grid, t, trajectory.states[:, k])
                              for k in range(trajectory.states.shape[1])])
    return model.observe_states(states)


def solve_on_grid(model: ODEModel, p, grid, step=None) -> np.ndarray:
    """Observed outputs at ``grid`` from ``model.t0``; grid times are RK4 nodes.

    Avoids interpolation error by refining each grid gap into equal steps no
    longer than ``step``.
    """
    nodes, pts, idx = refined_nodes(grid, model.t0, step or model.default_step)
    states = integrate_nodes(model, p, model.initial_state(np.asarray(p, float)), nodes)
    at = states[idx]
    # map requested grid (possibly with duplicates) onto unique points
    pos = np.searchsorted(pts, np.asarray(grid, float))
    return model.observe_states(at[pos])
