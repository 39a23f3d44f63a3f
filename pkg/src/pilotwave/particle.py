"""Relativistic point particle driven by the pilot-wave gradient.

Momentum is carried as ``p = gamma * u`` so the speed ``|p| / sqrt(1 + |p|^2)``
stays below 1 whatever force is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .units import LAMBDA_C, T_C

# Relative variance of period-averaged speeds accepted as "equilibrated".
EQUILIBRATION_TOL = 1e-4


class NotEquilibrated(RuntimeError):
    pass


class ParticleBlowup(FloatingPointError):
    pass


def lorentz_gamma(p):
    p = np.asarray(p, dtype=float)
    return math.sqrt(1.0 + float(p @ p))


@dataclass
class ParticleState:
    q: np.ndarray
    p: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)

    @property
    def gamma(self):
        return lorentz_gamma(self.p)

    @property
    def velocity(self):
        return self.p / self.gamma

    @property
    def speed(self):
        return float(np.hypot(*self.p)) / self.gamma


def kick(state, grad, b, dt, gamma):
    """``p += dt * b * grad / gamma`` with a caller-supplied Lorentz factor."""
    p = state.p + (dt * b / gamma) * np.asarray(grad, dtype=float)
    return ParticleState(state.q, p, state.time)


def drift(state, dt):
    q = state.q + dt * state.velocity
    return ParticleState(q, state.p, state.time)


def midpoint_gamma(state, grad, b, dt):
    """Lorentz factor half way through a kick (explicit predictor)."""
    g0 = state.gamma
    return lorentz_gamma(state.p + (0.5 * dt * b / g0) * np.asarray(grad, dtype=float))


def step_particle(state, grad, b, dt):
    """Kick by the field gradient, then drift with the updated velocity.

    The force prefactor uses a midpoint estimate of gamma predicted from the
    pre-update momentum, which makes the momentum update second order.
    """
    with np.errstate(invalid="ignore", over="ignore"):
        if b == 0:
            new = ParticleState(state.q, state.p, state.time)
        else:
            new = kick(state, grad, b, dt, midpoint_gamma(state, grad, b, dt))
        new = drift(new, dt)
    new.time = state.time + dt
    if not (np.all(np.isfinite(new.q)) and np.all(np.isfinite(new.p))):
        raise ParticleBlowup(f"non-finite particle state at t={new.time:g}")
    return new


def _as_arrays(trajectory):
    if isinstance(trajectory, dict):
        return (np.asarray(trajectory["t"]), np.asarray(trajectory["x"]),
                np.asarray(trajectory["y"]), np.asarray(trajectory["px"]),
                np.asarray(trajectory["py"]))
    t = np.array([s.time for s in trajectory])
    q = np.array([s.q for s in trajectory])
    p = np.array([s.p for s in trajectory])
    return t, q[:, 0], q[:, 1], p[:, 0], p[:, 1]


def period_speeds(t, x, y, period=T_C):
    """Mean speed over consecutive whole periods (displacement / time)."""
    n_per = int((t[-1] - t[0]) // period)
    if n_per < 1:
        return np.empty(0)
    edges = t[0] + period * np.arange(n_per + 1)
    xe = np.interp(edges, t, x)
    ye = np.interp(edges, t, y)
    return np.hypot(np.diff(xe), np.diff(ye)) / period


def measure_steady_state(trajectory, min_periods=20, tol=EQUILIBRATION_TOL):
    """Steady speed and de Broglie wavelength of an equilibrated particle.

    ``trajectory`` is a sequence of :class:`ParticleState` or a dict of
    arrays with keys ``t, x, y, px, py``.  The speed is averaged over the
    trailing half of the window in whole Compton periods, which removes the
    Compton-frequency jitter.  Returns ``(u_steady, lambda_dB)`` with the
    wavelength in natural units.
    """
    t, x, y, _, _ = _as_arrays(trajectory)
    span = t[-1] - t[0]
    if span < min_periods * T_C:
        raise NotEquilibrated(
            f"window covers {span / T_C:.1f} Compton periods, need {min_periods}")
    half = t >= t[0] + 0.5 * span
    speeds = period_speeds(t[half], x[half], y[half])
    u = float(speeds.mean())
    rel_var = float(speeds.var()) / u ** 2 if u > 0 else 0.0
    if rel_var > tol:
        raise NotEquilibrated(f"trailing relative speed variance {rel_var:.2e} > {tol:g}")
    if u <= 0:
        return 0.0, math.inf
    gamma = 1.0 / math.sqrt(1.0 - u * u)
    return u, LAMBDA_C / (gamma * u)


def trailing_drift(trajectory, n_periods=10):
    """Relative speed change over the last ``n_periods`` Compton periods.

    A straight line is fitted to the period-averaged speeds; the drift is the
    fitted change across the window divided by the mean speed, which is less
    sensitive to period-to-period jitter than comparing end points.
    """
    t, x, y, _, _ = _as_arrays(trajectory)
    sel = t >= t[-1] - n_periods * T_C - 1e-9
    speeds = period_speeds(t[sel], x[sel], y[sel])
    if len(speeds) < 3:
        raise NotEquilibrated("window shorter than three Compton periods")
    k = np.arange(len(speeds))
    slope = np.polyfit(k, speeds, 1)[0]
    return float(abs(slope) * (len(speeds) - 1) / speeds.mean())
