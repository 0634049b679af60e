"""Explicit ODE integration: classical RK4 and Dormand-Prince 5(4).

Right-hand sides use the ``rhs(t, y) -> ydot`` convention.  Recording does
not interpolate: a state is stored at the first accepted step at or after
each ``record_every`` boundary, and the final state is always stored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteDerivative, StepUnderflow

METHODS = ("rk45_adaptive", "rk4_fixed")
STOP_METRICS = ("V", "rhs_norm", "W")
MIN_STEP = 1e-14


@dataclass(frozen=True)
class StopRule:
    metric: str
    threshold: float

    def __post_init__(self):
        if self.metric not in STOP_METRICS:
            raise ValueError(f"stop metric must be one of {STOP_METRICS}, got {self.metric!r}")
        if not self.threshold > 0:
            raise ValueError("stop threshold must be positive")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45_adaptive"
    dt: float = 1e-2
    rtol: float = 1e-8
    atol: float = 1e-10
    t_end: float = 50.0
    record_every: float = 0.01
    stop_on: StopRule | None = None
    max_step: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("dt", "rtol", "atol", "record_every"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")


@dataclass
class Solution:
    times: np.ndarray
    states: np.ndarray
    stop_reason: str = "t_end"
    nfev: int = 0
    n_accepted: int = 0
    n_rejected: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.states[-1]


def _eval(rhs, t, y):
    d = np.asarray(rhs(t, y), dtype=float)
    if not np.all(np.isfinite(d)):
        raise NonFiniteDerivative(f"non-finite derivative at t={t}")
    return d


def rk4_step(rhs: Callable, t: float, y, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    y = np.asarray(y, dtype=float)
    k1 = _eval(rhs, t, y)
    k2 = _eval(rhs, t + dt / 2, y + dt / 2 * k1)
    k3 = _eval(rhs, t + dt / 2, y + dt / 2 * k2)
    k4 = _eval(rhs, t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def dopri_step(rhs, t, y, h, k1):
    """One Dormand-Prince step; returns ``(y_new, err_vector, k7)``.

    ``k7`` is the derivative at ``y_new`` (first-same-as-last).
    """
    K = np.empty((7, y.size))
    K[0] = k1
    for s in range(1, 7):
        ys = y + h * (np.asarray(_A[s]) @ K[:s])
        K[s] = _eval(rhs, t + _C[s] * h, ys)
    y_new = y + h * (_B5 @ K)
    err = h * (_E @ K)
    return y_new, err, K[6]


class _Recorder:
    def __init__(self, t0, y0, every):
        self.every = every
        self.t0 = t0
        self.times = [t0]
        self.states = [np.array(y0, copy=True)]
        self.next_k = 1

    def offer(self, t, y):
        boundary = self.t0 + self.next_k * self.every
        if t >= boundary - 1e-12 * max(1.0, abs(boundary)):
            self.times.append(t)
            self.states.append(np.array(y, copy=True))
            self.next_k = int(math.floor((t - self.t0) / self.every + 1e-9)) + 1

    def finish(self, t, y):
        if len(self.times) > 1 and t - self.times[-1] <= 1e-12 * max(1.0, abs(t)):
            self.times[-1] = t
            self.states[-1] = np.array(y, copy=True)
        elif self.times[-1] != t:
            self.times.append(t)
            self.states.append(np.array(y, copy=True))
        return np.asarray(self.times), np.asarray(self.states)


def integrate(
    rhs: Callable,
    y0,
    config: IntegratorConfig,
    stop: Callable[[float, np.ndarray], bool] | None = None,
    t0: float = 0.0,
) -> Solution:
    """Integrate ``rhs`` from ``t0`` to ``t0 + config.t_end``.

    ``stop(t, y)`` is checked after every accepted step; returning True ends
    the run early with ``stop_reason="stop_on"``.
    """
    y = np.array(y0, dtype=float)
    t_stop = t0 + config.t_end
    rec = _Recorder(t0, y, config.record_every)
    sol = Solution(times=np.empty(0), states=np.empty((0, y.size)))
    t = t0
    hmax = config.max_step if config.max_step is not None else math.inf

    if config.t_end == 0:
        sol.times, sol.states = rec.finish(t, y)
        return sol

    if config.method == "rk4_fixed":
        nsteps = max(1, int(math.ceil(config.t_end / min(config.dt, hmax) - 1e-9)))
        h = config.t_end / nsteps
        for k in range(nsteps):
            y = rk4_step(rhs, t, y, h)
            t = t0 + (k + 1) * h
            sol.nfev += 4
            sol.n_accepted += 1
            rec.offer(t, y)
            if stop is not None and stop(t, y):
                sol.stop_reason = "stop_on"
                break
        sol.times, sol.states = rec.finish(t, y)
        return sol

    h = min(config.dt, hmax)
    k1 = _eval(rhs, t, y)
    sol.nfev += 1
    while t < t_stop:
        # absorb a would-be sliver step into this one
        last = t + h >= t_stop - 1e-12 * max(1.0, abs(t_stop))
        if last:
            h = t_stop - t
        y_new, err, k7 = dopri_step(rhs, t, y, h, k1)
        sol.nfev += 6
        scale = config.atol + config.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale)) if y.size else 0.0
        if err_norm <= 1.0:
            t = t_stop if last else t + h
            y, k1 = y_new, k7
            sol.n_accepted += 1
            rec.offer(t, y)
            if stop is not None and stop(t, y):
                sol.stop_reason = "stop_on"
                break
            factor = 5.0 if err_norm == 0 else min(5.0, 0.9 * err_norm ** -0.2)
        else:
            sol.n_rejected += 1
            factor = max(0.2, 0.9 * err_norm ** -0.2)
        h = min(h * factor, hmax)
        if h < MIN_STEP and t < t_stop:
            raise StepUnderflow(f"step size {h:.3e} below {MIN_STEP} at t={t}")
    sol.times, sol.states = rec.finish(t, y)
    return sol
