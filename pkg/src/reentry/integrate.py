"""Deterministic time integration of the continuous flow.

Fixed-step classical RK4 is the default (dt = 1e-2, horizon 50 resolves
rotation rates of order ||gamma*W|| ~ 1 comfortably); an embedded
Fehlberg 4(5) pair provides adaptive stepping.  Divergence to a non-finite
state is a reportable outcome recorded on the trajectory, not a crash.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigInvalid, LengthMismatch, NonFiniteState

Field = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-2
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    horizon: float = 50.0

    def __post_init__(self):
        if self.method not in ("rk4", "rk45-adaptive"):
            raise ConfigInvalid(f"unknown integrator method {self.method!r}")
        if self.dt <= 0:
            raise ConfigInvalid(f"dt must be > 0, got {self.dt}")
        if self.horizon <= 0 or self.dt >= self.horizon:
            raise ConfigInvalid(
                f"horizon must exceed dt, got dt={self.dt}, horizon={self.horizon}"
            )
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ConfigInvalid("tolerances must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped states with norm trace and optional drive/derivative traces."""

    times: np.ndarray
    states: np.ndarray
    norms: np.ndarray
    derivs: np.ndarray | None = None
    inputs: np.ndarray | None = None
    diverged: bool = False
    divergence_time: float | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        norms = np.asarray(self.norms, dtype=float)
        if not (len(times) == len(states) == len(norms)):
            raise LengthMismatch(
                f"times/states/norms lengths differ: "
                f"{len(times)}/{len(states)}/{len(norms)}"
            )
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ConfigInvalid("trajectory times must be strictly increasing")
        expected = np.linalg.norm(states, axis=1)
        scale = np.maximum(1.0, expected)
        if len(times) and np.max(np.abs(norms - expected) / scale) > 1e-12:
            raise ConfigInvalid("norm trace inconsistent with states")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "norms", norms)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_norm(self) -> float:
        return float(self.norms[-1])


def rk4_step(f: Field, y: np.ndarray, t: float, dt: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step; O(dt^5) local error."""
    if dt <= 0:
        raise ConfigInvalid(f"dt must be > 0, got {dt}")
    y = np.asarray(y, dtype=float)
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(t + dt)
    return out


# Fehlberg 4(5) embedded pair.
_RKF_C = (0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0)
_RKF_A = (
    (),
    (1.0 / 4.0,),
    (3.0 / 32.0, 9.0 / 32.0),
    (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0),
    (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0),
    (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0),
)
_RKF_B5 = (16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0)
_RKF_B4 = (25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0)


def _rkf45_step(f: Field, y: np.ndarray, t: float, dt: float):
    """One Fehlberg step: returns (5th-order state, per-component error estimate)."""
    ks = []
    for i in range(6):
        yi = y.copy()
        for j, aij in enumerate(_RKF_A[i]):
            yi += dt * aij * ks[j]
        ks.append(f(t + _RKF_C[i] * dt, yi))
    y5 = y + dt * sum(b * k for b, k in zip(_RKF_B5, ks))
    y4 = y + dt * sum(b * k for b, k in zip(_RKF_B4, ks))
    return y5, y5 - y4


def simulate(
    f: Field,
    y0,
    cfg: IntegratorConfig,
    drive: Callable[[float], np.ndarray] | None = None,
) -> Trajectory:
    """Integrate the flow from y0, sampling every accepted step.

    Terminates at the horizon, or early when the state leaves the finite
    range; in that case the trajectory keeps every finite sample, sets
    ``diverged`` and records the divergence time.  When ``drive`` is given
    its values at the sample times are stored on the trajectory.
    """
    y = np.asarray(y0, dtype=float).copy()
    if not np.all(np.isfinite(y)):
        raise ConfigInvalid("initial state must be finite")

    times = [0.0]
    states = [y.copy()]
    derivs = [np.asarray(f(0.0, y), dtype=float)]
    inputs = [np.asarray(drive(0.0), dtype=float)] if drive is not None else None
    diverged = False
    div_time = None

    if cfg.method == "rk4":
        n_full = int(np.floor(cfg.horizon / cfg.dt + 1e-12))
        remainder = cfg.horizon - n_full * cfg.dt
        steps = [cfg.dt] * n_full
        if remainder > 1e-12 * max(1.0, cfg.horizon):
            steps.append(remainder)
        t = 0.0
        for i, dt in enumerate(steps):
            try:
                y = rk4_step(f, y, t, dt)
            except NonFiniteState as err:
                diverged = True
                div_time = err.t
                break
            t = (i + 1) * cfg.dt if dt == cfg.dt else cfg.horizon
            times.append(t)
            states.append(y.copy())
            derivs.append(np.asarray(f(t, y), dtype=float))
            if inputs is not None:
                inputs.append(np.asarray(drive(t), dtype=float))
    else:
        t = 0.0
        dt = cfg.dt
        dt_min = 1e-12 * cfg.horizon
        max_steps = 10_000_000
        for _ in range(max_steps):
            if t >= cfg.horizon:
                break
            dt = min(dt, cfg.horizon - t)
            y_new, err = _rkf45_step(f, y, t, dt)
            if not np.all(np.isfinite(y_new)):
                diverged = True
                div_time = t + dt
                break
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.max(np.abs(err) / scale))
            if err_norm <= 1.0:
                t += dt
                y = y_new
                times.append(t)
                states.append(y.copy())
                derivs.append(np.asarray(f(t, y), dtype=float))
                if inputs is not None:
                    inputs.append(np.asarray(drive(t), dtype=float))
            factor = 0.9 * (err_norm ** -0.2) if err_norm > 0 else 5.0
            dt *= min(5.0, max(0.2, factor))
            if dt < dt_min:
                diverged = True
                div_time = t
                break
        else:
            raise ConfigInvalid("adaptive integration exceeded the step budget")

    return Trajectory(
        times=np.asarray(times),
        states=np.asarray(states),
        norms=np.linalg.norm(np.asarray(states), axis=1),
        derivs=np.asarray(derivs),
        inputs=np.asarray(inputs) if inputs is not None else None,
        diverged=diverged,
        divergence_time=div_time,
    )


def format_float(v: float) -> str:
    """Decimal with 17 significant digits, the CSV contract everywhere."""
    return f"{float(v):.17g}"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Columns t, y_1..y_d, norm; header mandatory; 17 significant digits."""
    d = traj.d
    header = "t," + ",".join(f"y_{i + 1}" for i in range(d)) + ",norm"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for t, y, r in zip(traj.times, traj.states, traj.norms):
            row = [format_float(t)] + [format_float(v) for v in y] + [format_float(r)]
            fh.write(",".join(row) + "\n")
