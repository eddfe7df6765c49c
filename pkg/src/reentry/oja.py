"""Normalized-Hebbian weight flow and its activity-space image.

For a single neuron with constant input x, weight w and activation y = w*x,
the normalized Hebbian rule dw/dt = x*y - y^2*w maps exactly onto the
activity-space radial law dy/dt = y*(x^2 - y^2): weight normalization and
activity homeostasis are the same process in different coordinates.  The
weight side is integrated numerically (RK4); the activity side has a
logistic closed form in u = y^2, so the reported equivalence error is the
integrator's own global error and shrinks at fourth order in dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, NonFiniteState
from .integrate import format_float


@dataclass(frozen=True)
class OjaConfig:
    w0: float = 0.5
    x: float = 1.0
    dt: float = 1e-3
    horizon: float = 20.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigInvalid(f"dt must be > 0, got {self.dt}")
        if self.horizon <= self.dt:
            raise ConfigInvalid(
                f"horizon must exceed dt, got dt={self.dt}, horizon={self.horizon}"
            )
        if not all(math.isfinite(v) for v in (self.w0, self.x, self.dt, self.horizon)):
            raise ConfigInvalid("OjaConfig values must be finite")


@dataclass(frozen=True)
class OjaTraces:
    times: np.ndarray
    w: np.ndarray
    y_from_w: np.ndarray


@dataclass(frozen=True)
class OjaEquivalence:
    times: np.ndarray
    w: np.ndarray
    y_from_w: np.ndarray
    y_direct: np.ndarray
    abs_error: np.ndarray

    @property
    def max_error(self) -> float:
        return float(np.max(self.abs_error)) if len(self.abs_error) else 0.0


def _weight_rate(w: float, x: float) -> float:
    y = w * x
    return x * y - y * y * w


def simulate_oja(cfg: OjaConfig) -> OjaTraces:
    """Integrate dw/dt = x*y - y^2*w (y = w*x) with RK4 at cfg.dt."""
    n = int(round(cfg.horizon / cfg.dt))
    times = np.arange(n + 1) * cfg.dt
    w = np.empty(n + 1)
    w[0] = cfg.w0
    cur = cfg.w0
    dt = cfg.dt
    x = cfg.x
    for i in range(n):
        k1 = _weight_rate(cur, x)
        k2 = _weight_rate(cur + 0.5 * dt * k1, x)
        k3 = _weight_rate(cur + 0.5 * dt * k2, x)
        k4 = _weight_rate(cur + dt * k3, x)
        cur = cur + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(cur):
            raise NonFiniteState(times[i + 1], "weight flow left the finite range")
        w[i + 1] = cur
    return OjaTraces(times=times, w=w, y_from_w=w * x)


def activity_closed_form(y0: float, x: float, times) -> np.ndarray:
    """Exact solution of dy/dt = y*(x^2 - y^2) from y0.

    In u = y^2 the law is logistic, u' = 2u(x^2 - u); the sign of y is
    preserved.  Handles x = 0 (pure cubic decay) separately.
    """
    t = np.asarray(times, dtype=float)
    u0 = y0 * y0
    th2 = x * x
    if th2 == 0.0:
        u = u0 / (1.0 + 2.0 * u0 * t)
    else:
        with np.errstate(over="ignore"):
            decay = np.exp(-2.0 * th2 * t)
        u = th2 * u0 / (u0 + (th2 - u0) * decay)
        if u0 == 0.0:
            u = np.zeros_like(t)
    return math.copysign(1.0, y0) * np.sqrt(u) if y0 != 0.0 else np.zeros_like(t)


def oja_equivalence(cfg: OjaConfig) -> OjaEquivalence:
    """Max |w(t)*x - y(t)| between the weight flow and the activity law.

    The weight side is the RK4 trace of simulate_oja; the activity side is
    integrated in closed form from y0 = w0*x, so both routes to y(t) are
    independent and the discrepancy is integrator-limited.
    """
    traces = simulate_oja(cfg)
    y_direct = activity_closed_form(cfg.w0 * cfg.x, cfg.x, traces.times)
    abs_error = np.abs(traces.y_from_w - y_direct)
    return OjaEquivalence(
        times=traces.times,
        w=traces.w,
        y_from_w=traces.y_from_w,
        y_direct=y_direct,
        abs_error=abs_error,
    )


def write_oja_csv(eq: OjaEquivalence, path) -> None:
    """Columns t, w, y_from_w, y_direct, abs_error at 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,w,y_from_w,y_direct,abs_error\n")
        for row in zip(eq.times, eq.w, eq.y_from_w, eq.y_direct, eq.abs_error):
            fh.write(",".join(format_float(v) for v in row) + "\n")
