"""Radial energy evaluation, descent verification, and ISS certification.

The quartic energy V(y) = (||y||^2 - 1)^2 / 4 measures deviation from the
unit activity shell.  Its rate along a flow is evaluated analytically from
the field (exact chain rule), never by differencing trajectories, so the
certificate stays independent of integrator error; the finite-difference
comparison lives in the tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .core import as_state_array
from .errors import ConfigInvalid, LengthMismatch
from .integrate import Trajectory


def lyapunov_value(y) -> float:
    """Quartic radial energy V(y) = ((||y||^2 - 1)^2) / 4; zero on the shell."""
    y = as_state_array(y)
    r2 = float(y @ y)
    return 0.25 * (r2 - 1.0) ** 2


def lyapunov_rate(y, field_value) -> float:
    """dV/dt = (||y||^2 - 1) * y . f  for a field value f at y (chain rule)."""
    y = as_state_array(y)
    f = as_state_array(field_value)
    if f.shape != y.shape:
        raise LengthMismatch(f"field value shape {f.shape} != state shape {y.shape}")
    r2 = float(y @ y)
    return (r2 - 1.0) * float(y @ f)


@dataclass(frozen=True)
class IssConstants:
    """Constants of the dissipation inequality

        dV/dt <= -c_contract*(||y||^2-1)^2 + c_a*||A||^2 + c_x*||x||^2.

    c_contract aggregates leak + homeostatic contraction net of feedback;
    ``lipschitz`` stores the sector-bound aggregates (L_y, L_A, L_x) used to
    derive it, values left to calibration.
    """

    c_contract: float
    c_a: float = 0.0
    c_x: float = 0.0
    lipschitz: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        vals = (self.c_contract, self.c_a, self.c_x, *self.lipschitz)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigInvalid("ISS constants must be finite")
        if self.c_contract <= 0:
            raise ConfigInvalid("a valid certificate needs c_contract > 0")
        if self.c_a < 0 or self.c_x < 0:
            raise ConfigInvalid("c_a and c_x must be nonnegative")


@dataclass(frozen=True)
class IssReport:
    certified: bool
    sup_norm: float
    violations: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if self.certified != (len(self.violations) == 0):
            raise ConfigInvalid("certified flag inconsistent with violations")

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "sup_norm": self.sup_norm,
            "violations": [
                {"t": t, "rate": r, "bound": b} for t, r, b in self.violations
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def iss_certificate(
    traj: Trajectory,
    trace_norms,
    input_norms,
    k: IssConstants,
    tol: float = 1e-8,
) -> IssReport:
    """Check the dissipation inequality at every trajectory sample.

    ``trace_norms`` and ``input_norms`` are ||A(t)|| and ||x(t)|| aligned with
    traj.times.  The rate is computed from the field samples the trajectory
    carries; a violation is recorded wherever rate > bound + tol.  A
    zero-duration trajectory (a single sample) certifies vacuously.
    """
    trace_norms = np.asarray(trace_norms, dtype=float)
    input_norms = np.asarray(input_norms, dtype=float)
    n = len(traj)
    if len(trace_norms) != n or len(input_norms) != n:
        raise LengthMismatch(
            f"norm sequences ({len(trace_norms)}, {len(input_norms)}) "
            f"not aligned with {n} samples"
        )
    sup_norm = float(np.max(traj.norms)) if n else 0.0
    if n < 2:
        return IssReport(certified=True, sup_norm=sup_norm)
    if traj.derivs is None:
        raise ConfigInvalid("trajectory carries no field samples; rerun simulate()")

    violations = []
    for i in range(n):
        y = traj.states[i]
        r2 = float(y @ y)
        rate = lyapunov_rate(y, traj.derivs[i])
        bound = (
            -k.c_contract * (r2 - 1.0) ** 2
            + k.c_a * trace_norms[i] ** 2
            + k.c_x * input_norms[i] ** 2
        )
        if rate > bound + tol:
            violations.append((float(traj.times[i]), rate, bound))
    return IssReport(
        certified=not violations, sup_norm=sup_norm, violations=tuple(violations)
    )


def fit_iss_constants(calibration, c_contract: float = 1.0) -> IssConstants:
    """Fit the smallest (c_a, c_x) covering the inequality on calibration runs.

    ``calibration`` is an iterable of (trajectory, trace_norms, input_norms).
    Least squares on the positive part of the slack fixes the shape of the
    constants, then a single scale factor lifts them until every sample is
    covered.  Raises ConfigInvalid when a sample demands positive slack with
    vanishing trace and input (no constants can certify that trajectory).
    """
    slack, a2, x2 = [], [], []
    for traj, trace_norms, input_norms in calibration:
        trace_norms = np.asarray(trace_norms, dtype=float)
        input_norms = np.asarray(input_norms, dtype=float)
        if len(trace_norms) != len(traj) or len(input_norms) != len(traj):
            raise LengthMismatch("calibration sequences not aligned with trajectory")
        if traj.derivs is None:
            raise ConfigInvalid("calibration trajectory carries no field samples")
        for i in range(len(traj)):
            y = traj.states[i]
            r2 = float(y @ y)
            rate = lyapunov_rate(y, traj.derivs[i])
            slack.append(rate + c_contract * (r2 - 1.0) ** 2)
            a2.append(trace_norms[i] ** 2)
            x2.append(input_norms[i] ** 2)

    slack = np.asarray(slack)
    a2 = np.asarray(a2)
    x2 = np.asarray(x2)
    if not len(slack) or np.all(slack <= 0.0):
        return IssConstants(c_contract=c_contract)

    design = np.column_stack([a2, x2])
    target = np.clip(slack, 0.0, None)
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    c_a, c_x = (max(float(c), 0.0) for c in coef)

    covered = c_a * a2 + c_x * x2
    need = slack > 0.0
    tiny = 1e-15 * max(1.0, float(np.max(slack)))
    infeasible = need & (covered <= tiny)
    if np.any(infeasible):
        raise ConfigInvalid(
            "positive slack with vanishing trace and input; "
            "cannot certify with this c_contract"
        )
    scale = float(np.max(slack[need] / covered[need]))
    if scale > 1.0:
        c_a *= scale * (1.0 + 1e-9)
        c_x *= scale * (1.0 + 1e-9)
    return IssConstants(c_contract=c_contract, c_a=c_a, c_x=c_x)


def random_rotating_drive(rng: np.random.Generator, d: int, sup: float = 1.0):
    """Smooth random drive with constant norm in [sup/2, sup].

    Rotates in a random orthonormal plane at a random rate, so ||x(t)|| is
    constant (bounded above by ``sup`` and away from zero, which keeps fitted
    certificate constants finite).
    """
    rho = float(rng.uniform(0.5 * sup, sup))
    omega = float(rng.uniform(0.5, 2.0))
    phase = float(rng.uniform(0.0, 2.0 * math.pi))
    if d >= 2:
        q, _ = np.linalg.qr(rng.standard_normal((d, 2)))
        u, v = q[:, 0], q[:, 1]
    else:
        u = np.ones(1)
        v = np.zeros(1)

    def x_of_t(t: float) -> np.ndarray:
        ang = omega * t + phase
        return rho * (math.cos(ang) * u + math.sin(ang) * v)

    return x_of_t
