"""Parameter-space sweeps: critical surface and effective-gain stability map.

The predicted class per cell comes from the effective reentry gain
r_e = gamma * g(radius; beta) * ||W||_2, stable iff r_e < 1, with the
critical operator norm ||W||_crit = 1 / (gamma * g(radius; beta)) as its
exact boundary.

The optional empirical class simulates the reentry loop linearized at the
sweep's slice radius: the iteration y <- gamma * g(radius; beta) * W y from
random initial states on the slice shell, classified unstable when the norm
exceeds ten times the homeostatic radius (or leaves the finite range) before
the horizon.  Nonlinear flows with state-dependent gain or the homeostatic
field are globally self-limiting and never cross such a threshold, so the
frozen-gain loop is the system whose divergence the map actually describes.
Cells are independent; all of them are advanced together in one vectorized
batch with deterministic per-cell substreams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import rng as rngmod
from .core import ModelParams, gain, mixed_matrix
from .errors import ConfigInvalid, GainSingularity
from .integrate import format_float
from .spectral import StabilityGrid, spectral_norm

LOOP_DT = 1e-2           # one loop iterate per integrator-default time step
BLOWUP_FACTOR = 10.0     # divergence threshold, times the homeostatic radius
ENSEMBLE_MU = 0.5        # symmetric admixture in the default operator family


@dataclass(frozen=True)
class SweepSpec:
    gamma_axis: np.ndarray
    beta_axis: np.ndarray
    wnorm_axis: np.ndarray
    fixed_radius: float = 1.1
    empirical: bool = False
    seeds: int = 5
    horizon: float = 50.0
    dim: int = 2

    def __post_init__(self):
        for name in ("gamma_axis", "beta_axis", "wnorm_axis"):
            axis = np.asarray(getattr(self, name), dtype=float)
            if axis.size == 0:
                raise ConfigInvalid(f"{name} must be nonempty")
            if axis.size > 1 and not np.all(np.diff(axis) > 0):
                raise ConfigInvalid(f"{name} must be strictly increasing")
            object.__setattr__(self, name, axis)
        if self.fixed_radius <= 0:
            raise ConfigInvalid(f"fixed_radius must be > 0, got {self.fixed_radius}")
        if self.seeds < 1:
            raise ConfigInvalid(f"seeds must be >= 1, got {self.seeds}")
        if self.horizon <= 0:
            raise ConfigInvalid(f"horizon must be > 0, got {self.horizon}")
        if self.dim < 2:
            raise ConfigInvalid(f"dim must be >= 2, got {self.dim}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.gamma_axis), len(self.beta_axis), len(self.wnorm_axis))

    def to_dict(self) -> dict:
        return {
            "gamma_axis": self.gamma_axis.tolist(),
            "beta_axis": self.beta_axis.tolist(),
            "wnorm_axis": self.wnorm_axis.tolist(),
            "fixed_radius": self.fixed_radius,
            "empirical": self.empirical,
            "seeds": self.seeds,
            "horizon": self.horizon,
            "dim": self.dim,
        }


def critical_norm(gamma: float, beta: float, radius: float) -> float:
    """Critical operator norm 1 / (gamma * g(radius; beta)).

    gamma = 0 puts the boundary at infinity, reported as the +inf sentinel.
    """
    if gamma < 0:
        raise ConfigInvalid(f"gamma must be >= 0, got {gamma}")
    g = gain(radius, beta)
    if gamma == 0.0:
        return math.inf
    return 1.0 / (gamma * g)


def effective_gain(gamma: float, beta: float, radius: float, w_norm: float) -> float:
    """Effective reentry gain r_e = gamma * g(radius; beta) * w_norm."""
    return gamma * gain(radius, beta) * w_norm


def mixed_operator_family(mu: float = ENSEMBLE_MU):
    """Default ensemble: W = s*(Q_a + mu*Q_s) rescaled so ||W||_2 = w_norm.

    Q_a random antisymmetric and Q_s random symmetric (Gaussian halves) mix
    rotational and expansive behavior.
    """

    def draw(rng: np.random.Generator, d: int, w_norm: float) -> np.ndarray:
        if w_norm == 0.0:
            return np.zeros((d, d))
        w0 = mixed_matrix(rng, d, mu=mu)
        s = spectral_norm(w0)
        if s == 0.0:
            return np.zeros((d, d))
        return w0 * (w_norm / s)

    return draw


def spd_operator_family():
    """Symmetric positive-definite draws rescaled to the requested norm."""

    def draw(rng: np.random.Generator, d: int, w_norm: float) -> np.ndarray:
        if w_norm == 0.0:
            return np.zeros((d, d))
        g = rng.standard_normal((d, d))
        w0 = g @ g.T + 0.1 * np.eye(d)
        return w0 * (w_norm / spectral_norm(w0))

    return draw


def _empirical_classes(
    spec: SweepSpec, multipliers: np.ndarray, op_family, master_seed: int
) -> np.ndarray:
    """True (stable) per cell from the batched frozen-gain loop.

    multipliers[i, j] = gamma_i * g(radius; beta_j); NaN marks cells whose
    gain could not be evaluated (skipped, left unstable=None-ish False).
    """
    n_gamma, n_beta, n_w = spec.shape
    d = spec.dim
    runs_m = []
    runs_y0 = []
    run_cell = []
    for i in range(n_gamma):
        for j in range(n_beta):
            mult = multipliers[i, j]
            for k in range(n_w):
                if not np.isfinite(mult):
                    continue
                w_norm = float(spec.wnorm_axis[k])
                for s in range(spec.seeds):
                    stream = rngmod.stream(master_seed, "sweep-cell", i, j, k, s)
                    w = op_family(stream, d, w_norm)
                    v = stream.standard_normal(d)
                    v /= np.linalg.norm(v)
                    runs_m.append(mult * w)
                    runs_y0.append(spec.fixed_radius * v)
                    run_cell.append((i, j, k))

    stable = np.ones(spec.shape, dtype=bool)
    if not runs_m:
        return stable

    m_batch = np.asarray(runs_m)
    y = np.asarray(runs_y0)
    alive = np.ones(len(y), dtype=bool)
    diverged = np.zeros(len(y), dtype=bool)
    threshold = BLOWUP_FACTOR * 1.0  # ten times the unit homeostatic radius
    steps = int(round(spec.horizon / LOOP_DT))
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            y[alive] = np.einsum("nij,nj->ni", m_batch[alive], y[alive])
            r2 = np.einsum("nd,nd->n", y, y)
            bad = alive & (~np.isfinite(r2) | (r2 > threshold * threshold))
            diverged |= bad
            # decayed runs cannot come back either; freeze them too
            settled = alive & np.isfinite(r2) & (r2 < 1e-24)
            alive &= ~(bad | settled)
            if not alive.any():
                break
    for (i, j, k), dv in zip(run_cell, diverged):
        if dv:
            stable[i, j, k] = False
    return stable


def sweep_grid(
    spec: SweepSpec,
    op_family=None,
    master_seed: int = 0,
    params: ModelParams | None = None,
) -> StabilityGrid:
    """Effective-gain grid over (gamma, beta, w_norm), optionally simulated.

    Per cell: r_e, predicted class (r_e < 1) and, when spec.empirical, the
    simulated class over spec.seeds random initial conditions.  Cell-level
    gain failures are recorded in metadata and the sweep continues.
    """
    op_family = op_family or mixed_operator_family()
    n_gamma, n_beta, n_w = spec.shape
    values = np.empty(spec.shape)
    failed: list[tuple[int, int, int]] = []
    multipliers = np.empty((n_gamma, n_beta))
    for i, gamma in enumerate(spec.gamma_axis):
        for j, beta in enumerate(spec.beta_axis):
            try:
                multipliers[i, j] = gamma * gain(spec.fixed_radius, beta)
            except GainSingularity:
                multipliers[i, j] = np.nan
            for k, w_norm in enumerate(spec.wnorm_axis):
                if np.isfinite(multipliers[i, j]):
                    values[i, j, k] = multipliers[i, j] * w_norm
                else:
                    values[i, j, k] = np.nan
                    failed.append((i, j, k))

    predicted = values < 1.0
    empirical = None
    if spec.empirical:
        empirical = _empirical_classes(spec, multipliers, op_family, master_seed)

    metadata = {
        "master_seed": master_seed,
        "loop_dt": LOOP_DT,
        "loop_steps": int(round(spec.horizon / LOOP_DT)),
        "blowup_factor": BLOWUP_FACTOR,
        "ensemble": f"antisymmetric + {ENSEMBLE_MU}*symmetric, rescaled to w_norm",
        "fixed_radius": spec.fixed_radius,
        "seeds": spec.seeds,
        "dim": spec.dim,
        "empirical_model": "frozen-gain reentry loop at the slice radius",
    }
    if failed:
        metadata["failed_cells"] = failed
    return StabilityGrid(
        axis_names=("gamma", "beta", "w_norm"),
        axes=(spec.gamma_axis, spec.beta_axis, spec.wnorm_axis),
        values=values,
        value_kind="r_e",
        predicted=predicted,
        empirical=empirical,
        params=params,
        metadata=metadata,
    )


def write_critical_surface_csv(gamma_axis, beta_axis, radius: float, path) -> None:
    """Critical-surface CSV: gamma, beta, w_crit over the parameter plane."""
    gamma_axis = np.asarray(gamma_axis, dtype=float)
    beta_axis = np.asarray(beta_axis, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gamma,beta,w_crit\n")
        for gamma in gamma_axis:
            for beta in beta_axis:
                w_crit = critical_norm(float(gamma), float(beta), radius)
                fh.write(
                    f"{format_float(gamma)},{format_float(beta)},{format_float(w_crit)}\n"
                )


def write_stability_map_csv(grid: StabilityGrid, path) -> None:
    """Effective-gain map CSV: beta, w_norm, r_e, predicted[, empirical].

    A gamma column is prepended when the sweep explored more than one gamma.
    """
    if grid.axis_names[:3] != ("gamma", "beta", "w_norm"):
        raise ConfigInvalid("expected a parameter sweep grid")
    single_gamma = len(grid.axes[0]) == 1
    cols = [] if single_gamma else ["gamma"]
    cols += ["beta", "w_norm", "r_e", "predicted_stable"]
    if grid.empirical is not None:
        cols.append("empirical_stable")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for idx in np.ndindex(grid.values.shape):
            row = []
            if not single_gamma:
                row.append(format_float(grid.axes[0][idx[0]]))
            row.append(format_float(grid.axes[1][idx[1]]))
            row.append(format_float(grid.axes[2][idx[2]]))
            row.append(format_float(grid.values[idx]))
            row.append(str(int(grid.predicted[idx])))
            if grid.empirical is not None:
                row.append(str(int(grid.empirical[idx])))
            fh.write(",".join(row) + "\n")
