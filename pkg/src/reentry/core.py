"""Core state, parameters, and vector fields of the homeostatic reentry network.

The network couples three mechanisms around a leaky population state y:

* reentrant feedback  gamma * W ( g(||y||) * y )  through a learned operator W,
  with the population-level gain  g(r) = 1 / (1 + beta*(r^2 - 1)) that
  attenuates feedback when the activity radius leaves its target shell;
* a radial homeostatic field  -kappa * (||y||^2 - theta^2) * y  that restores
  the activity norm toward theta;
* a fast associative trace A with exponential decay and Hebbian drive,
  dA/dt = -lambda_a * A + Phi(y, x).

The continuous relaxation of the discrete update is

    dy/dt = -y + gamma * W y + g_h(y) + c,

whose autonomous radial equilibrium (antisymmetric W, c = 0) sits at
r* = theta * sqrt(1 - 1/kappa) for kappa > 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    GainSingularity,
    NonFiniteJacobian,
)

GAIN_GUARD = 1e-6


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateVector:
    """Population activity y with its derived radius r = ||y||."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise DimensionMismatch(f"state must be a 1-D vector, got shape {y.shape}")
        object.__setattr__(self, "y", y)

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.y))

    @property
    def d(self) -> int:
        return self.y.size

    def __array__(self, dtype=None):
        return np.asarray(self.y, dtype=dtype)


def as_state_array(y) -> np.ndarray:
    """Accept a StateVector or any 1-D array-like and return a float vector."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D state, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the reentry dynamics.

    gamma    -- reentry gain (>= 0)
    beta     -- gain steepness (> 0)
    kappa    -- homeostatic rate (>= 0)
    theta    -- target activity radius (> 0)
    lambda_a -- fast-weight trace decay (> 0)
    """

    gamma: float
    beta: float
    kappa: float
    theta: float = 1.0
    lambda_a: float = 1.0

    def __post_init__(self):
        vals = (self.gamma, self.beta, self.kappa, self.theta, self.lambda_a)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigInvalid(f"non-finite model parameter in {vals}")
        if self.gamma < 0:
            raise ConfigInvalid(f"gamma must be >= 0, got {self.gamma}")
        if self.beta <= 0:
            raise ConfigInvalid(f"beta must be > 0, got {self.beta}")
        if self.kappa < 0:
            raise ConfigInvalid(f"kappa must be >= 0, got {self.kappa}")
        if self.theta <= 0:
            raise ConfigInvalid(f"theta must be > 0, got {self.theta}")
        if self.lambda_a <= 0:
            raise ConfigInvalid(f"lambda_a must be > 0, got {self.lambda_a}")


@dataclass(frozen=True)
class ReentryOperator:
    """A reentry matrix W with its cached antisymmetric/symmetric parts.

    W may be the raw operator or the effective one (block-Jacobian times raw);
    the split W = W_anti + W_sym separates rotational flow from stretching.
    """

    w: np.ndarray
    w_anti: np.ndarray = field(init=False, repr=False)
    w_sym: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatch(f"operator must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ConfigInvalid("operator has non-finite entries")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "w_anti", (w - w.T) / 2.0)
        object.__setattr__(self, "w_sym", (w + w.T) / 2.0)

    @property
    def d(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class FastWeightTrace:
    """Fast associative memory A, optionally factored as A = U^T V.

    hebb_rule selects the drive Phi(y, x): "outer" (Hebbian outer product
    y x^T, the default) or "zero" (pure decay).
    """

    a: np.ndarray
    rank_factors: tuple[np.ndarray, np.ndarray] | None = None
    hebb_rule: str = "outer"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"trace must be square, got shape {a.shape}")
        object.__setattr__(self, "a", a)
        if self.hebb_rule not in ("outer", "zero"):
            raise ConfigInvalid(f"unknown hebb rule {self.hebb_rule!r}")
        if self.rank_factors is not None:
            u, v = (np.asarray(m, dtype=float) for m in self.rank_factors)
            if u.shape != v.shape or u.shape[1] != a.shape[0]:
                raise DimensionMismatch(
                    f"rank factors {u.shape}, {v.shape} do not match trace {a.shape}"
                )
            if np.max(np.abs(u.T @ v - a)) > 1e-10:
                raise ConfigInvalid("rank factors do not reconstruct the trace")
            object.__setattr__(self, "rank_factors", (u, v))

    @classmethod
    def zeros(cls, d: int, hebb_rule: str = "outer") -> "FastWeightTrace":
        return cls(np.zeros((d, d)), hebb_rule=hebb_rule)

    def drive(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Phi(y, x) for the configured rule."""
        if self.hebb_rule == "zero":
            return np.zeros_like(self.a)
        return np.outer(y, x)


@dataclass(frozen=True)
class DriveSpec:
    """External input: a fast embedding signal x_ex(t) and its slow drive c."""

    x_ex: Callable[[float], np.ndarray]
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))

    @classmethod
    def constant(cls, vec) -> "DriveSpec":
        c = np.asarray(vec, dtype=float)
        return cls(x_ex=lambda t: c, c=c)

    def at(self, t: float) -> np.ndarray:
        x = np.asarray(self.x_ex(t), dtype=float)
        if x.shape != self.c.shape:
            raise DimensionMismatch(
                f"drive emitted shape {x.shape}, expected {self.c.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ConfigInvalid(f"drive emitted non-finite components at t={t}")
        return x


@dataclass(frozen=True)
class BlockMapping:
    """Simplified block transformation y = H(x).

    Kinds:
      "linear"            H(x) = M x
      "saturating-affine" H(x) = tanh(M x + b)
      "custom"            H(x) = fn(x)

    The full transformer block is out of scope; these kinds are enough to
    exercise the first-order expansion and the effective operator.  For the
    linear and saturating-affine kinds a fast-weight trace contributes an
    additive readout A x on top of H(x); custom mappings own their output
    entirely.
    """

    kind: str
    m: np.ndarray | None = None
    b: np.ndarray | None = None
    fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "saturating-affine", "custom"):
            raise ConfigInvalid(f"unknown block mapping kind {self.kind!r}")
        if self.kind == "custom":
            if self.fn is None:
                raise ConfigInvalid("custom mapping requires fn")
            return
        if self.m is None:
            raise ConfigInvalid(f"{self.kind} mapping requires a matrix")
        m = np.asarray(self.m, dtype=float)
        object.__setattr__(self, "m", m)
        if self.kind == "saturating-affine":
            b = np.zeros(m.shape[0]) if self.b is None else np.asarray(self.b, float)
            if b.shape != (m.shape[0],):
                raise DimensionMismatch(
                    f"bias shape {b.shape} does not match matrix {m.shape}"
                )
            object.__setattr__(self, "b", b)

    @classmethod
    def linear(cls, m) -> "BlockMapping":
        return cls(kind="linear", m=np.asarray(m, dtype=float))

    @classmethod
    def identity(cls, d: int) -> "BlockMapping":
        return cls.linear(np.eye(d))

    @classmethod
    def saturating_affine(cls, m, b=None) -> "BlockMapping":
        return cls(kind="saturating-affine", m=np.asarray(m, dtype=float), b=b)

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "BlockMapping":
        return cls(kind="custom", fn=fn)

    @property
    def supports_trace_readout(self) -> bool:
        return self.kind in ("linear", "saturating-affine")

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return self.m @ x
        if self.kind == "saturating-affine":
            return np.tanh(self.m @ x + self.b)
        out = np.asarray(self.fn(x), dtype=float)
        if not np.all(np.isfinite(out)):
            raise ConfigInvalid("custom mapping produced non-finite output")
        return out

    def jacobian(self, x: np.ndarray, fd_step: float | None = None) -> np.ndarray:
        """Jacobian of the mapping at x.

        Linear mappings are differentiated analytically; everything else uses
        central finite differences with step fd_step (default scales with the
        input magnitude, a standard compromise between truncation and
        round-off).
        """
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return self.m.copy()
        if fd_step is None:
            fd_step = 1e-5 * (1.0 + float(np.linalg.norm(x)))
        if fd_step <= 0:
            raise ConfigInvalid(f"fd_step must be > 0, got {fd_step}")
        n_out = self.apply(x).size
        jac = np.empty((n_out, x.size))
        for j in range(x.size):
            xp = x.copy()
            xm = x.copy()
            xp[j] += fd_step
            xm[j] -= fd_step
            quot = (self.apply(xp) - self.apply(xm)) / (2.0 * fd_step)
            if not np.all(np.isfinite(quot)):
                raise NonFiniteJacobian(
                    f"finite-difference column {j} is non-finite at x={x}"
                )
            jac[:, j] = quot
        return jac


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def gain(r: float, beta: float) -> float:
    """Homeostatic gain g(r) = 1 / (1 + beta*(r^2 - 1)).

    Raises GainSingularity when the denominator drops below the guard; the
    dynamics are meant to operate near r ~ 1 where g stays positive.
    """
    if beta <= 0:
        raise ConfigInvalid(f"beta must be > 0, got {beta}")
    if r < 0:
        raise ConfigInvalid(f"radius must be >= 0, got {r}")
    den = 1.0 + beta * (r * r - 1.0)
    if den < GAIN_GUARD:
        raise GainSingularity(r, beta, den)
    return 1.0 / den


def homeostatic_field(y, kappa: float, theta: float = 1.0) -> np.ndarray:
    """Radial restoring force -kappa * (||y||^2 - theta^2) * y."""
    y = as_state_array(y)
    r2 = float(y @ y)
    return -kappa * (r2 - theta * theta) * y


def vector_field(y, op: ReentryOperator, params: ModelParams, c=None) -> np.ndarray:
    """Continuous flow  -y + gamma * W y + g_h(y) + c.

    With c = 0 this is the autonomous intrinsic flow.
    """
    y = as_state_array(y)
    if y.size != op.d:
        raise DimensionMismatch(f"state dim {y.size} != operator dim {op.d}")
    out = -y + params.gamma * (op.w @ y)
    out += homeostatic_field(y, params.kappa, params.theta)
    if c is not None:
        c = np.asarray(c, dtype=float)
        if c.shape != y.shape:
            raise DimensionMismatch(f"drive shape {c.shape} != state shape {y.shape}")
        out = out + c
    return out


def reentry_input(x_ex, y_prev, op: ReentryOperator, params: ModelParams) -> np.ndarray:
    """Effective block input  x_ex + gamma * W * g(||y_prev||) * y_prev.

    With gamma = 0 this reduces to the purely feed-forward input x_ex.
    """
    x_ex = as_state_array(x_ex)
    y_prev = as_state_array(y_prev)
    if y_prev.size != op.d:
        raise DimensionMismatch(f"state dim {y_prev.size} != operator dim {op.d}")
    g = gain(float(np.linalg.norm(y_prev)), params.beta)
    return x_ex + params.gamma * (op.w @ (g * y_prev))


def effective_operator(
    h: BlockMapping, x_ex, w_r, fd_step: float | None = None
) -> ReentryOperator:
    """Effective reentry operator: the block Jacobian at x_ex times W_r.

    Composing the raw operator with the local linearization of the block
    mapping moves the feedback loop into activity space; linear mappings are
    handled exactly, others by central finite differences.
    """
    x_ex = as_state_array(x_ex)
    w_r = np.asarray(w_r, dtype=float)
    jac = h.jacobian(x_ex, fd_step=fd_step)
    if jac.shape[1] != w_r.shape[0]:
        raise DimensionMismatch(
            f"block Jacobian {jac.shape} incompatible with operator {w_r.shape}"
        )
    return ReentryOperator(jac @ w_r)


def discrete_step(
    x_ex,
    y_prev,
    trace: FastWeightTrace,
    h: BlockMapping,
    op: ReentryOperator,
    params: ModelParams,
    dt: float,
) -> tuple[StateVector, FastWeightTrace]:
    """One discrete network update.

    Computes the reentrant input x_t, maps it through the block (plus the
    additive fast-weight readout A x_t where the mapping kind supports it),
    then advances the trace by an explicit Euler step of
    dA/dt = -lambda_a * A + Phi(y_t, x_t).
    """
    if dt <= 0:
        raise ConfigInvalid(f"dt must be > 0, got {dt}")
    x_t = reentry_input(x_ex, y_prev, op, params)
    y_t = h.apply(x_t)
    if h.supports_trace_readout:
        y_t = y_t + trace.a @ x_t
    a_next = trace.a + dt * (-params.lambda_a * trace.a + trace.drive(y_t, x_t))
    return StateVector(y_t), FastWeightTrace(a_next, hebb_rule=trace.hebb_rule)


# ---------------------------------------------------------------------------
# field builders and operator generators
# ---------------------------------------------------------------------------

def make_field(op: ReentryOperator, params: ModelParams, drive=None):
    """Closure f(t, y) for the continuous flow, with optional drive.

    drive may be None, a constant vector, or a callable t -> vector.
    """
    if drive is None:
        def f(t: float, y: np.ndarray) -> np.ndarray:
            return vector_field(y, op, params)
    elif callable(drive):
        def f(t: float, y: np.ndarray) -> np.ndarray:
            return vector_field(y, op, params, c=drive(t))
    else:
        c = np.asarray(drive, dtype=float)

        def f(t: float, y: np.ndarray) -> np.ndarray:
            return vector_field(y, op, params, c=c)

    return f


def coupled_field(op: ReentryOperator, params: ModelParams, x_of_t):
    """Flow over the stacked state z = [y, vec(A)] with fast-weight coupling.

    The y-path takes f(Wy; x, A) = gamma*W y + A x + x (reentry plus an
    additive fast-weight readout of the drive), the trace follows
    dA/dt = -lambda_a*A + y x^T.  Used to exercise the input-to-state
    stability certificates.
    """
    d = op.d

    def f(t: float, z: np.ndarray) -> np.ndarray:
        y = z[:d]
        a = z[d:].reshape(d, d)
        x = np.asarray(x_of_t(t), dtype=float)
        dy = -y + params.gamma * (op.w @ y) + a @ x + x
        dy += homeostatic_field(y, params.kappa, params.theta)
        da = -params.lambda_a * a + np.outer(y, x)
        return np.concatenate([dy, da.ravel()])

    return f


def split_coupled_state(z: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a stacked [y, vec(A)] state into (y, A)."""
    return z[:d], z[d:].reshape(d, d)


def rotation_generator(d: int = 2) -> np.ndarray:
    """Block-diagonal 90-degree rotation generator; requires even dimension."""
    if d < 2 or d % 2 != 0:
        raise DimensionMismatch(f"rotation generator needs even d >= 2, got {d}")
    w = np.zeros((d, d))
    for k in range(0, d, 2):
        w[k, k + 1] = -1.0
        w[k + 1, k] = 1.0
    return w


def random_antisymmetric(rng: np.random.Generator, d: int) -> np.ndarray:
    g = rng.standard_normal((d, d))
    return (g - g.T) / 2.0


def random_symmetric(rng: np.random.Generator, d: int) -> np.ndarray:
    g = rng.standard_normal((d, d))
    return (g + g.T) / 2.0


def mixed_matrix(rng: np.random.Generator, d: int, mu: float = 0.5) -> np.ndarray:
    """Random antisymmetric-plus-scaled-symmetric mixture."""
    return random_antisymmetric(rng, d) + mu * random_symmetric(rng, d)
