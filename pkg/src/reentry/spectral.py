"""Jacobian assembly, dense eigenvalue computation, and stability maps.

The eigensolver is a self-contained dense real solver: Householder reduction
to upper Hessenberg form followed by the Francis implicit double-shift QR
iteration with deflation and exceptional shifts (trailing 2x2 blocks are
solved in closed form, so complex eigenvalues emerge in exactly conjugate
pairs).  It is capped at d <= 64; the analyses here run at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .core import ModelParams, ReentryOperator, as_state_array
from .errors import DimensionMismatch, NoConvergence
from .integrate import format_float

_EPS = float(np.finfo(float).eps)
_DENSE_BUDGET = 64


# ---------------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------------

def hessenberg(a: np.ndarray) -> np.ndarray:
    """Orthogonal similarity reduction to upper Hessenberg form (Householder)."""
    h = np.array(a, dtype=float, copy=True)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        norm_x = float(np.linalg.norm(x))
        if norm_x == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(norm_x, x[0])
        vnorm = float(np.linalg.norm(v))
        if vnorm == 0.0:
            continue
        v /= vnorm
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _hqr(h: np.ndarray, cap: int = 30) -> list[complex]:
    """Eigenvalues of an upper Hessenberg matrix (Francis double-shift QR).

    Classic hqr scheme: scan for negligible subdiagonals, deflate converged
    1x1/2x2 trailing blocks (2x2 via the closed-form quadratic, which keeps
    conjugate pairs exact), otherwise run an implicit double-shift sweep.
    Exceptional ad-hoc shifts fire after 10 and 20 stalled iterations; ``cap``
    stalled iterations on one block raise NoConvergence with the partial
    spectrum attached.
    """
    h = np.array(h, dtype=float, copy=True)
    n = h.shape[0]
    eig: list[complex] = []

    anorm = 0.0
    for i in range(n):
        anorm += float(np.sum(np.abs(h[i, max(i - 1, 0):])))
    if anorm == 0.0:
        return [0j] * n

    nn = n - 1
    t = 0.0  # accumulated exceptional shifts
    p = q = r = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = 0
            for ll in range(nn, 0, -1):
                s = abs(h[ll - 1, ll - 1]) + abs(h[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(h[ll, ll - 1]) <= _EPS * s:
                    h[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = h[nn, nn]
            if l == nn:
                eig.append(complex(x + t, 0.0))
                nn -= 1
                break
            y = h[nn - 1, nn - 1]
            w = h[nn, nn - 1] * h[nn - 1, nn]
            if l == nn - 1:
                pp = 0.5 * (y - x)
                qq = pp * pp + w
                zz = math.sqrt(abs(qq))
                x += t
                if qq >= 0.0:
                    zz = pp + math.copysign(zz, pp)
                    r1 = x + zz
                    r2 = r1 if zz == 0.0 else x - w / zz
                    eig.append(complex(r1, 0.0))
                    eig.append(complex(r2, 0.0))
                else:
                    eig.append(complex(x + pp, zz))
                    eig.append(complex(x + pp, -zz))
                nn -= 2
                break
            if its == cap:
                raise NoConvergence(
                    f"QR iteration stalled with {nn + 1} rows active", partial=eig
                )
            if its == 10 or its == 20:
                t += x
                for i in range(nn + 1):
                    h[i, i] -= x
                s = abs(h[nn, nn - 1]) + abs(h[nn - 1, nn - 2])
                y = x = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            # seek two consecutive small subdiagonals: start row m of the bulge
            m = l
            for mm in range(nn - 2, l - 1, -1):
                z = h[mm, mm]
                r = x - z
                s = y - z
                p = (r * s - w) / h[mm + 1, mm] + h[mm, mm + 1]
                q = h[mm + 1, mm + 1] - z - r - s
                r = h[mm + 2, mm + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if mm == l:
                    m = mm
                    break
                u = abs(h[mm, mm - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(h[mm - 1, mm - 1]) + abs(z) + abs(h[mm + 1, mm + 1]))
                if u <= _EPS * v:
                    m = mm
                    break
            for i in range(m + 2, nn + 1):
                h[i, i - 2] = 0.0
                if i != m + 2:
                    h[i, i - 3] = 0.0
            # double QR sweep: chase the bulge down rows m..nn
            for k in range(m, nn):
                if k != m:
                    p = h[k, k - 1]
                    q = h[k + 1, k - 1]
                    r = h[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        h[k, k - 1] = -h[k, k - 1]
                else:
                    h[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                for j in range(k, nn + 1):
                    p = h[k, j] + q * h[k + 1, j]
                    if k != nn - 1:
                        p += r * h[k + 2, j]
                        h[k + 2, j] -= p * z
                    h[k + 1, j] -= p * y
                    h[k, j] -= p * x
                mmin = nn if nn < k + 3 else k + 3
                for i in range(l, mmin + 1):
                    p = x * h[i, k] + y * h[i, k + 1]
                    if k != nn - 1:
                        p += z * h[i, k + 2]
                        h[i, k + 2] -= p * r
                    h[i, k + 1] -= p * q
                    h[i, k] -= p
    return eig


@dataclass(frozen=True)
class SpectralReport:
    """Full spectrum of a real matrix with its stability verdict."""

    matrix: np.ndarray
    eigenvalues: tuple[complex, ...]
    abscissa: float = dc_field(init=False)
    stable: bool = dc_field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", tuple(self.eigenvalues))
        if len(self.eigenvalues) != self.matrix.shape[0]:
            raise DimensionMismatch("eigenvalue count does not match the matrix size")
        absc = max(ev.real for ev in self.eigenvalues)
        object.__setattr__(self, "abscissa", absc)
        object.__setattr__(self, "stable", absc < 0.0)


def eigenvalues(m) -> SpectralReport:
    """Spectrum of a real square matrix via Hessenberg reduction + shifted QR."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {m.shape}")
    n = m.shape[0]
    if n < 1 or n > _DENSE_BUDGET:
        raise DimensionMismatch(f"dense eigensolver budget is 1..{_DENSE_BUDGET}, got {n}")
    if not np.all(np.isfinite(m)):
        raise DimensionMismatch("matrix has non-finite entries")
    if n == 1:
        eig = [complex(m[0, 0], 0.0)]
    else:
        eig = _hqr(hessenberg(m) if n > 2 else m)
    return SpectralReport(matrix=m, eigenvalues=eig)


def spectral_norm(m, max_iter: int = 200, rel_tol: float = 1e-10) -> float:
    """Largest singular value by power iteration on W^T W.

    Runs at most ``max_iter`` iterations or until the Rayleigh quotient moves
    by less than ``rel_tol`` relatively, whichever comes first.  Deterministic
    seeded start vector.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {m.shape}")
    if not np.any(m):
        return 0.0
    gram = m.T @ m
    n = gram.shape[0]
    v = np.random.default_rng(0x5EED0_F00D).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = float(v @ gram @ v)
    for _ in range(max_iter):
        w = gram @ v
        wn = float(np.linalg.norm(w))
        if wn == 0.0:
            return 0.0
        v = w / wn
        lam_new = float(v @ gram @ v)
        if abs(lam_new - lam) <= rel_tol * max(abs(lam_new), 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return math.sqrt(max(lam, 0.0))


# ---------------------------------------------------------------------------
# Jacobian and small-gain certificate
# ---------------------------------------------------------------------------

def jacobian(y, op: ReentryOperator, params: ModelParams) -> np.ndarray:
    """Flow Jacobian  -I + gamma*W + Dg_h(y)  for the intrinsic reentry path.

    The homeostatic differential is
    Dg_h(y) = -kappa * [(||y||^2 - theta^2) I + 2 y y^T]; it supplies negative
    radial curvature once the radius exceeds theta.
    """
    y = as_state_array(y)
    if y.size != op.d:
        raise DimensionMismatch(f"state dim {y.size} != operator dim {op.d}")
    d = y.size
    r2 = float(y @ y)
    dgh = -params.kappa * ((r2 - params.theta**2) * np.eye(d) + 2.0 * np.outer(y, y))
    return -np.eye(d) + params.gamma * op.w + dgh


@dataclass(frozen=True)
class SmallGainResult:
    holds: bool
    margin: float
    lhs: float
    rhs: float


def small_gain_check(y_star, op: ReentryOperator, params: ModelParams) -> SmallGainResult:
    """Sufficient stability test: feedback amplification vs leak + dissipation.

    Compares ||gamma*W||_2 against 1 - lambda_min(-Dg_h(y*)).  The minimum
    eigenvalue is analytic: -Dg_h has eigenvalue kappa*(r^2 - theta^2) on the
    subspace orthogonal to y* (d >= 2) and an extra 2*kappa*r^2 along y*.
    The test is only sufficient, and only meaningful for ||y*|| >= theta where
    the orthogonal eigenvalue is nonnegative.
    """
    y = as_state_array(y_star)
    if y.size != op.d:
        raise DimensionMismatch(f"state dim {y.size} != operator dim {op.d}")
    r2 = float(y @ y)
    lam_min = params.kappa * (r2 - params.theta**2)
    if y.size == 1:
        lam_min += 2.0 * params.kappa * r2
    lhs = spectral_norm(params.gamma * op.w)
    rhs = 1.0 - lam_min
    return SmallGainResult(holds=lhs < rhs, margin=rhs - lhs, lhs=lhs, rhs=rhs)


# ---------------------------------------------------------------------------
# stability grids and zero contours
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityGrid:
    """Lattice of state or parameter points with a per-cell stability verdict.

    ``values`` holds the scalar classifier per cell (spectral abscissa for
    state maps, effective reentry gain for parameter sweeps, as named by
    ``value_kind``); ``predicted`` the analytic class; ``empirical`` the
    optional simulated class (True = stable).
    """

    axis_names: tuple[str, ...]
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    value_kind: str
    predicted: np.ndarray
    empirical: np.ndarray | None = None
    contours: tuple[np.ndarray, ...] | None = None
    params: ModelParams | None = None
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        shape = tuple(len(a) for a in axes)
        if self.values.shape != shape or self.predicted.shape != shape:
            raise DimensionMismatch(
                f"grid shape {self.values.shape} != axes shape {shape}"
            )
        if self.empirical is not None and self.empirical.shape != shape:
            raise DimensionMismatch("empirical grid shape mismatch")
        flagged = self.metadata.get("failed_cells", ())
        if not flagged and not np.all(np.isfinite(self.values)):
            raise DimensionMismatch("grid values must be finite")

    @property
    def n_cells(self) -> int:
        return int(self.values.size)


def stability_map(
    axis1,
    axis2,
    op: ReentryOperator,
    params: ModelParams,
    axis_names: tuple[str, str] = ("y_1", "y_2"),
) -> StabilityGrid:
    """Spectral abscissa of the flow Jacobian over a 2-D state plane.

    Cells are independent and evaluated in deterministic row-major order;
    cells whose eigensolve stalls are flagged in metadata instead of aborting
    the map.  The zero-abscissa level set is extracted with marching squares
    and attached as polyline metadata.
    """
    if op.d != 2:
        raise DimensionMismatch("state-plane maps require a 2-d operator")
    a1 = np.asarray(axis1, dtype=float)
    a2 = np.asarray(axis2, dtype=float)
    values = np.empty((len(a1), len(a2)))
    failed: list[tuple[int, int]] = []
    for i, x in enumerate(a1):
        for j, yv in enumerate(a2):
            try:
                rep = eigenvalues(jacobian(np.array([x, yv]), op, params))
                values[i, j] = rep.abscissa
            except NoConvergence:
                values[i, j] = np.nan
                failed.append((i, j))
    predicted = values < 0.0
    contours = contour_polylines(a1, a2, values, level=0.0)
    meta = {"failed_cells": failed} if failed else {}
    return StabilityGrid(
        axis_names=axis_names,
        axes=(a1, a2),
        values=values,
        value_kind="abscissa",
        predicted=predicted,
        contours=tuple(contours),
        params=params,
        metadata=meta,
    )


def _cell_crossings(xs, ys, vals, level):
    """Interpolated level crossings on the edges of one grid cell."""
    pts = []
    corners = [
        (xs[0], ys[0], vals[0]),
        (xs[1], ys[0], vals[1]),
        (xs[1], ys[1], vals[2]),
        (xs[0], ys[1], vals[3]),
    ]
    for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
        xa, ya, va = corners[a]
        xb, yb, vb = corners[b]
        below_a = va < level
        below_b = vb < level
        if below_a == below_b:
            continue
        t = (level - va) / (vb - va)
        pts.append((xa + t * (xb - xa), ya + t * (yb - ya)))
    return pts


def marching_squares(axis1, axis2, values, level: float = 0.0):
    """Level-set line segments of values[i, j] = f(axis1[i], axis2[j]).

    Linear interpolation along cell edges; the ambiguous saddle case (four
    crossings) is split using the cell-center average.
    """
    a1 = np.asarray(axis1, dtype=float)
    a2 = np.asarray(axis2, dtype=float)
    v = np.asarray(values, dtype=float)
    segments = []
    for i in range(len(a1) - 1):
        for j in range(len(a2) - 1):
            vals = (v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1])
            if not all(np.isfinite(vals)):
                continue
            pts = _cell_crossings((a1[i], a1[i + 1]), (a2[j], a2[j + 1]), vals, level)
            if len(pts) == 2:
                segments.append((pts[0], pts[1]))
            elif len(pts) == 4:
                center_below = (sum(vals) / 4.0) < level
                corner_below = vals[0] < level
                # saddle: when the center sides with corner 0, corners 1 and 3
                # are isolated islands (bottom+right and top+left cuts)
                if center_below == corner_below:
                    segments.append((pts[0], pts[1]))
                    segments.append((pts[2], pts[3]))
                else:
                    segments.append((pts[0], pts[3]))
                    segments.append((pts[1], pts[2]))
    return segments


def _stitch_segments(segments, decimals: int = 9):
    """Chain shared-endpoint segments into polylines (open or closed)."""
    def key(p):
        return (round(p[0], decimals), round(p[1], decimals))

    adjacency: dict = {}
    for idx, (p, q) in enumerate(segments):
        adjacency.setdefault(key(p), []).append((idx, 0))
        adjacency.setdefault(key(q), []).append((idx, 1))

    used = [False] * len(segments)
    polylines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        p, q = segments[start]
        chain = [p, q]
        # extend forward from q, then backward from p
        for end_point, append in ((q, True), (p, False)):
            current = end_point
            while True:
                candidates = [
                    (idx, end)
                    for idx, end in adjacency.get(key(current), [])
                    if not used[idx]
                ]
                if not candidates:
                    break
                idx, end = candidates[0]
                used[idx] = True
                nxt = segments[idx][1 - end]
                if append:
                    chain.append(nxt)
                else:
                    chain.insert(0, nxt)
                current = nxt
        polylines.append(np.asarray(chain))
    return polylines


def contour_polylines(axis1, axis2, values, level: float = 0.0):
    """Marching-squares level set stitched into polylines."""
    return _stitch_segments(marching_squares(axis1, axis2, values, level))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _params_dict(params: ModelParams | None):
    if params is None:
        return None
    return {
        "gamma": params.gamma,
        "beta": params.beta,
        "kappa": params.kappa,
        "theta": params.theta,
        "lambda_a": params.lambda_a,
    }


def write_grid_csv(grid: StabilityGrid, path, value_column: str | None = None) -> None:
    """Row-major CSV: axis columns, value column, predicted[, empirical]."""
    value_column = value_column or grid.value_kind
    cols = list(grid.axis_names) + [value_column, "predicted_stable"]
    if grid.empirical is not None:
        cols.append("empirical_stable")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for idx in np.ndindex(grid.values.shape):
            row = [format_float(grid.axes[k][idx[k]]) for k in range(len(grid.axes))]
            row.append(format_float(grid.values[idx]))
            row.append(str(int(grid.predicted[idx])))
            if grid.empirical is not None:
                row.append(str(int(grid.empirical[idx])))
            fh.write(",".join(row) + "\n")


def grid_sidecar(grid: StabilityGrid) -> dict:
    """JSON-ready sidecar: axes, params, contours, metadata."""
    return {
        "axis_names": list(grid.axis_names),
        "axes": [a.tolist() for a in grid.axes],
        "value_kind": grid.value_kind,
        "params": _params_dict(grid.params),
        "contours": [c.tolist() for c in (grid.contours or ())],
        "metadata": {
            k: (list(map(list, v)) if k == "failed_cells" else v)
            for k, v in grid.metadata.items()
        },
    }
