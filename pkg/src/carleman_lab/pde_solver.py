"""Finite-volume Crank-Nicolson solver for the transmission Schrodinger equation.

Conventions.  The equation solved is

    i dy/dt + div(a grad y) + p y = g      on the rectangle, t in (t0, t1),
    y = h on the outer boundary,            y(t0) = y0,

with a piecewise-constant a (one value inside the interface, one outside)
and a real potential p.  Space is discretised on a uniform square grid with
five-point fluxes; the face coefficient between two nodes is the harmonic
mean of the nodal values, which keeps the discrete flux continuous across
the coefficient jump.  Time stepping is the Cayley form of Crank-Nicolson:
the one-step map is exactly unitary when g = 0 and h = 0, so the L2 mass
is conserved to rounding.

The matrix I - (i dt / 2) A is factored once; its conjugate transpose is
I + (i dt / 2) A, so adjoint solves reuse the same factorisation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .geometry import DomainLayout, OMEGA1, gauge
from .weight import PiecewiseCoefficient


class SolverError(Exception):
    """Generic discretisation failure."""


class InvalidStep(SolverError):
    """Bad time interval or step count."""


class InvalidTrace(SolverError):
    """A boundary trace needs at least three time levels."""


class ExtensionError(SolverError):
    """Time extension applied to incompatible data at t = 0."""


ArrayLike = Union[np.ndarray, Callable]


@dataclass(frozen=True)
class Grid2D:
    """Uniform square-spacing tensor grid over the outer rectangle."""

    layout: DomainLayout
    xs: np.ndarray
    ys: np.ndarray
    h: float

    @staticmethod
    def from_layout(layout: DomainLayout, nx: int, ny: Optional[int] = None) -> "Grid2D":
        if nx < 5:
            raise SolverError("need at least 5 nodes per direction")
        xmin, xmax, ymin, ymax = layout.outer.bounds
        h = (xmax - xmin) / (nx - 1)
        if ny is None:
            ny = int(round((ymax - ymin) / h)) + 1
        if ny < 5:
            raise SolverError("need at least 5 nodes per direction")
        hy = (ymax - ymin) / (ny - 1)
        if abs(hy - h) > 1e-9 * h:
            raise SolverError(
                f"grid spacing must be square, got dx={h:.6e} dy={hy:.6e}"
            )
        xs = np.linspace(xmin, xmax, nx)
        ys = np.linspace(ymin, ymax, ny)
        return Grid2D(layout=layout, xs=xs, ys=ys, h=float(h))

    @property
    def nx(self) -> int:
        return self.xs.size

    @property
    def ny(self) -> int:
        return self.ys.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @cached_property
    def points(self) -> np.ndarray:
        """All nodes, shape (ny, nx, 2)."""
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.stack([gx, gy], axis=-1)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1] = True
        return m

    @cached_property
    def interior_ids(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask.ravel())

    @cached_property
    def boundary_ids(self) -> np.ndarray:
        """Perimeter order: bottom, right side, top reversed, left side down."""
        nx, ny = self.nx, self.ny
        ids = np.arange(nx * ny).reshape(self.shape)
        walk = [ids[0, :], ids[1:-1, -1], ids[-1, ::-1], ids[-2:0:-1, 0]]
        return np.concatenate(walk)

    @cached_property
    def boundary_normals(self) -> np.ndarray:
        """Outward unit normals matching boundary_ids; corners get diagonals."""
        nx, ny = self.nx, self.ny
        nrm = np.zeros((2 * nx + 2 * ny - 4, 2))
        nrm[:nx] = (0.0, -1.0)
        nrm[nx : nx + ny - 2] = (1.0, 0.0)
        nrm[nx + ny - 2 : 2 * nx + ny - 2] = (0.0, 1.0)
        nrm[2 * nx + ny - 2 :] = (-1.0, 0.0)
        flat_pts = self.points.reshape(-1, 2)[self.boundary_ids]
        xmin, xmax, ymin, ymax = self.layout.outer.bounds
        on_x = (np.abs(flat_pts[:, 0] - xmin) < 1e-12) | (
            np.abs(flat_pts[:, 0] - xmax) < 1e-12
        )
        on_y = (np.abs(flat_pts[:, 1] - ymin) < 1e-12) | (
            np.abs(flat_pts[:, 1] - ymax) < 1e-12
        )
        corner = on_x & on_y
        sx = np.where(np.abs(flat_pts[:, 0] - xmin) < 1e-12, -1.0, 1.0)
        sy = np.where(np.abs(flat_pts[:, 1] - ymin) < 1e-12, -1.0, 1.0)
        inv = 1.0 / np.sqrt(2.0)
        nrm[corner] = np.column_stack([sx[corner] * inv, sy[corner] * inv])
        return nrm

    @cached_property
    def boundary_points(self) -> np.ndarray:
        return self.points.reshape(-1, 2)[self.boundary_ids]

    def gather_interior(self, u_full: np.ndarray) -> np.ndarray:
        return u_full.reshape(-1)[self.interior_ids]

    def scatter_interior(self, u_int: np.ndarray, boundary=0.0) -> np.ndarray:
        out = np.zeros(self.nx * self.ny, dtype=complex)
        out[self.interior_ids] = u_int
        if np.ndim(boundary) > 0 or boundary != 0.0:
            out[self.boundary_ids] = boundary
        return out.reshape(self.shape)

    def l2_norm(self, u_full: np.ndarray) -> float:
        """Discrete L2 norm h ||u||_2 over all nodes."""
        return float(self.h * np.linalg.norm(np.asarray(u_full).ravel()))


def _eval_on(pts: np.ndarray, data: ArrayLike, t: Optional[float] = None):
    if callable(data):
        out = data(pts) if t is None else data(pts, t)
    else:
        out = data
    return np.asarray(out)


def _coefficient_nodes(grid: Grid2D, coeff: PiecewiseCoefficient) -> np.ndarray:
    return coeff.at(grid.points.reshape(-1, 2)).reshape(grid.shape)


def face_coefficients(grid: Grid2D, coeff: PiecewiseCoefficient) -> dict:
    """Harmonic-mean coefficients on the four faces of each interior node.

    Returned arrays have shape (ny - 2, nx - 2); keys are 'east', 'west',
    'north', 'south'.  Where both adjacent nodes lie on the same side of
    the interface the face value equals that side's coefficient exactly.
    """
    a = _coefficient_nodes(grid, coeff)
    c = a[1:-1, 1:-1]
    out = {}
    for key, (dj, di) in (
        ("east", (0, 1)), ("west", (0, -1)),
        ("north", (1, 0)), ("south", (-1, 0)),
    ):
        q = a[1 + dj : a.shape[0] - 1 + dj, 1 + di : a.shape[1] - 1 + di]
        out[key] = 2.0 * c * q / (c + q)
    return out


def _assemble_flux_matrix(grid: Grid2D, coeff: PiecewiseCoefficient):
    """Sparse div(a grad .) over all nodes, rows only for interior nodes."""
    ny, nx = grid.shape
    a = _coefficient_nodes(grid, coeff)
    ids = np.arange(nx * ny).reshape(ny, nx)
    ii, jj = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1))
    rows_2d = ids[jj, ii]
    inv_h2 = 1.0 / grid.h**2
    rows, cols, vals = [], [], []
    diag = np.zeros(rows_2d.shape)
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        a_p = a[jj, ii]
        a_q = a[jj + dj, ii + di]
        a_face = 2.0 * a_p * a_q / (a_p + a_q)
        rows.append(rows_2d.ravel())
        cols.append(ids[jj + dj, ii + di].ravel())
        vals.append((a_face * inv_h2).ravel())
        diag -= a_face * inv_h2
    rows.append(rows_2d.ravel())
    cols.append(rows_2d.ravel())
    vals.append(diag.ravel())
    n = nx * ny
    full = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    k_int = full[grid.interior_ids][:, grid.interior_ids]
    k_bnd = full[grid.interior_ids][:, grid.boundary_ids]
    return k_int.tocsr(), k_bnd.tocsr()


class SchrodingerOperator:
    """Spatial operator plus the factored Cayley step for a fixed dt.

    apply_plus / apply_minus are v -> (I -+ (i dt / 2) A) v on interior
    vectors; solve_plus inverts the minus-branch matrix via the stored LU
    and solve_minus inverts its conjugate transpose with the same LU.
    """

    def __init__(self, grid: Grid2D, coeff: PiecewiseCoefficient,
                 potential: ArrayLike, dt: float):
        if dt <= 0.0:
            raise InvalidStep("dt must be positive")
        self.grid = grid
        self.coeff = coeff
        self.dt = float(dt)
        p_full = _eval_on(grid.points.reshape(-1, 2), potential)
        if callable(potential):
            p_full = p_full.reshape(grid.shape)
        p_full = np.asarray(p_full, dtype=float)
        if p_full.shape != grid.shape:
            raise SolverError(
                f"potential shape {p_full.shape} does not match grid {grid.shape}"
            )
        self.potential = p_full
        self.k_int, self.k_bnd = _assemble_flux_matrix(grid, coeff)
        p_int = grid.gather_interior(p_full)
        self.a_matrix = (self.k_int + sparse.diags(p_int)).tocsr()
        n = self.a_matrix.shape[0]
        plus = sparse.identity(n, format="csr") - (0.5j * dt) * self.a_matrix
        self._lu = splu(plus.tocsc())

    def apply_spatial(self, u_full: np.ndarray,
                      include_potential: bool = True) -> np.ndarray:
        """div(a grad u) (+ p u) at interior nodes, zero on boundary rows."""
        u_flat = np.asarray(u_full, dtype=complex).reshape(-1)
        res = self.k_int @ u_flat[self.grid.interior_ids]
        res = res + self.k_bnd @ u_flat[self.grid.boundary_ids]
        if include_potential:
            res = res + self.grid.gather_interior(self.potential) * u_flat[
                self.grid.interior_ids
            ]
        out = np.zeros(u_flat.shape, dtype=complex)
        out[self.grid.interior_ids] = res
        return out.reshape(self.grid.shape)

    def apply_plus(self, v: np.ndarray) -> np.ndarray:
        return v - (0.5j * self.dt) * (self.a_matrix @ v)

    def apply_minus(self, v: np.ndarray) -> np.ndarray:
        return v + (0.5j * self.dt) * (self.a_matrix @ v)

    def solve_plus(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=complex))

    def solve_minus(self, b: np.ndarray) -> np.ndarray:
        # (I + (i dt/2) A) = conj(I - (i dt/2) A) for real symmetric A
        return np.conj(self._lu.solve(np.conj(np.asarray(b, dtype=complex))))

    def step(self, u_int: np.ndarray, g_sum_int: np.ndarray,
             h_sum_bnd: np.ndarray) -> np.ndarray:
        """One Crank-Nicolson step; sums are value(t_n) + value(t_{n+1})."""
        rhs = self.apply_minus(u_int)
        rhs = rhs + (0.5j * self.dt) * (self.k_bnd @ h_sum_bnd - g_sum_int)
        return self.solve_plus(rhs)


@dataclass(frozen=True)
class SpaceTimeField:
    """Solution snapshot stack: values[n] is the full grid at times[n]."""

    grid: Grid2D
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.times.size,) + self.grid.shape:
            raise SolverError("field values must have shape (nt, ny, nx)")

    @property
    def nt(self) -> int:
        return self.times.size

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        steps = np.diff(self.times)
        if steps.size and abs(steps.max() - steps.min()) > 1e-10 * abs(steps[0]):
            raise SolverError("field time axis is not uniform")
        return float(steps[0]) if steps.size else 0.0

    def interior(self) -> np.ndarray:
        return self.values.reshape(self.nt, -1)[:, self.grid.interior_ids]


def solve_forward(
    grid: Grid2D,
    coeff: PiecewiseCoefficient,
    potential: ArrayLike,
    y0: ArrayLike,
    t0: float,
    t1: float,
    n_steps: int,
    source: Optional[Callable] = None,
    boundary: Optional[Callable] = None,
    operator: Optional[SchrodingerOperator] = None,
) -> SpaceTimeField:
    """March the Dirichlet problem from t0 to t1 with n_steps CN steps."""
    if n_steps < 1:
        raise InvalidStep("need at least one time step")
    if not t1 > t0:
        raise InvalidStep("need t1 > t0")
    dt = (t1 - t0) / n_steps
    op = operator if operator is not None else SchrodingerOperator(
        grid, coeff, potential, dt
    )
    if abs(op.dt - dt) > 1e-12 * dt:
        raise InvalidStep("operator dt does not match the requested step")
    times = t0 + dt * np.arange(n_steps + 1)
    int_pts = grid.points.reshape(-1, 2)[grid.interior_ids]
    bnd_pts = grid.boundary_points

    u0_full = _eval_on(grid.points.reshape(-1, 2), y0)
    u0_full = np.asarray(u0_full, dtype=complex).reshape(grid.shape)

    def g_at(t):
        if source is None:
            return np.zeros(int_pts.shape[0], dtype=complex)
        return np.asarray(source(int_pts, t), dtype=complex)

    def h_at(t):
        if boundary is None:
            return np.zeros(bnd_pts.shape[0], dtype=complex)
        return np.asarray(boundary(bnd_pts, t), dtype=complex)

    values = np.empty((n_steps + 1,) + grid.shape, dtype=complex)
    u_int = grid.gather_interior(u0_full)
    h_n = h_at(times[0])
    g_n = g_at(times[0])
    values[0] = grid.scatter_interior(u_int, boundary=h_n)
    for n in range(n_steps):
        h_np1 = h_at(times[n + 1])
        g_np1 = g_at(times[n + 1])
        u_int = op.step(u_int, g_n + g_np1, h_n + h_np1)
        values[n + 1] = grid.scatter_interior(u_int, boundary=h_np1)
        h_n, g_n = h_np1, g_np1
    return SpaceTimeField(grid=grid, times=times, values=values)


def solve_linearized(
    grid: Grid2D,
    coeff: PiecewiseCoefficient,
    potential: ArrayLike,
    f: ArrayLike,
    r: Callable,
    t0: float,
    t1: float,
    n_steps: int,
    operator: Optional[SchrodingerOperator] = None,
) -> SpaceTimeField:
    """Zero-data solve with separable source f(x) R(x, t).

    This is the equation satisfied by the first-order difference of two
    forward solutions whose potentials differ by f.
    """
    f_full = np.asarray(
        _eval_on(grid.points.reshape(-1, 2), f), dtype=complex
    ).reshape(grid.shape)
    f_int = grid.gather_interior(f_full)

    def source(int_pts, t):
        return f_int * np.asarray(r(int_pts, t), dtype=complex)

    return solve_forward(
        grid, coeff, potential, np.zeros(grid.shape, dtype=complex),
        t0, t1, n_steps, source=source, operator=operator,
    )


def solve_time_derivative(
    grid: Grid2D,
    coeff: PiecewiseCoefficient,
    potential: ArrayLike,
    f: ArrayLike,
    r_prime: Callable,
    r0: ArrayLike,
    t0: float,
    t1: float,
    n_steps: int,
    operator: Optional[SchrodingerOperator] = None,
    r: Optional[Callable] = None,
    consistency_tol: float = 1e-2,
) -> SpaceTimeField:
    """Solve the equation satisfied by the time derivative of the
    linearized field: same operator, source f dR/dt, initial value
    v(t0) = -i f R(., t0) imposed exactly.

    f and R(., t0) are expected real valued.  When the full modulator r is
    supplied, the result is cross-checked against central time differences
    of the linearized solve; a relative mismatch above consistency_tol
    raises SolverError (a coarse sanity gate, not a convergence claim).
    """
    pts = grid.points.reshape(-1, 2)
    f_full = np.asarray(_eval_on(pts, f), dtype=complex).reshape(grid.shape)
    r0_full = np.asarray(_eval_on(pts, r0), dtype=complex).reshape(grid.shape)
    for name, arr in (("f", f_full), ("r0", r0_full)):
        if np.max(np.abs(arr.imag)) > 1e-12 * max(np.max(np.abs(arr)), 1e-300):
            raise SolverError(f"{name} must be real valued")
    v0 = -1.0j * f_full * r0_full
    f_int = grid.gather_interior(f_full)

    def source(int_pts, t):
        return f_int * np.asarray(r_prime(int_pts, t), dtype=complex)

    v = solve_forward(
        grid, coeff, potential, v0, t0, t1, n_steps,
        source=source, operator=operator,
    )
    if r is not None:
        u = solve_linearized(
            grid, coeff, potential, f, r, t0, t1, n_steps, operator=operator
        )
        mismatch = time_derivative_mismatch(v, u)
        if mismatch > consistency_tol:
            raise SolverError(
                f"time-derivative solve disagrees with d/dt of the "
                f"linearized solve: relative mismatch {mismatch:.3e}"
            )
    return v


def time_derivative_mismatch(v: SpaceTimeField, u: SpaceTimeField) -> float:
    """Relative gap between v and central time differences of u on the
    interior time nodes; O(dt^2) when v solves the derivative equation."""
    dt = u.dt
    du = (u.values[2:] - u.values[:-2]) / (2.0 * dt)
    gap = np.max(np.abs(v.values[1:-1] - du))
    scale = max(float(np.max(np.abs(v.values))), 1e-300)
    return float(gap / scale)


def extend_time(field: SpaceTimeField, mode: str, kind: str = "solution",
                rtol: float = 1e-12) -> SpaceTimeField:
    """Reflect a field from [0, T] onto [-T, T].

    mode 'real_R0' (the t = 0 modulator is real): solutions extend
    odd-conjugate (v(-t) = -conj v(t), needs Re v(0) = 0) and sources
    even-conjugate (R(-t) = conj R(t), needs Im R(0) = 0).
    mode 'imaginary_R0': the roles swap.
    """
    if mode not in ("real_R0", "imaginary_R0"):
        raise ValueError(f"unknown extension mode {mode!r}")
    if kind not in ("solution", "source"):
        raise ValueError(f"unknown extension kind {kind!r}")
    if abs(field.t0) > 1e-12:
        raise ExtensionError("extension requires a field starting at t = 0")
    odd_conjugate = (mode == "real_R0") == (kind == "solution")
    v0 = field.values[0]
    scale = float(np.max(np.abs(field.values))) or 1.0
    if odd_conjugate:
        mismatch = float(np.max(np.abs(v0.real)))
        if mismatch > rtol * scale:
            raise ExtensionError(
                f"odd-conjugate extension needs Re v(0) = 0, got {mismatch:.3e}"
            )
    else:
        mismatch = float(np.max(np.abs(v0.imag)))
        if mismatch > rtol * scale:
            raise ExtensionError(
                f"even-conjugate extension needs Im v(0) = 0, got {mismatch:.3e}"
            )
    sign = -1.0 if odd_conjugate else 1.0
    mirrored = sign * np.conj(field.values[-1:0:-1])
    times = np.concatenate([-field.times[-1:0:-1], field.times])
    values = np.concatenate([mirrored, field.values], axis=0)
    return SpaceTimeField(grid=field.grid, times=times, values=values)


@dataclass(frozen=True)
class BoundaryTrace:
    """Conormal trace samples a dnu(u) on the outer boundary over time."""

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    times: np.ndarray
    values: np.ndarray

    @property
    def nb(self) -> int:
        return self.points.shape[0]

    @property
    def nt(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def trace_operator(grid: Grid2D, coeff: PiecewiseCoefficient):
    """Sparse map from a full grid slice to a dnu(u) at boundary nodes.

    One-sided three-point (second order) stencils per axis; corner nodes
    combine both axes along the diagonal normal.  Returns (points,
    normals, weights, C) with trace = C @ u.ravel().
    """
    ny, nx = grid.shape
    ids = np.arange(nx * ny).reshape(ny, nx)
    b_ids = grid.boundary_ids
    normals = grid.boundary_normals
    pts = grid.boundary_points
    a_b = coeff.at(pts)
    inv2h = 1.0 / (2.0 * grid.h)
    rows, cols, vals = [], [], []
    flat = ids.ravel()
    j_of = b_ids // nx
    i_of = b_ids % nx
    for k in range(b_ids.size):
        i, j = int(i_of[k]), int(j_of[k])
        nu = normals[k]
        amp = a_b[k]
        if abs(nu[0]) > 1e-14:
            step = 1 if i == 0 else -1  # one-sided into the domain
            sgn = -step  # derivative orientation factor
            c0, c1, c2 = -3.0, 4.0, -1.0
            for m, cval in enumerate((c0, c1, c2)):
                rows.append(k)
                cols.append(flat[ids[j, i + step * m]])
                vals.append(amp * nu[0] * (-sgn) * cval * inv2h)
        if abs(nu[1]) > 1e-14:
            step = 1 if j == 0 else -1
            sgn = -step
            c0, c1, c2 = -3.0, 4.0, -1.0
            for m, cval in enumerate((c0, c1, c2)):
                rows.append(k)
                cols.append(flat[ids[j + step * m, i]])
                vals.append(amp * nu[1] * (-sgn) * cval * inv2h)
    C = sparse.coo_matrix(
        (vals, (rows, cols)), shape=(b_ids.size, nx * ny)
    ).tocsr()
    weights = np.full(b_ids.size, grid.h)
    return pts, normals, weights, C


def neumann_trace(field: SpaceTimeField, coeff: PiecewiseCoefficient) -> BoundaryTrace:
    if field.nt < 3:
        raise InvalidTrace("trace extraction needs at least 3 time levels")
    pts, normals, weights, C = trace_operator(field.grid, coeff)
    flat = field.values.reshape(field.nt, -1)
    values = (C @ flat.T).T
    return BoundaryTrace(
        points=pts, normals=normals, weights=weights,
        times=field.times.copy(), values=values,
    )


def h1l2_boundary_norm(trace: BoundaryTrace) -> float:
    """Norm combining the trace and its time derivative:
    sqrt( int_t sum_b w_b (|g|^2 + |dg/dt|^2) )."""
    if trace.nt < 3:
        raise InvalidTrace("the H1-in-time norm needs at least 3 time levels")
    g = trace.values
    dg = np.gradient(g, trace.times, axis=0, edge_order=2)
    density = (np.abs(g) ** 2 + np.abs(dg) ** 2) @ trace.weights
    return float(np.sqrt(np.trapezoid(density, trace.times)))


def l2_time_boundary_norm(trace: BoundaryTrace) -> float:
    density = (np.abs(trace.values) ** 2) @ trace.weights
    return float(np.sqrt(np.trapezoid(density, trace.times)))


def _lagrange_d1(xs3, fs3, x):
    """Derivative at x of the quadratic through (xs3, fs3)."""
    x0, x1, x2 = xs3
    f0, f1, f2 = fs3
    return (
        f0 * (2 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + f1 * (2 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + f2 * (2 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    )


def interface_flux_jump(grid: Grid2D, coeff: PiecewiseCoefficient,
                        u_slice: np.ndarray) -> float:
    """Median conormal mismatch a1 du/dx|_in - a2 du/dx|_out at interface
    crossings of horizontal grid lines; a convergence diagnostic for the
    transmission conditions."""
    iface = grid.layout.interface
    u = np.asarray(u_slice)
    if u.shape != grid.shape:
        raise SolverError("slice shape does not match the grid")
    jumps = []
    side = grid.layout.classify(grid.points.reshape(-1, 2)).reshape(grid.shape)
    for j in range(grid.ny):
        yj = grid.ys[j]
        lab = side[j]
        flips = np.flatnonzero(lab[:-1] != lab[1:])
        for i in flips:
            if i < 2 or i + 3 >= grid.nx:
                continue
            if not (np.all(lab[i - 2 : i + 1] == lab[i])
                    and np.all(lab[i + 1 : i + 4] == lab[i + 1])):
                continue
            fun = lambda x: float(gauge(iface, np.array([x, yj]))) - 1.0
            fa, fb = fun(grid.xs[i]), fun(grid.xs[i + 1])
            if fa == 0.0 or fb == 0.0 or fa * fb > 0.0:
                continue
            xc = brentq(fun, grid.xs[i], grid.xs[i + 1], xtol=1e-13)
            a_left = coeff.a1 if lab[i] == OMEGA1 else coeff.a2
            a_right = coeff.a1 if lab[i + 1] == OMEGA1 else coeff.a2
            d_left = _lagrange_d1(grid.xs[i - 2 : i + 1], u[j, i - 2 : i + 1], xc)
            d_right = _lagrange_d1(grid.xs[i + 1 : i + 4], u[j, i + 1 : i + 4], xc)
            jumps.append(abs(a_left * d_left - a_right * d_right))
    if not jumps:
        raise SolverError("no usable interface crossings on the grid")
    return float(np.median(jumps))
