"""Both sides of the global Carleman estimate on discrete space-time fields.

The conjugated variable is w = e^{-s phi} v with

    phi(x, t) = (alpha - e^{lam psi(x)}) / ((T - t)(T + t)),
    theta(x, t) = e^{lam psi(x)} / ((T - t)(T + t)),

where psi is a transmission weight (one branch per side of the interface).
The conjugated operator splits as P w = P1 w + P2 w + q w with

    P1 w = i w' + div(a grad w) + s^2 a |grad phi|^2 w,
    P2 w = i s phi' w + 2 s a grad phi . grad w + s div(a grad phi) w,

where the phi factors are evaluated analytically per side and the spatial
derivatives of w use the same flux-conservative stencils as the solver.
The estimate under test compares, for an epsilon-pair of weights psi^1,
psi^2,

    lhs = sum_k ||P1 w^k||^2 + ||P2 w^k||^2 + |||w^k|||^2,
    rhs = sum_k ||P w^k||^2
          + s lam sum_k int over Sigma_+^k of theta^k |a dw^k/dnu|^2,

with |||w|||^2 = s^3 lam^4 int theta^3 |w|^2 + s lam int theta |grad w|^2.
All integrals run over the clamped time interval |t| <= T - delta_t; the
discarded tails are bounded by e^{-2 s phi} at the clamp and that bound is
reported with every sweep.

Scale handling: e^{-s phi} spans hundreds of orders of magnitude, so
conjugation factors are evaluated in log space and flushed to zero below
1e-300.  Ratio assembly additionally applies one common positive
normalization e^{s phi_ref} (phi_ref depends only on the weight pair and
the parameters, never on the field), which cancels exactly in the ratio
and keeps both sides inside double-precision range; reported lhs/rhs
components therefore carry that common normalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .pde_solver import (
    Grid2D,
    SolverError,
    SpaceTimeField,
    _assemble_flux_matrix,
    extend_time,
    solve_forward,
    trace_operator,
)
from .weight import (
    CarlemanParams,
    EpsilonPair,
    PiecewiseCoefficient,
    TransmissionWeight,
    _time_factor,
    fit_carleman_params,
    sigma_plus,
)

FLUSH_THRESHOLD = 1e-300
_LOG_FLUSH = float(np.log(FLUSH_THRESHOLD))
_LOG_CLIP = 700.0


class InequalityViolation(Exception):
    """The assembled right-hand side vanished while the left side did not."""


@dataclass(frozen=True)
class ConjugatedField:
    """w = e^{-s phi} v together with the weight and parameters used."""

    w: SpaceTimeField
    weight: TransmissionWeight
    params: CarlemanParams


@dataclass(frozen=True)
class CarlemanReport:
    """Both sides of the estimate for one field at one (s, lambda)."""

    lhs: float
    rhs_residual: float
    rhs_boundary: float
    ratio: float
    s: float
    lam: float

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs_residual": self.rhs_residual,
            "rhs_boundary": self.rhs_boundary,
            "ratio": self.ratio,
            "s": self.s,
            "lambda": self.lam,
        }


@dataclass(frozen=True)
class SweepResult:
    """Outcome of a (s, lambda) sweep over a suite of test fields."""

    rows: list
    table: list
    sup_ratio: float
    stabilized: bool
    q_inf: float
    tail_bound: float

    def summary(self) -> dict:
        return {"sup_ratio": self.sup_ratio, "stabilized": self.stabilized}


def _as_field(w) -> SpaceTimeField:
    return w.w if isinstance(w, ConjugatedField) else w


def _require_time_resolution(field: SpaceTimeField):
    if field.nt < 3:
        raise SolverError("need at least 3 time levels for time derivatives")


def _cell_weights(grid: Grid2D) -> np.ndarray:
    """Tensor trapezoid quadrature weights, shape (ny, nx)."""
    wx = np.ones(grid.nx)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(grid.ny)
    wy[0] = wy[-1] = 0.5
    return grid.h * grid.h * np.outer(wy, wx)


def _potential_on(grid: Grid2D, q) -> np.ndarray:
    if callable(q):
        vals = np.asarray(q(grid.points.reshape(-1, 2)), dtype=float)
        return vals.reshape(grid.shape)
    arr = np.asarray(q, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.shape, float(arr))
    return arr.reshape(grid.shape)


def _conjugation_factors(
    weight: TransmissionWeight,
    params: CarlemanParams,
    grid: Grid2D,
    times: np.ndarray,
    log_shift: float = 0.0,
) -> np.ndarray:
    """exp(-s phi + log_shift) per node and time, flushed below 1e-300.

    Evaluated in log space; exponents are clipped high so a malformed
    alpha (phi < 0 somewhere) yields huge finite factors instead of inf.
    """
    psi = weight.psi(grid.points.reshape(-1, 2)).reshape(grid.shape)
    beta = params.alpha - np.exp(params.lam * psi)
    tau = _time_factor(params, np.asarray(times, dtype=float))
    out = np.empty((len(times),) + grid.shape)
    for n in range(len(times)):
        log_f = -params.s * beta * tau[n] + log_shift
        np.minimum(log_f, _LOG_CLIP, out=log_f)
        f = np.exp(log_f)
        f[log_f < _LOG_FLUSH] = 0.0
        out[n] = f
    return out


def conjugate(
    v: SpaceTimeField, weight: TransmissionWeight, params: CarlemanParams
) -> ConjugatedField:
    """w = e^{-s phi} v pointwise on the clamped time interval."""
    fac = _conjugation_factors(weight, params, v.grid, v.times)
    w = SpaceTimeField(grid=v.grid, times=v.times, values=v.values * fac)
    return ConjugatedField(w=w, weight=weight, params=params)


def _apply_flux(grid: Grid2D, k_int, k_bnd, values: np.ndarray) -> np.ndarray:
    """div(a grad .) slice by slice; boundary rows are zero."""
    nt = values.shape[0]
    flat = values.reshape(nt, -1)
    res = (k_int @ flat[:, grid.interior_ids].T).T
    res += (k_bnd @ flat[:, grid.boundary_ids].T).T
    out = np.zeros_like(flat)
    out[:, grid.interior_ids] = res
    return out.reshape(values.shape)


def apply_transmission_operator(
    v: SpaceTimeField, coeff: PiecewiseCoefficient, potential
) -> SpaceTimeField:
    """L v = i v' + div(a grad v) + q v with the solver's flux stencils."""
    _require_time_resolution(v)
    grid = v.grid
    k_int, k_bnd = _assemble_flux_matrix(grid, coeff)
    dvdt = np.gradient(v.values, v.dt, axis=0, edge_order=2)
    flux = _apply_flux(grid, k_int, k_bnd, v.values)
    qa = _potential_on(grid, potential)
    vals = 1j * dvdt + flux + qa[None, :, :] * v.values
    return SpaceTimeField(grid=grid, times=v.times, values=vals)


def apply_P1(
    w,
    weight: TransmissionWeight,
    params: CarlemanParams,
    a: Optional[PiecewiseCoefficient] = None,
) -> SpaceTimeField:
    """P1 w = i w' + div(a grad w) + s^2 a |grad phi|^2 w."""
    field = _as_field(w)
    _require_time_resolution(field)
    grid = field.grid
    coeff = a if a is not None else weight.coeff
    k_int, k_bnd = _assemble_flux_matrix(grid, coeff)
    dwdt = np.gradient(field.values, field.dt, axis=0, edge_order=2)
    flux = _apply_flux(grid, k_int, k_bnd, field.values)
    pts = grid.points.reshape(-1, 2)
    gpsi = weight.grad(pts)
    g2 = np.einsum("ij,ij->i", gpsi, gpsi)
    e_lp = np.exp(params.lam * weight.psi(pts))
    a_nodes = coeff.at(pts)
    # |grad phi|^2 = lam^2 e^{2 lam psi} |grad psi|^2 tau(t)^2
    space = (params.s**2 * params.lam**2 * a_nodes * e_lp**2 * g2).reshape(
        grid.shape
    )
    tau = _time_factor(params, field.times)
    vals = (
        1j * dwdt
        + flux
        + space[None, :, :] * (tau**2)[:, None, None] * field.values
    )
    return SpaceTimeField(grid=grid, times=field.times, values=vals)


def apply_P2(
    w,
    weight: TransmissionWeight,
    params: CarlemanParams,
    a: Optional[PiecewiseCoefficient] = None,
) -> SpaceTimeField:
    """P2 w = i s phi' w + 2 s a grad phi . grad w + s div(a grad phi) w."""
    field = _as_field(w)
    grid = field.grid
    if params.s == 0.0:
        zeros = np.zeros_like(np.asarray(field.values, dtype=complex))
        return SpaceTimeField(grid=grid, times=field.times, values=zeros)
    _require_time_resolution(field)
    coeff = a if a is not None else weight.coeff
    pts = grid.points.reshape(-1, 2)
    psi = weight.psi(pts)
    e_lp = np.exp(params.lam * psi)
    gpsi = weight.grad(pts)
    lap = weight.laplacian(pts)
    a_nodes = coeff.at(pts)
    g2 = np.einsum("ij,ij->i", gpsi, gpsi)
    beta = (params.alpha - e_lp).reshape(grid.shape)
    # grad phi = tau grad beta with grad beta = -lam e^{lam psi} grad psi
    gbx = (-params.lam * e_lp * gpsi[:, 0]).reshape(grid.shape)
    gby = (-params.lam * e_lp * gpsi[:, 1]).reshape(grid.shape)
    # div(a grad beta) = -a lam e^{lam psi} (lam |grad psi|^2 + lap psi)
    div_ab = (-a_nodes * params.lam * e_lp * (params.lam * g2 + lap)).reshape(
        grid.shape
    )
    a2d = a_nodes.reshape(grid.shape)
    tau = _time_factor(params, field.times)
    tau_prime = 2.0 * np.asarray(field.times, dtype=float) * tau**2
    out = np.empty_like(np.asarray(field.values, dtype=complex))
    h = grid.h
    for n in range(field.nt):
        wn = field.values[n]
        wy, wx = np.gradient(wn, h, edge_order=2)
        out[n] = (
            1j * params.s * tau_prime[n] * beta * wn
            + 2.0 * params.s * tau[n] * a2d * (gbx * wx + gby * wy)
            + params.s * tau[n] * div_ab * wn
        )
    return SpaceTimeField(grid=grid, times=field.times, values=out)


def weighted_norm_sq(
    w,
    weight,
    params: CarlemanParams,
    region: Optional[np.ndarray] = None,
) -> float:
    """s^3 lam^4 int theta^3 |w|^2 + s lam int theta |grad w|^2 over region.

    region is a boolean node mask (None means the whole rectangle); the
    value is additive over disjoint region partitions because the mask
    weights a fixed trapezoidal quadrature.
    """
    field = _as_field(w)
    grid = field.grid
    psi = weight.psi(grid.points.reshape(-1, 2)).reshape(grid.shape)
    e_lp = np.exp(params.lam * psi)
    cell = _cell_weights(grid)
    if region is not None:
        cell = cell * np.asarray(region, dtype=float)
    tau = _time_factor(params, field.times)
    dens1 = np.empty(field.nt)
    dens2 = np.empty(field.nt)
    h = grid.h
    for n in range(field.nt):
        wn = field.values[n]
        wy, wx = np.gradient(wn, h, edge_order=2)
        theta = e_lp * tau[n]
        dens1[n] = np.sum(cell * theta**3 * (wn.real**2 + wn.imag**2))
        dens2[n] = np.sum(
            cell
            * theta
            * (wx.real**2 + wx.imag**2 + wy.real**2 + wy.imag**2)
        )
    term1 = params.s**3 * params.lam**4 * np.trapezoid(dens1, field.times)
    term2 = params.s * params.lam * np.trapezoid(dens2, field.times)
    return float(term1 + term2)


def _space_time_l2_sq(grid: Grid2D, times: np.ndarray, values: np.ndarray) -> float:
    cell = _cell_weights(grid)
    per = np.tensordot(values.real**2 + values.imag**2, cell, axes=([1, 2], [0, 1]))
    return float(np.trapezoid(per, times))


def _common_log_shift(
    weights: Sequence[TransmissionWeight], params: CarlemanParams, grid: Grid2D
) -> float:
    """s * phi_ref with phi_ref <= min phi over the pair and the grid."""
    if params.s == 0.0:
        return 0.0
    beta_min = np.inf
    pts = grid.points.reshape(-1, 2)
    for wgt in weights:
        e = np.exp(params.lam * wgt.psi(pts))
        beta_min = min(beta_min, float((params.alpha - e).min()))
    if np.isfinite(params.psi_sup):
        beta_min = min(
            beta_min, params.alpha - float(np.exp(params.lam * params.psi_sup))
        )
    beta_min = max(beta_min, 0.0)
    return params.s * beta_min / (params.T * params.T)


def assemble_report(
    lhs: float, rhs_residual: float, rhs_boundary: float, s: float, lam: float
) -> CarlemanReport:
    """Combine the accumulated components, guarding the impossible case."""
    rhs = rhs_residual + rhs_boundary
    if rhs == 0.0:
        if lhs > 0.0:
            raise InequalityViolation(
                "right-hand side vanished while the left side is "
                f"{lhs:.3e}; the weight pair or the field is invalid"
            )
        ratio = 0.0
    else:
        ratio = lhs / rhs
    return CarlemanReport(
        lhs=float(lhs),
        rhs_residual=float(rhs_residual),
        rhs_boundary=float(rhs_boundary),
        ratio=float(ratio),
        s=float(s),
        lam=float(lam),
    )


def _boundary_term(
    wvals: np.ndarray,
    times: np.ndarray,
    weight: TransmissionWeight,
    params: CarlemanParams,
    tr_pts: np.ndarray,
    tr_normals: np.ndarray,
    tr_weights: np.ndarray,
    tr_matrix,
) -> float:
    """s lam int over Sigma_+ of theta |a dw/dnu|^2."""
    mask = sigma_plus(weight, tr_pts, tr_normals)
    if not mask.any():
        return 0.0
    nt = len(times)
    flat = wvals.reshape(nt, -1)
    flux = (tr_matrix @ flat.T).T[:, mask]
    e_lp = np.exp(params.lam * weight.psi(tr_pts[mask]))
    tau = _time_factor(params, np.asarray(times, dtype=float))
    per_t = (
        (flux.real**2 + flux.imag**2) * (e_lp * tr_weights[mask])[None, :]
    ).sum(axis=1) * tau
    return float(params.s * params.lam * np.trapezoid(per_t, times))


def clamp_tail_bound(params: CarlemanParams) -> float:
    """e^{-2 s phi} at the time clamp, bounding the discarded tail mass."""
    if not np.isfinite(params.psi_sup):
        return float("nan")
    beta_min = params.alpha - float(np.exp(params.lam * params.psi_sup))
    tau_clamp = 1.0 / (params.delta_t * (2.0 * params.T - params.delta_t))
    log_tail = -2.0 * params.s * beta_min * tau_clamp
    if log_tail < _LOG_FLUSH:
        return 0.0
    return float(np.exp(min(log_tail, _LOG_CLIP)))


def carleman_ratio(
    v: SpaceTimeField,
    weight_pair: EpsilonPair,
    params: CarlemanParams,
    q,
) -> CarlemanReport:
    """Assemble both sides of the estimate for one field.

    v must be a member of the discrete test class: zero Dirichlet trace,
    finite residual L v, and a computable boundary flux.  The report
    components carry one common positive normalization (see module notes);
    the ratio is exact.
    """
    _require_time_resolution(v)
    grid = v.grid
    weights = (weight_pair.w1, weight_pair.w2)
    coeff = weights[0].coeff
    lv = apply_transmission_operator(v, coeff, q)
    shift = _common_log_shift(weights, params, grid)
    tr_pts, tr_normals, tr_weights, tr_matrix = trace_operator(grid, coeff)
    lhs = 0.0
    rhs_residual = 0.0
    rhs_boundary = 0.0
    for wgt in weights:
        fac = _conjugation_factors(wgt, params, grid, v.times, log_shift=shift)
        wfield = SpaceTimeField(grid=grid, times=v.times, values=v.values * fac)
        p1 = apply_P1(wfield, wgt, params, coeff)
        p2 = apply_P2(wfield, wgt, params, coeff)
        lhs += _space_time_l2_sq(grid, v.times, p1.values)
        lhs += _space_time_l2_sq(grid, v.times, p2.values)
        lhs += weighted_norm_sq(wfield, wgt, params)
        rhs_residual += _space_time_l2_sq(grid, v.times, lv.values * fac)
        rhs_boundary += _boundary_term(
            wfield.values,
            v.times,
            wgt,
            params,
            tr_pts,
            tr_normals,
            tr_weights,
            tr_matrix,
        )
    return assemble_report(lhs, rhs_residual, rhs_boundary, params.s, params.lam)


def constant_sweep(
    test_fields: Sequence[SpaceTimeField],
    s_values: Sequence[float],
    lam_values: Sequence[float],
    weight_pair: EpsilonPair,
    q,
    *,
    T: Optional[float] = None,
    delta_t: Optional[float] = None,
    n_grid: int = 192,
) -> SweepResult:
    """Max-over-fields ratio per (s, lambda) plus sup and stabilization.

    T and delta_t default to the field time grid: the fields are assumed
    clamped at |t| = T - delta_t with the standard delta_t = T / 64.
    Stabilization means every consecutive relative change of the per-s sup
    over the upper half of the s-range stays below 10 percent.
    """
    fields = list(test_fields)
    if not fields:
        return SweepResult(
            rows=[],
            table=[],
            sup_ratio=0.0,
            stabilized=False,
            q_inf=0.0,
            tail_bound=0.0,
        )
    if T is None:
        t_max = float(np.max(np.abs(fields[0].times)))
        if delta_t is None:
            T = t_max * 64.0 / 63.0
            delta_t = T / 64.0
        else:
            T = t_max + delta_t
    elif delta_t is None:
        delta_t = T / 64.0

    rows = []
    table = []
    tail = 0.0
    for s in s_values:
        for lam in lam_values:
            params = fit_carleman_params(
                weight_pair.w1,
                float(s),
                float(lam),
                float(T),
                delta_t=float(delta_t),
                partner=weight_pair.w2,
                n_grid=n_grid,
            )
            tail = max(tail, clamp_tail_bound(params))
            best = 0.0
            for fid, fld in enumerate(fields):
                rep = carleman_ratio(fld, weight_pair, params, q)
                rows.append(
                    {
                        "field_id": fid,
                        "s": float(s),
                        "lambda": float(lam),
                        "lhs": rep.lhs,
                        "rhs_residual": rep.rhs_residual,
                        "rhs_boundary": rep.rhs_boundary,
                        "ratio": rep.ratio,
                    }
                )
                best = max(best, rep.ratio)
            table.append({"s": float(s), "lambda": float(lam), "max_ratio": best})

    s_sorted = sorted({float(s) for s in s_values})
    sups = [
        max(e["max_ratio"] for e in table if e["s"] == s) for s in s_sorted
    ]
    upper = sups[len(s_sorted) // 2 :]
    stabilized = len(upper) >= 2 and all(
        abs(b - a) <= 0.1 * max(abs(a), FLUSH_THRESHOLD)
        for a, b in zip(upper, upper[1:])
    )
    sup_ratio = max((e["max_ratio"] for e in table), default=0.0)
    q_inf = float(np.max(np.abs(_potential_on(fields[0].grid, q))))
    return SweepResult(
        rows=rows,
        table=table,
        sup_ratio=float(sup_ratio),
        stabilized=bool(stabilized),
        q_inf=q_inf,
        tail_bound=float(tail),
    )


def _boundary_taper(grid: Grid2D, margin: float) -> np.ndarray:
    """Quintic smoothstep taper vanishing on the outer boundary."""
    xmin, xmax, ymin, ymax = grid.layout.outer.bounds
    pts = grid.points

    def edge(d):
        u = np.clip(d / margin, 0.0, 1.0)
        return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)

    return (
        edge(pts[..., 0] - xmin)
        * edge(xmax - pts[..., 0])
        * edge(pts[..., 1] - ymin)
        * edge(ymax - pts[..., 1])
    )


def build_test_suite(
    grid: Grid2D,
    coeff: PiecewiseCoefficient,
    q,
    T: float,
    *,
    delta_t: Optional[float] = None,
    n_steps: int = 64,
    seed: int = 0,
    n_solved: int = 5,
    n_manufactured: int = 5,
) -> list:
    """Default test-field suite on the clamped interval |t| <= T - delta_t.

    Solved fields run the forward solver from purely imaginary random
    bumps and extend to negative times by the conjugate reflection they
    satisfy; manufactured fields are interior bumps times smooth compactly
    supported time envelopes, exercising the residual term.
    """
    if delta_t is None:
        delta_t = T / 64.0
    t_max = T - delta_t
    rng = np.random.default_rng(seed)
    pts = grid.points
    interface = grid.layout.interface
    cx, cy = interface.center
    rmin = interface.min_radius()
    xmin, xmax, ymin, ymax = grid.layout.outer.bounds
    margin = 0.15 * min(xmax - xmin, ymax - ymin)
    taper = _boundary_taper(grid, margin)
    fields = []
    for _ in range(n_solved):
        c = (
            cx + rng.uniform(-0.3, 0.3) * rmin,
            cy + rng.uniform(-0.3, 0.3) * rmin,
        )
        width = rmin * rng.uniform(0.25, 0.4)
        amp = rng.uniform(0.5, 1.5)
        r2 = (pts[..., 0] - c[0]) ** 2 + (pts[..., 1] - c[1]) ** 2
        y0 = 1j * amp * np.exp(-r2 / width**2)
        fwd = solve_forward(grid, coeff, q, y0, 0.0, t_max, n_steps)
        fields.append(extend_time(fwd, "real_R0", kind="solution"))
    times = np.linspace(-t_max, t_max, 2 * n_steps + 1)
    for _ in range(n_manufactured):
        c = (
            rng.uniform(xmin + 2.0 * margin, xmax - 2.0 * margin),
            rng.uniform(ymin + 2.0 * margin, ymax - 2.0 * margin),
        )
        width = rng.uniform(0.2, 0.45) * rmin
        amp = rng.uniform(0.5, 1.5)
        omega = rng.uniform(-3.0, 3.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        r2 = (pts[..., 0] - c[0]) ** 2 + (pts[..., 1] - c[1]) ** 2
        profile = amp * np.exp(-r2 / width**2) * taper
        t0 = 0.6 * t_max
        env = np.zeros(times.size, dtype=complex)
        inside = np.abs(times) < t0
        u = times[inside] / t0
        env[inside] = np.exp(1.0 - 1.0 / (1.0 - u**2)) * np.exp(
            1j * (omega * times[inside] + phase)
        )
        values = env[:, None, None] * profile[None, :, :]
        fields.append(
            SpaceTimeField(grid=grid, times=times, values=values.astype(complex))
        )
    return fields
