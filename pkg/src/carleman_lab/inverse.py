"""One-measurement inverse potential problem on the transmission grid.

Given the conormal boundary trace of one forward solution, recover the
potential.  The module provides

  * instance construction with the data invariants checked up front
    (initial state bounded away from zero and real or purely imaginary,
    optional seeded trace noise),
  * the algebraic initial-condition inversion ``bk_recover_f``,
  * a trace misfit with Tikhonov term, its exact discrete adjoint-state
    gradient, and a monotone descent loop ``reconstruct``,
  * ``stability_sweep``: seeded smooth perturbations of the potential,
    the ratio of potential distance to trace distance for each, and a
    certificate tying the sweep to the weight hypotheses.

The gradient is the derivative of the implemented discrete functional,
not a discretization of a continuous formula: the Crank-Nicolson
recursion (I - i dt/2 A) y^{n+1} = (I + i dt/2 A) y^n + lift is
differentiated exactly, so adjoint and finite differences agree to
rounding.  With A real symmetric, the adjoint recursion
(I + i dt/2 A) lam^n = rho^n + (I - i dt/2 A) lam^{n+1} reuses the
factorization of the forward step.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .pde_solver import (
    BoundaryTrace,
    Grid2D,
    SchrodingerOperator,
    h1l2_boundary_norm,
    neumann_trace,
    solve_forward,
    trace_operator,
)
from .weight import PiecewiseCoefficient, build_weight, verify_hypotheses


class SingularR0(Exception):
    """The known factor R(0) comes too close to zero to divide by."""


class StalledReconstruction(Exception):
    """Descent could not make progress; returned (not raised) with the
    partial result attached."""

    def __init__(self, message: str, result: "ReconstructionResult",
                 diagnostics: dict):
        super().__init__(message)
        self.result = result
        self.diagnostics = diagnostics


# --------------------------------------------------------------------------
# problem instances


@dataclass(frozen=True, eq=False)
class InverseProblemInstance:
    """One synthetic measurement: geometry, true potential, and its trace."""

    grid: Grid2D
    coeff: PiecewiseCoefficient
    p_true: np.ndarray
    y0: np.ndarray
    boundary: Callable
    T: float
    n_steps: int
    data: BoundaryTrace
    clean_data: BoundaryTrace
    noise_level: float
    seed: int
    r_lower: float
    y0_imaginary: bool
    p_inf: float
    q_bound: float


def _on_grid(grid: Grid2D, data, dtype=float, name="field") -> np.ndarray:
    if callable(data):
        out = data(grid.points)
    else:
        out = np.asarray(data)
        if out.ndim == 0:
            out = np.full(grid.shape, complex(out) if dtype is complex else float(out))
    out = np.asarray(out, dtype=dtype)
    if out.shape != grid.shape:
        raise ValueError(f"{name} must have grid shape {grid.shape}, got {out.shape}")
    return out


def make_instance(
    grid: Grid2D,
    coeff: PiecewiseCoefficient,
    p,
    y0,
    T: float,
    n_steps: int,
    *,
    boundary: Optional[Callable] = None,
    noise_level: float = 0.0,
    seed: int = 0,
    r_lower: float = 0.5,
    q_bound: float = np.inf,
) -> InverseProblemInstance:
    """Solve the forward problem for the true potential and package the
    measured conormal trace (with optional seeded complex Gaussian noise).

    Invariants checked here: min |y0| >= r_lower > 0, y0 real or purely
    imaginary, Dirichlet data compatible with y0 on the rim at t = 0.
    """
    if not r_lower > 0.0:
        raise ValueError("r_lower must be positive")
    if n_steps < 2:
        raise ValueError("need at least 2 time steps for a usable trace")
    p_full = _on_grid(grid, p, float, "potential")
    y0_full = _on_grid(grid, y0, complex, "initial state")

    lo = float(np.min(np.abs(y0_full)))
    if lo < r_lower:
        raise ValueError(
            f"initial state must satisfy min|y0| >= {r_lower}, got {lo:.3e}"
        )
    re = float(np.max(np.abs(y0_full.real)))
    im = float(np.max(np.abs(y0_full.imag)))
    if im <= 1e-12 * max(re, 1.0):
        y0_imaginary = False
    elif re <= 1e-12 * max(im, 1.0):
        y0_imaginary = True
    else:
        raise ValueError("initial state must be real or purely imaginary")

    rim0 = y0_full.ravel()[grid.boundary_ids]
    if boundary is None:
        def boundary(pts, t, _vals=rim0):
            return _vals
    else:
        given = np.asarray(boundary(grid.boundary_points, 0.0), dtype=complex)
        gap = float(np.max(np.abs(given - rim0)))
        if gap > 1e-8 * max(1.0, float(np.max(np.abs(rim0)))):
            raise ValueError(
                f"Dirichlet data at t=0 differs from y0 on the rim by {gap:.3e}"
            )

    field = solve_forward(grid, coeff, p_full, y0_full, 0.0, T, n_steps,
                          boundary=boundary)
    clean = neumann_trace(field, coeff)
    data = clean
    if noise_level > 0.0:
        rng = np.random.default_rng(seed)
        scale = noise_level * float(np.sqrt(np.mean(np.abs(clean.values) ** 2)))
        noise = (rng.standard_normal(clean.values.shape)
                 + 1j * rng.standard_normal(clean.values.shape)) / np.sqrt(2.0)
        data = dataclasses.replace(clean, values=clean.values + scale * noise)

    return InverseProblemInstance(
        grid=grid, coeff=coeff, p_true=p_full, y0=y0_full, boundary=boundary,
        T=float(T), n_steps=int(n_steps), data=data, clean_data=clean,
        noise_level=float(noise_level), seed=int(seed), r_lower=float(r_lower),
        y0_imaginary=y0_imaginary, p_inf=float(np.max(np.abs(p_full))),
        q_bound=float(q_bound),
    )


# --------------------------------------------------------------------------
# initial-condition inversion


def bk_recover_f(v0: np.ndarray, R0: np.ndarray, r0_min: float = 0.5) -> np.ndarray:
    """Recover the real source factor from v(0) = -i f R(0).

    Raises SingularR0 when min |R0| < r0_min, the lower bound the stability
    argument needs on the known factor.
    """
    R0 = np.asarray(R0)
    lo = float(np.min(np.abs(R0)))
    if lo < r0_min:
        raise SingularR0(
            f"min |R(0)| = {lo:.3e} is below the required bound {r0_min}"
        )
    return np.real(1j * np.asarray(v0, dtype=complex) / R0)


# --------------------------------------------------------------------------
# misfit and its exact discrete gradient


def _check_q(q, instance: InverseProblemInstance) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != instance.grid.shape:
        raise ValueError(
            f"potential must have grid shape {instance.grid.shape}, got {q.shape}"
        )
    if not np.all(np.isfinite(q)):
        raise ValueError("potential contains non-finite entries")
    sup = float(np.max(np.abs(q)))
    if sup > instance.q_bound * (1.0 + 1e-12):
        raise ValueError(
            f"potential sup-norm {sup:.3e} exceeds the instance bound "
            f"{instance.q_bound:.3e}"
        )
    return q


def _forward_field(q: np.ndarray, instance: InverseProblemInstance,
                   operator: Optional[SchrodingerOperator] = None):
    return solve_forward(
        instance.grid, instance.coeff, q, instance.y0, 0.0, instance.T,
        instance.n_steps, boundary=instance.boundary, operator=operator,
    )


def _data_misfit(trace: BoundaryTrace, data: BoundaryTrace) -> float:
    diff = dataclasses.replace(trace, values=trace.values - data.values)
    return 0.5 * h1l2_boundary_norm(diff) ** 2


def _regularizer(q, q_ref, beta, h):
    if beta == 0.0:
        return 0.0
    d = q - q_ref
    return 0.5 * beta * h * h * float(np.sum(d * d))


def misfit(q, instance: InverseProblemInstance, beta: float = 0.0,
           q_ref=None) -> float:
    """0.5 ||a2 dnu y(q) - d||^2 in discrete H1(0,T; L2 boundary) plus
    0.5 beta ||q - q_ref||^2 in discrete L2 over the grid."""
    q = _check_q(q, instance)
    ref = np.zeros(instance.grid.shape) if q_ref is None else np.asarray(q_ref, float)
    tr = neumann_trace(_forward_field(q, instance), instance.coeff)
    return _data_misfit(tr, instance.data) + _regularizer(
        q, ref, beta, instance.grid.h
    )


def _time_gradient_matrix(nt: int, dt: float) -> np.ndarray:
    """Dense matrix reproducing np.gradient(..., edge_order=2) on a
    uniform axis, so the adjoint differentiates exactly what the norm
    computes."""
    D = np.zeros((nt, nt))
    inv2 = 1.0 / (2.0 * dt)
    for n in range(1, nt - 1):
        D[n, n - 1] = -inv2
        D[n, n + 1] = inv2
    D[0, 0:3] = np.array([-3.0, 4.0, -1.0]) * inv2
    D[-1, -3:] = np.array([1.0, -4.0, 3.0]) * inv2
    return D


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros(times.size)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def misfit_and_gradient(q, instance: InverseProblemInstance,
                        beta: float = 0.0, q_ref=None):
    """Return (value, gradient) of the misfit at q.

    One forward solve and one adjoint solve sharing a single LU
    factorization.  The gradient is with respect to the nodal values of q
    under the discrete L2 pairing sum_j grad_j delta_j (plain sum, so it
    feeds finite-difference checks directly).
    """
    q = _check_q(q, instance)
    grid = instance.grid
    ref = np.zeros(grid.shape) if q_ref is None else np.asarray(q_ref, float)
    dt = instance.T / instance.n_steps
    op = SchrodingerOperator(grid, instance.coeff, q, dt)
    field = _forward_field(q, instance, operator=op)
    tr = neumann_trace(field, instance.coeff)
    value = _data_misfit(tr, instance.data) + _regularizer(q, ref, beta, grid.h)

    # derivative of the trace functional with respect to each time slice
    residual = tr.values - instance.data.values          # (nt, nb)
    nt = residual.shape[0]
    D = _time_gradient_matrix(nt, dt)
    tau = _trapezoid_weights(tr.times)                   # (nt,)
    rdot = D @ residual
    z = tau[:, None] * residual + D.T @ (tau[:, None] * rdot)
    z = z * tr.weights[None, :]
    _, _, _, C = trace_operator(grid, instance.coeff)
    C_int = C[:, grid.interior_ids]
    rho = (C_int.T @ z.T).T                              # (nt, n_interior)

    # adjoint march: (I + i dt/2 A) lam^n = rho^n + (I - i dt/2 A) lam^{n+1}
    y_int = field.interior()                             # (nt, n_interior)
    grad_int = np.zeros(y_int.shape[1])
    lam_next = np.zeros(y_int.shape[1], dtype=complex)
    for n in range(instance.n_steps, 0, -1):
        lam = op.solve_minus(rho[n] + op.apply_plus(lam_next))
        grad_int += 0.5 * dt * np.real(
            1j * np.conj(lam) * (y_int[n - 1] + y_int[n])
        )
        lam_next = lam

    grad = np.real(grid.scatter_interior(grad_int))
    if beta != 0.0:
        grad = grad + beta * grid.h**2 * (q - ref)
    return value, grad


# --------------------------------------------------------------------------
# reconstruction


@dataclass(frozen=True)
class ReconstructionResult:
    """Outcome of the descent; final_misfit <= initial_misfit always."""

    q_hat: np.ndarray
    iterations: int
    initial_misfit: float
    final_misfit: float
    beta: float
    relative_error: float
    grad_norm: float
    converged: bool
    stop_reason: str

    def as_dict(self):
        return {
            "iterations": int(self.iterations),
            "initial_misfit": float(self.initial_misfit),
            "final_misfit": float(self.final_misfit),
            "beta": float(self.beta),
            "relative_error": float(self.relative_error),
            "grad_norm": float(self.grad_norm),
            "converged": bool(self.converged),
            "stop_reason": self.stop_reason,
        }


def _relative_error(q, instance: InverseProblemInstance) -> float:
    denom = float(np.linalg.norm(instance.p_true))
    if denom == 0.0:
        return float(np.linalg.norm(q))
    return float(np.linalg.norm(q - instance.p_true) / denom)


def reconstruct(
    instance: InverseProblemInstance,
    q0,
    beta: float = 1e-6,
    max_iter: int = 100,
    *,
    q_ref=None,
    step_rule: str = "barzilai-borwein",
    grad_tol: float = 1e-10,
    max_backtracks: int = 30,
    armijo: float = 1e-4,
):
    """Gradient descent on the misfit with monotone (Armijo) acceptance.

    step_rule "barzilai-borwein" rescales the step from the last accepted
    pair of iterates; "fixed-scale" restarts each line search from the
    linear-model step.  Returns a ReconstructionResult, or a
    StalledReconstruction instance (an Exception, returned rather than
    raised) when no acceptable step exists; the partial result rides along
    in its .result attribute.
    """
    if step_rule not in ("barzilai-borwein", "fixed-scale"):
        raise ValueError(f"unknown step rule: {step_rule!r}")
    if max_iter < 0:
        raise ValueError("max_iter must be nonnegative")
    q = _check_q(q0, instance).copy()
    ref = q.copy() if q_ref is None else np.asarray(q_ref, float)

    value, grad = misfit_and_gradient(q, instance, beta, ref)
    initial = value
    gnorm = float(np.linalg.norm(grad))
    floor = grad_tol * max(1.0, initial)

    def result(iterations, reason, converged):
        return ReconstructionResult(
            q_hat=q.copy(), iterations=iterations, initial_misfit=initial,
            final_misfit=value, beta=beta,
            relative_error=_relative_error(q, instance),
            grad_norm=gnorm, converged=converged, stop_reason=reason,
        )

    if gnorm <= floor or initial == 0.0:
        return result(0, "gradient below tolerance at the initial guess", True)

    step = value / (gnorm * gnorm)          # linear-model scale
    prev_q = None
    prev_grad = None
    for it in range(1, max_iter + 1):
        if step_rule == "barzilai-borwein" and prev_q is not None:
            dq = q - prev_q
            dg = grad - prev_grad
            denom = float(np.sum(dq * dg))
            if denom > 0.0:
                step = float(np.sum(dq * dq)) / denom
        elif step_rule == "fixed-scale":
            step = value / (gnorm * gnorm)

        accepted = False
        t = step
        for _ in range(max_backtracks + 1):
            trial = q - t * grad
            if np.max(np.abs(trial)) > instance.q_bound:
                trial = np.clip(trial, -instance.q_bound, instance.q_bound)
            trial_value = misfit(trial, instance, beta, ref)
            if trial_value <= value - armijo * t * gnorm * gnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            partial = result(it - 1, "line search failed", False)
            return StalledReconstruction(
                "no step satisfied the descent condition",
                partial,
                {
                    "grad_norm": gnorm,
                    "last_step": t,
                    "backtracks": max_backtracks,
                    "misfit": value,
                    "iteration": it - 1,
                },
            )

        prev_q, prev_grad = q, grad
        q = trial
        step = t
        value, grad = misfit_and_gradient(q, instance, beta, ref)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= floor or value == 0.0:
            return result(it, "gradient below tolerance", True)

    return result(max_iter, "iteration limit", False)


# --------------------------------------------------------------------------
# stability sweep


@dataclass(frozen=True)
class StabilityRecord:
    """One perturbation: distances and their stability ratio."""

    amplitude: float
    potential_distance: float
    trace_distance: float
    ratio: float

    def as_dict(self):
        return {
            "amplitude": float(self.amplitude),
            "potential_distance": float(self.potential_distance),
            "trace_distance": float(self.trace_distance),
            "ratio": float(self.ratio),
        }


@dataclass(frozen=True, eq=False)
class StabilitySweepResult:
    records: list
    empirical_C: float
    loglog_slope: float
    certified: bool
    hypothesis_report: object

    def summary(self):
        return {
            "empirical_C": float(self.empirical_C),
            "loglog_slope": float(self.loglog_slope),
            "certified": bool(self.certified),
            "n_records": len(self.records),
        }


def trace_distance(instance: InverseProblemInstance, q) -> float:
    """Discrete H1(0,T; L2 boundary) distance between the conormal trace
    of y(q) and the noiseless trace of the true potential."""
    q = _check_q(q, instance)
    tr = neumann_trace(_forward_field(q, instance), instance.coeff)
    diff = dataclasses.replace(tr, values=tr.values - instance.clean_data.values)
    return h1l2_boundary_norm(diff)


def potential_distance(instance: InverseProblemInstance, q) -> float:
    """Discrete L2(Omega) distance between q and the true potential."""
    q = np.asarray(q, dtype=float)
    return instance.grid.l2_norm(q - instance.p_true)


def smooth_perturbation(grid: Grid2D, amplitude: float, rng) -> np.ndarray:
    """Seeded smooth real field with sup norm equal to amplitude: a few
    Gaussian bumps plus low Fourier modes (all C2 and then some)."""
    if amplitude == 0.0:
        return np.zeros(grid.shape)
    pts = grid.points
    x, y = pts[..., 0], pts[..., 1]
    xmin, xmax, ymin, ymax = grid.layout.outer.bounds
    ext = min(xmax - xmin, ymax - ymin)
    out = np.zeros(grid.shape)
    for _ in range(2):
        cx = rng.uniform(xmin + 0.2 * ext, xmax - 0.2 * ext)
        cy = rng.uniform(ymin + 0.2 * ext, ymax - 0.2 * ext)
        w = rng.uniform(0.15, 0.35) * ext
        out += rng.normal() * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / w**2)
    for _ in range(2):
        kx = rng.integers(1, 3)
        ky = rng.integers(1, 3)
        phase_x = rng.uniform(0.0, 2.0 * np.pi)
        phase_y = rng.uniform(0.0, 2.0 * np.pi)
        out += 0.5 * rng.normal() * np.cos(
            np.pi * kx * (x - xmin) / (xmax - xmin) + phase_x
        ) * np.cos(np.pi * ky * (y - ymin) / (ymax - ymin) + phase_y)
    sup = float(np.max(np.abs(out)))
    if sup == 0.0:
        return np.zeros(grid.shape)
    return amplitude * out / sup


def certify_instance(instance: InverseProblemInstance, *,
                     grid_resolution: int = 128):
    """Build the weight for the instance geometry and run the hypothesis
    certifier.  Returns (certified, report).  The jump sign check is left
    to the certifier itself so a wrong-way coefficient produces a report
    with a negative H2 margin instead of an exception."""
    a1, a2 = instance.coeff.a1, instance.coeff.a2
    layout = instance.grid.layout
    m2 = 1.0 + max(0.0, a2 - a1)
    w = build_weight(layout, layout.interface.center, a1, a2, M2=m2,
                     enforce_jump_sign=False)
    report = verify_hypotheses(w, grid_resolution=grid_resolution)
    return bool(report.all_ok), report


def stability_sweep(
    instance: InverseProblemInstance,
    n_perturbations: int = 30,
    amplitude_range: tuple = (1e-3, 1e-1),
    seed: int = 7,
    *,
    grid_resolution: int = 128,
) -> StabilitySweepResult:
    """Perturb the true potential with seeded smooth fields at log-spaced
    amplitudes, record (potential distance, trace distance, ratio) for
    each, and report the empirical stability constant max ratio together
    with the hypothesis certificate for the instance geometry.

    Zero-amplitude perturbations are skipped (both distances vanish, the
    ratio is undefined).  Perturbed potentials are clipped to the
    instance sup-norm bound when one is configured.
    """
    if n_perturbations < 0:
        raise ValueError("n_perturbations must be nonnegative")
    lo, hi = float(amplitude_range[0]), float(amplitude_range[1])
    if lo < 0.0 or hi < 0.0:
        raise ValueError("amplitudes must be nonnegative")
    if n_perturbations == 0:
        amps = np.array([])
    elif lo == hi:
        amps = np.full(n_perturbations, lo)
    else:
        if lo == 0.0 or hi == 0.0:
            raise ValueError("log-spaced amplitudes need positive endpoints")
        amps = np.geomspace(lo, hi, n_perturbations)

    rng = np.random.default_rng(seed)
    records = []
    for amp in amps:
        delta = smooth_perturbation(instance.grid, float(amp), rng)
        q = instance.p_true + delta
        if np.isfinite(instance.q_bound):
            q = np.clip(q, -instance.q_bound, instance.q_bound)
        pot = potential_distance(instance, q)
        if pot == 0.0:
            continue
        tr = trace_distance(instance, q)
        ratio = pot / tr if tr > 0.0 else np.inf
        records.append(StabilityRecord(
            amplitude=float(amp), potential_distance=pot,
            trace_distance=tr, ratio=float(ratio),
        ))

    certified, report = certify_instance(instance, grid_resolution=grid_resolution)

    finite = [r for r in records
              if np.isfinite(r.ratio) and r.trace_distance > 0.0]
    if finite:
        empirical_C = max(r.ratio for r in records)
    else:
        empirical_C = float("nan")
    if len(finite) >= 2:
        slope = float(np.polyfit(
            np.log([r.trace_distance for r in finite]),
            np.log([r.potential_distance for r in finite]),
            1,
        )[0])
    else:
        slope = float("nan")

    return StabilitySweepResult(
        records=records, empirical_C=float(empirical_C), loglog_slope=slope,
        certified=certified, hypothesis_report=report,
    )
