"""Piecewise Carleman weight functions adapted to a coefficient jump.

The weight on each side of the interface is

    psi_j(x) = eta(x) * abar_j * mu(x)^2 + M_j,      {j, k} = {1, 2}

where mu is the gauge of the interface about a center x0 strictly inside
the inner region, abar_1 = a2 and abar_2 = a1 (the coefficient of the
*other* side), eta is a C^2 radial cutoff that vanishes near x0, and the
offsets satisfy M_1 - M_2 = a1 - a2 so that both branches take the value
a2 + M_1 = a1 + M_2 on the interface.  With a1 > a2 this choice makes the
two one-sided conormal derivatives cancel (transmission compatibility)
while their unsigned normal slopes sum to a negative quantity, and keeps
the weight strictly convex away from the cutoff ball.

Time factors for the weighted estimates:

    theta(x, t) = exp(lam * psi(x)) / ((T - t) (T + t))
    phi(x, t)   = (alpha - exp(lam * psi(x))) / ((T - t) (T + t))

with alpha strictly above the grid maximum of exp(lam * psi).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import (
    DomainLayout,
    GaugeSingular,
    GeometryError,
    OMEGA1,
    RadialInterface,
    RectangularDomain,
    TWO_PI,
    distance_extrema,
    certify_strong_convexity,
    gauge,
    resample_from_center,
    smallest_eigenvalue_2x2,
)


class JumpSignError(Exception):
    """The coefficient jump has the wrong sign for the certified weight."""


class DegeneratePair(Exception):
    """The two weight centers coincide (or nearly so)."""


class TimeSingular(Exception):
    """Time-weight evaluation outside the clamped interval."""


@dataclass(frozen=True)
class PiecewiseCoefficient:
    """Principal coefficient: a1 on the inner region, a2 outside."""

    a1: float
    a2: float
    layout: DomainLayout

    def __post_init__(self):
        if self.a1 <= 0.0 or self.a2 <= 0.0:
            raise ValueError("coefficient values must be positive")

    def at(self, pts):
        side = self.layout.classify(pts)
        return np.where(side == OMEGA1, self.a1, self.a2)

    def abar_at(self, pts):
        """Coefficient of the opposite side, the factor entering the weight."""
        side = self.layout.classify(pts)
        return np.where(side == OMEGA1, self.a2, self.a1)


@dataclass(frozen=True)
class Cutoff:
    """C^2 radial cutoff: 0 on r <= r_inner, 1 on r >= r_outer.

    Quintic smoothstep profile in between; value, slope and second
    derivative all match at both ends.
    """

    center: np.ndarray
    r_inner: float
    r_outer: float

    def __post_init__(self):
        if not (0.0 < self.r_inner < self.r_outer):
            raise GeometryError("cutoff radii must satisfy 0 < r_inner < r_outer")

    def _u(self, r):
        w = self.r_outer - self.r_inner
        return np.clip((np.asarray(r, dtype=float) - self.r_inner) / w, 0.0, 1.0), w

    def value(self, r):
        u, _ = self._u(r)
        return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))

    def d1(self, r):
        u, w = self._u(r)
        return 30.0 * u * u * (1.0 - u) ** 2 / w

    def d2(self, r):
        u, w = self._u(r)
        return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (w * w)


@dataclass(frozen=True)
class TransmissionWeight:
    """One piecewise weight: center, recentred interface, coefficient, offsets."""

    center: np.ndarray
    interface: RadialInterface  # radial description about ``center``
    coeff: PiecewiseCoefficient
    M1: float
    M2: float
    cutoff: Cutoff

    @property
    def interface_value(self) -> float:
        """Common value of both branches on the interface."""
        return self.coeff.a2 + self.M1

    def _abar(self, side: int) -> float:
        return self.coeff.a2 if side == OMEGA1 else self.coeff.a1

    def _offset(self, side: int) -> float:
        return self.M1 if side == OMEGA1 else self.M2

    def side_of(self, pts):
        return self.coeff.layout.classify(pts)

    def _polar(self, pts):
        pts = np.asarray(pts, dtype=float)
        rel = pts - self.center
        r = np.hypot(rel[..., 0], rel[..., 1])
        r_safe = np.maximum(r, 1e-300)
        er = rel / r_safe[..., None]
        theta = np.arctan2(rel[..., 1], rel[..., 0])
        return r, r_safe, er, theta

    def _mu2_data(self, pts, want_hessian: bool):
        """mu^2, grad mu^2 and (optionally) the mu^2 Hessian about center."""
        r, r_safe, er, theta = self._polar(pts)
        rho = self.interface.rho(theta)
        d1 = self.interface.rho_d1(theta)
        mu2 = (r / rho) ** 2
        et = np.stack((-er[..., 1], er[..., 0]), axis=-1)
        grad = (2.0 * r / rho**2)[..., None] * er + (
            -2.0 * r * d1 / rho**3
        )[..., None] * et
        hess = None
        if want_hessian:
            d2 = self.interface.rho_d2(theta)
            base = 2.0 / (rho * rho)
            h11 = base
            h12 = base * (-d1 / rho)
            h22 = base * (3.0 * d1 * d1 - rho * d2 + rho * rho) / (rho * rho)
            c, s = er[..., 0], er[..., 1]
            hess = np.empty(np.shape(r) + (2, 2))
            hess[..., 0, 0] = c * c * h11 - 2 * c * s * h12 + s * s * h22
            hess[..., 0, 1] = c * s * (h11 - h22) + (c * c - s * s) * h12
            hess[..., 1, 0] = hess[..., 0, 1]
            hess[..., 1, 1] = s * s * h11 + 2 * c * s * h12 + c * c * h22
        return r, r_safe, er, mu2, grad, hess

    # dead zone: eta and its derivatives vanish for r <= r_inner, so every
    # formula below is evaluated with the singular factors masked out there.

    def psi_side(self, pts, side: int):
        r, _, _, mu2, _, _ = self._mu2_data(pts, want_hessian=False)
        eta = self.cutoff.value(r)
        out = self._abar(side) * eta * mu2 + self._offset(side)
        return np.where(r <= self.cutoff.r_inner, self._offset(side), out)

    def grad_side(self, pts, side: int):
        r, _, er, mu2, gmu2, _ = self._mu2_data(pts, want_hessian=False)
        eta = self.cutoff.value(r)
        deta = self.cutoff.d1(r)
        g = self._abar(side) * (
            eta[..., None] * gmu2 + (mu2 * deta)[..., None] * er
        )
        dead = r <= self.cutoff.r_inner
        return np.where(dead[..., None], 0.0, g)

    def hessian_side(self, pts, side: int):
        r, r_safe, er, mu2, gmu2, hmu2 = self._mu2_data(pts, want_hessian=True)
        eta = self.cutoff.value(r)
        deta = self.cutoff.d1(r)
        d2eta = self.cutoff.d2(r)
        outer_sym = er[..., :, None] * gmu2[..., None, :]
        outer_sym = outer_sym + np.swapaxes(outer_sym, -1, -2)
        er_er = er[..., :, None] * er[..., None, :]
        eye = np.broadcast_to(np.eye(2), er_er.shape)
        hess_eta = d2eta[..., None, None] * er_er + (deta / r_safe)[
            ..., None, None
        ] * (eye - er_er)
        h = self._abar(side) * (
            eta[..., None, None] * hmu2
            + deta[..., None, None] * outer_sym
            + mu2[..., None, None] * hess_eta
        )
        dead = r <= self.cutoff.r_inner
        return np.where(dead[..., None, None], 0.0, h)

    def laplacian_side(self, pts, side: int):
        h = self.hessian_side(pts, side)
        return h[..., 0, 0] + h[..., 1, 1]

    def _dispatch(self, pts, fn):
        side = self.side_of(pts)
        v1 = fn(pts, OMEGA1)
        v2 = fn(pts, 2)
        mask = side == OMEGA1
        extra = v1.ndim - mask.ndim
        if extra:
            mask = mask.reshape(mask.shape + (1,) * extra)
        return np.where(mask, v1, v2)

    def psi(self, pts):
        return self._dispatch(pts, self.psi_side)

    def grad(self, pts):
        return self._dispatch(pts, self.grad_side)

    def hessian(self, pts):
        return self._dispatch(pts, self.hessian_side)

    def laplacian(self, pts):
        return self._dispatch(pts, self.laplacian_side)


def _as_layout(domain, pad_factor: float = 0.6) -> DomainLayout:
    if isinstance(domain, DomainLayout):
        return domain
    if isinstance(domain, RadialInterface):
        thetas = np.linspace(0.0, TWO_PI, 1024, endpoint=False)
        pts = domain.point(thetas)
        pad = pad_factor * float(np.max(domain.rho_samples))
        outer = RectangularDomain(
            float(pts[:, 0].min() - pad),
            float(pts[:, 0].max() + pad),
            float(pts[:, 1].min() - pad),
            float(pts[:, 1].max() + pad),
        )
        return DomainLayout(outer, domain)
    raise TypeError("domain must be a DomainLayout or RadialInterface")


def build_weight(
    domain,
    x0,
    a1: float,
    a2: float,
    M2: float = 1.0,
    cutoff_radii: Optional[tuple[float, float]] = None,
    *,
    n_resample: int | None = None,
    enforce_jump_sign: bool = True,
) -> TransmissionWeight:
    """Construct the piecewise weight centered at x0.

    Checks: positive coefficients with a1 > a2 (unless explicitly disabled,
    which exists so the certifier can *report* a wrong-way jump), positive
    offsets, x0 strictly inside the inner region, and the cutoff ball
    strictly inside as well.
    """
    layout = _as_layout(domain)
    if a1 <= 0.0 or a2 <= 0.0:
        raise ValueError("coefficients must be positive")
    if enforce_jump_sign and not a1 > a2:
        raise JumpSignError(f"need a1 > a2 for the certified weight, got {a1} <= {a2}")
    M1 = M2 + (a1 - a2)
    if M2 <= 0.0 or M1 <= 0.0:
        raise ValueError("weight offsets must be positive")
    x0 = np.asarray(x0, dtype=float)
    iface = layout.interface
    try:
        mu0 = float(gauge(iface, x0))
    except GaugeSingular:
        mu0 = 0.0
    if mu0 >= 1.0:
        raise GeometryError("weight center must lie strictly inside the inner region")
    recentred = resample_from_center(iface, x0, n_samples=n_resample)
    alpha0 = recentred.min_radius()
    if cutoff_radii is None:
        r_outer = 0.25 * alpha0
        r_inner = 0.5 * r_outer
    else:
        r_inner, r_outer = map(float, cutoff_radii)
        if not (0.0 < r_inner < r_outer):
            raise GeometryError("cutoff radii must satisfy 0 < r_inner < r_outer")
        if r_outer >= alpha0:
            raise GeometryError(
                "cutoff ball must sit strictly inside the inner region "
                f"(r_outer={r_outer} >= {alpha0})"
            )
    coeff = PiecewiseCoefficient(a1=float(a1), a2=float(a2), layout=layout)
    return TransmissionWeight(
        center=x0,
        interface=recentred,
        coeff=coeff,
        M1=float(M1),
        M2=float(M2),
        cutoff=Cutoff(center=x0, r_inner=r_inner, r_outer=r_outer),
    )


@dataclass(frozen=True)
class CarlemanParams:
    """Scalar parameters of the weighted estimate.

    alpha must dominate the grid maximum of exp(lam * psi); delta_t is the
    clamp that keeps the time factor finite near t = +-T.
    """

    s: float
    lam: float
    alpha: float
    T: float
    delta_t: float
    psi_sup: float = float("nan")

    def __post_init__(self):
        if self.s < 0.0 or self.lam <= 0.0:
            raise ValueError("need s >= 0 and lam > 0")
        if self.T <= 0.0 or not (0.0 < self.delta_t < self.T):
            raise ValueError("need 0 < delta_t < T")
        if np.isfinite(self.psi_sup) and self.alpha <= np.exp(self.lam * self.psi_sup):
            raise ValueError("alpha must strictly dominate exp(lam * psi)")


def psi_grid_max(weight: TransmissionWeight, n_grid: int = 192) -> float:
    """Max of psi over a dense scan of the outer domain."""
    xmin, xmax, ymin, ymax = weight.coeff.layout.outer.bounds
    xs = np.linspace(xmin, xmax, n_grid)
    ys = np.linspace(ymin, ymax, n_grid)
    pts = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    pts = pts[weight.coeff.layout.contains(pts)]
    return float(np.max(weight.psi(pts)))


def fit_carleman_params(
    weight: TransmissionWeight,
    s: float,
    lam: float,
    T: float,
    *,
    delta_t: float | None = None,
    headroom: float = 1.05,
    n_grid: int = 192,
    partner: TransmissionWeight | None = None,
) -> CarlemanParams:
    """Pick alpha = headroom * max exp(lam psi) and a default time clamp."""
    sup = psi_grid_max(weight, n_grid=n_grid)
    if partner is not None:
        sup = max(sup, psi_grid_max(partner, n_grid=n_grid))
    alpha = headroom * float(np.exp(lam * sup))
    if delta_t is None:
        delta_t = T / 64.0
    return CarlemanParams(
        s=float(s), lam=float(lam), alpha=alpha, T=float(T),
        delta_t=float(delta_t), psi_sup=sup,
    )


def _time_factor(params: CarlemanParams, t):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > params.T - params.delta_t + 1e-12):
        raise TimeSingular("time weight evaluated outside the clamped interval")
    return 1.0 / ((params.T - t) * (params.T + t))


def eval_theta(weight: TransmissionWeight, params: CarlemanParams, x, t):
    return np.exp(params.lam * weight.psi(x)) * _time_factor(params, t)


def eval_phi(weight: TransmissionWeight, params: CarlemanParams, x, t):
    return (params.alpha - np.exp(params.lam * weight.psi(x))) * _time_factor(
        params, t
    )


@dataclass(frozen=True)
class HypothesisRecord:
    name: str
    ok: bool
    margin: float
    worst_point: tuple[float, float]

    def as_dict(self):
        return {
            "name": self.name,
            "ok": bool(self.ok),
            "margin": float(self.margin),
            "worst_point": [float(self.worst_point[0]), float(self.worst_point[1])],
        }


@dataclass(frozen=True)
class HypothesisReport:
    records: dict[str, HypothesisRecord]

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.records.values())

    def __getitem__(self, name: str) -> HypothesisRecord:
        return self.records[name]

    def as_dict(self):
        return {
            "all_ok": self.all_ok,
            "records": {k: r.as_dict() for k, r in self.records.items()},
        }


def _worst(points, values, pick_max: bool) -> tuple[float, float]:
    idx = int(np.argmax(values)) if pick_max else int(np.argmin(values))
    return (float(points[idx, 0]), float(points[idx, 1]))


def verify_hypotheses(
    weight: TransmissionWeight,
    grid_resolution: int = 128,
    tolerance: float = 1e-8,
    n_interface: int = 512,
) -> HypothesisReport:
    """Certify the interface and interior conditions of the weight.

    Records (margin > 0 means the condition holds):
      strong_convexity  min interface curvature
      Tr    transmission compatibility: value continuity and cancellation of
            a1 dpsi1/dnu1 + a2 dpsi2/dnu2 on the interface, margin =
            tolerance - worst residual
      H1    psi constant (= a2 + M1) along the interface, same convention
      H2    dpsi1/dnu1 + dpsi2/dnu2 < 0 on the interface, margin = -(worst sum)
      H3    |grad psi| bounded below on the domain minus the cutoff ball
      H4    smallest eigenvalue of 2 a^2 D^2 psi bounded below on the same set
    """
    if grid_resolution < 64:
        raise ValueError("grid_resolution must be at least 64")
    if n_interface < 256:
        raise ValueError("need at least 256 interface samples")
    records: dict[str, HypothesisRecord] = {}

    kmin, convex_ok = certify_strong_convexity(
        weight.interface, n_scan=max(4096, 4 * weight.interface.n_samples)
    )
    records["strong_convexity"] = HypothesisRecord(
        "strong_convexity", convex_ok, kmin, (float("nan"), float("nan"))
    )

    thetas = np.linspace(0.0, TWO_PI, n_interface, endpoint=False)
    ipts = weight.interface.point(thetas)
    nu = weight.interface.outward_normal(thetas)
    a1, a2 = weight.coeff.a1, weight.coeff.a2

    psi1 = weight.psi_side(ipts, 1)
    psi2 = weight.psi_side(ipts, 2)
    g1 = weight.grad_side(ipts, 1)
    g2 = weight.grad_side(ipts, 2)
    dn1 = np.einsum("ij,ij->i", g1, nu)       # dpsi1/dnu1
    dn2 = -np.einsum("ij,ij->i", g2, nu)      # dpsi2/dnu2, nu2 = -nu1

    value_jump = np.abs(psi1 - psi2)
    flux_residual = np.abs(a1 * dn1 + a2 * dn2)
    tr_res = np.maximum(value_jump, flux_residual)
    records["Tr"] = HypothesisRecord(
        "Tr",
        bool(np.max(tr_res) < tolerance),
        float(tolerance - np.max(tr_res)),
        _worst(ipts, tr_res, pick_max=True),
    )

    const_res = np.abs(psi1 - weight.interface_value)
    records["H1"] = HypothesisRecord(
        "H1",
        bool(np.max(const_res) < tolerance),
        float(tolerance - np.max(const_res)),
        _worst(ipts, const_res, pick_max=True),
    )

    h2_sum = dn1 + dn2
    records["H2"] = HypothesisRecord(
        "H2",
        bool(np.max(h2_sum) < 0.0),
        float(-np.max(h2_sum)),
        _worst(ipts, h2_sum, pick_max=True),
    )

    # interior scan: inside the outer domain, outside the cutoff ball
    xmin, xmax, ymin, ymax = weight.coeff.layout.outer.bounds
    xs = np.linspace(xmin, xmax, grid_resolution)
    ys = np.linspace(ymin, ymax, grid_resolution)
    pts = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    keep = weight.coeff.layout.contains(pts)
    rr = np.hypot(pts[:, 0] - weight.center[0], pts[:, 1] - weight.center[1])
    keep &= rr >= weight.cutoff.r_outer
    pts = pts[keep]

    grad_norm = np.linalg.norm(weight.grad(pts), axis=-1)
    records["H3"] = HypothesisRecord(
        "H3",
        bool(np.min(grad_norm) > 0.0),
        float(np.min(grad_norm)),
        _worst(pts, grad_norm, pick_max=False),
    )

    a_pts = weight.coeff.at(pts)
    mats = 2.0 * (a_pts**2)[:, None, None] * weight.hessian(pts)
    eigs = smallest_eigenvalue_2x2(mats)
    records["H4"] = HypothesisRecord(
        "H4",
        bool(np.min(eigs) > 0.0),
        float(np.min(eigs)),
        _worst(pts, eigs, pick_max=False),
    )
    return HypothesisReport(records=records)


@dataclass(frozen=True)
class EpsilonPair:
    """Two weights with disjoint cutoff balls plus the separation radius."""

    w1: TransmissionWeight
    w2: TransmissionWeight
    eps: float
    d: float
    alpha1: float
    alpha2: float
    D1: float
    D2: float
    h5_margin_1: float  # min of psi^2 - psi^1 over the ball at x1
    h5_margin_2: float  # min of psi^1 - psi^2 over the ball at x2


def build_epsilon_pair(
    domain,
    x1,
    x2,
    a1: float,
    a2: float,
    M2: float = 1.0,
    *,
    h5_scan: int = 64,
    safety: float = 0.9,
) -> EpsilonPair:
    """Construct the two-center weight pair with certified separation.

    eps = safety * min(d * alpha1 / D2, d * alpha2 / D1, d) with
    d = |x1 - x2| / 2, alpha_k = dist(x_k, interface), D_k the max distance,
    and each weight carries the cutoff radii (eps / 2, eps).  The pair
    domination condition (H5) is verified by a grid scan over each ball.
    """
    layout = _as_layout(domain)
    iface = layout.interface
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    d = 0.5 * float(np.hypot(*(x1 - x2)))
    if d < 1e-12:
        raise DegeneratePair("weight centers must be distinct")
    for xk in (x1, x2):
        if float(gauge(iface, xk)) >= 1.0:
            raise GeometryError("both centers must lie strictly inside the inner region")
    alpha1, D1 = distance_extrema(iface, x1)
    alpha2, D2 = distance_extrema(iface, x2)
    eps = safety * min(d * alpha1 / D2, d * alpha2 / D1, d)
    if eps >= min(alpha1, alpha2):
        raise GeometryError("separation balls do not fit inside the inner region")
    w1 = build_weight(layout, x1, a1, a2, M2, cutoff_radii=(0.5 * eps, eps))
    w2 = build_weight(layout, x2, a1, a2, M2, cutoff_radii=(0.5 * eps, eps))

    # (H5) scan: the opposite weight dominates on each ball
    u = np.linspace(-1.0, 1.0, h5_scan)
    offs = np.stack(np.meshgrid(u, u), axis=-1).reshape(-1, 2) * eps
    offs = offs[np.hypot(offs[:, 0], offs[:, 1]) <= eps]
    ball1 = x1 + offs
    ball2 = x2 + offs
    margin1 = float(np.min(w2.psi(ball1) - w1.psi(ball1)))
    margin2 = float(np.min(w1.psi(ball2) - w2.psi(ball2)))
    if margin1 <= 0.0 or margin2 <= 0.0:
        raise GeometryError(
            f"pair domination failed: margins {margin1:.3e}, {margin2:.3e}"
        )
    return EpsilonPair(
        w1=w1, w2=w2, eps=float(eps), d=d,
        alpha1=float(alpha1), alpha2=float(alpha2),
        D1=float(D1), D2=float(D2),
        h5_margin_1=margin1, h5_margin_2=margin2,
    )


def sigma_plus(weight: TransmissionWeight, points, normals):
    """Boolean mask of outer-boundary samples with grad psi . nu > 0."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    normals = np.asarray(normals, dtype=float).reshape(-1, 2)
    if points.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    g = weight.grad(points)
    return np.einsum("ij,ij->i", g, normals) > 0.0
