"""Star-shaped interface geometry.

The inner subdomain is bounded by a closed curve given in polar form
rho(theta) about a center point.  A periodic cubic spline through uniform
angular samples represents the curve; curvature, the gauge function
mu(x) = |x - center| / rho(x), and the Hessian of mu^2 are all evaluated
from the spline and its first two derivatives.  Strong convexity is
certified by a dense scan of the polar curvature

    kappa = (rho^2 + 2 rho'^2 - rho rho'') / (rho^2 + rho'^2)^(3/2).

The outer domain is a rectangle or a disk; DomainLayout ties the two
together and classifies points into the inner region, the outer region,
or an interface band.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

TWO_PI = 2.0 * np.pi

# region labels used by DomainLayout.classify
OMEGA1 = 1
OMEGA2 = 2
INTERFACE_BAND = 0

_CENTER_EPS = 1e-12


class GeometryError(Exception):
    """Requested construction does not fit the domain geometry."""


class InvalidInterface(GeometryError):
    """Interface samples violate the radial-curve preconditions."""


class GaugeSingular(GeometryError):
    """Gauge evaluation at (or numerically on top of) the center."""


@dataclass(frozen=True)
class RadialInterface:
    """Closed star-shaped curve rho(theta) about ``center``.

    ``spline`` interpolates the uniform samples periodically; ``d1`` and
    ``d2`` are its first and second derivative splines.  All three wrap
    angles automatically, so callers never reduce theta mod 2*pi.
    """

    center: np.ndarray
    angles: np.ndarray
    rho_samples: np.ndarray
    spline: CubicSpline = field(repr=False, compare=False)
    d1: object = field(repr=False, compare=False)
    d2: object = field(repr=False, compare=False)

    @property
    def n_samples(self) -> int:
        return self.rho_samples.size

    def rho(self, theta):
        return self.spline(theta)

    def rho_d1(self, theta):
        return self.d1(theta)

    def rho_d2(self, theta):
        return self.d2(theta)

    def point(self, theta):
        """Curve point(s) at angle theta, shape (..., 2)."""
        theta = np.asarray(theta, dtype=float)
        r = self.spline(theta)
        return self.center + np.stack(
            (r * np.cos(theta), r * np.sin(theta)), axis=-1
        )

    def outward_normal(self, theta):
        """Unit normal pointing out of the inner region, shape (..., 2)."""
        theta = np.asarray(theta, dtype=float)
        r = self.spline(theta)
        dr = self.d1(theta)
        ct, st = np.cos(theta), np.sin(theta)
        # tangent of the counterclockwise parametrization, rotated by -pi/2
        tx = dr * ct - r * st
        ty = dr * st + r * ct
        n = np.stack((ty, -tx), axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def min_radius(self) -> float:
        thetas = np.linspace(0.0, TWO_PI, 8 * self.n_samples, endpoint=False)
        return float(np.min(self.spline(thetas)))


def build_radial_interface(samples, center=(0.0, 0.0)) -> RadialInterface:
    """Build the periodic spline through uniform (angle, radius) samples.

    Requires at least 16 samples at angles 2*pi*k/n, all radii positive.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInterface("samples must be a sequence of (angle, radius) pairs")
    n = arr.shape[0]
    if n < 16:
        raise InvalidInterface(f"need at least 16 samples, got {n}")
    angles = arr[:, 0]
    radii = arr[:, 1]
    if np.any(~np.isfinite(radii)) or np.any(radii <= 0.0):
        raise InvalidInterface("all radii must be finite and positive")
    expected = TWO_PI * np.arange(n) / n
    if np.max(np.abs(angles - expected)) > 1e-9:
        raise InvalidInterface("angles must be uniform on [0, 2*pi) starting at 0")
    th = np.append(expected, TWO_PI)
    rh = np.append(radii, radii[0])
    spline = CubicSpline(th, rh, bc_type="periodic", extrapolate="periodic")
    return RadialInterface(
        center=np.asarray(center, dtype=float),
        angles=expected,
        rho_samples=radii.copy(),
        spline=spline,
        d1=spline.derivative(1),
        d2=spline.derivative(2),
    )


def disk_interface(radius: float, center=(0.0, 0.0), n: int = 64) -> RadialInterface:
    if radius <= 0.0:
        raise InvalidInterface("disk radius must be positive")
    angles = TWO_PI * np.arange(n) / n
    return build_radial_interface(
        np.column_stack((angles, np.full(n, float(radius)))), center=center
    )


def fourier_interface(
    c0: float,
    harmonics: Sequence[tuple[int, float]] = (),
    center=(0.0, 0.0),
    n: int = 256,
) -> RadialInterface:
    """rho(theta) = c0 + sum_k c_k cos(k theta)."""
    angles = TWO_PI * np.arange(n) / n
    radii = np.full(n, float(c0))
    for k, ck in harmonics:
        radii = radii + float(ck) * np.cos(int(k) * angles)
    if np.any(radii <= 0.0):
        raise InvalidInterface("fourier radii must stay positive")
    return build_radial_interface(np.column_stack((angles, radii)), center=center)


def curvature(interface: RadialInterface, theta):
    """Signed curvature of the polar curve at angle(s) theta."""
    theta = np.asarray(theta, dtype=float)
    r = interface.rho(theta)
    d1 = interface.rho_d1(theta)
    d2 = interface.rho_d2(theta)
    return (r * r + 2.0 * d1 * d1 - r * d2) / np.power(r * r + d1 * d1, 1.5)


def certify_strong_convexity(
    interface: RadialInterface, n_scan: int = 4096
) -> tuple[float, bool]:
    """Scan curvature; the curve is strongly convex iff the min is positive."""
    if n_scan < 4 * interface.n_samples:
        raise ValueError("n_scan must be at least 4x the sample count")
    thetas = np.linspace(0.0, TWO_PI, n_scan, endpoint=False)
    kmin = float(np.min(curvature(interface, thetas)))
    return kmin, kmin > 0.0


def _relative(interface: RadialInterface, x):
    x = np.asarray(x, dtype=float)
    rel = x - interface.center
    r = np.hypot(rel[..., 0], rel[..., 1])
    if np.any(r < _CENTER_EPS):
        raise GaugeSingular("gauge evaluated at the center")
    theta = np.arctan2(rel[..., 1], rel[..., 0])
    return rel, r, theta


def gauge(interface: RadialInterface, x):
    """mu(x) = |x - center| / rho(theta(x)); 1 on the curve, <1 inside."""
    _, r, theta = _relative(interface, x)
    return r / interface.rho(theta)


def _gauge_filled(interface: RadialInterface, x):
    """Gauge with the center singularity filled by its limit value 0.

    The angle is undefined at the center but the gauge itself tends to 0
    there, so classification queries need no special casing.
    """
    x = np.asarray(x, dtype=float)
    rel = x - interface.center
    r = np.hypot(rel[..., 0], rel[..., 1])
    theta = np.arctan2(rel[..., 1], rel[..., 0])
    return r / interface.rho(theta)


def _polar_hessian_entries(rho, d1, d2):
    """Entries of the mu^2 Hessian in the (radial, tangential) frame.

    Degree-0 homogeneous in the radius, so they depend on theta only:
        H = (2/rho^2) [[1, -rho'/rho], [-rho'/rho, (3rho'^2 - rho rho'' + rho^2)/rho^2]]
    """
    base = 2.0 / (rho * rho)
    h11 = base
    h12 = base * (-d1 / rho)
    h22 = base * (3.0 * d1 * d1 - rho * d2 + rho * rho) / (rho * rho)
    return h11, h12, h22


def gauge_hessian(interface: RadialInterface, x):
    """Cartesian Hessian of mu^2 at x, shape (..., 2, 2)."""
    rel, r, theta = _relative(interface, x)
    rho = interface.rho(theta)
    d1 = interface.rho_d1(theta)
    d2 = interface.rho_d2(theta)
    h11, h12, h22 = _polar_hessian_entries(rho, d1, d2)
    c = rel[..., 0] / r
    s = rel[..., 1] / r
    out = np.empty(np.shape(theta) + (2, 2))
    out[..., 0, 0] = c * c * h11 - 2.0 * c * s * h12 + s * s * h22
    out[..., 0, 1] = c * s * (h11 - h22) + (c * c - s * s) * h12
    out[..., 1, 0] = out[..., 0, 1]
    out[..., 1, 1] = s * s * h11 + 2.0 * c * s * h12 + c * c * h22
    return out


def smallest_eigenvalue_2x2(mats):
    """Smallest eigenvalue of symmetric (..., 2, 2) matrices, closed form."""
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    d = mats[..., 1, 1]
    mean = 0.5 * (a + d)
    radius = np.sqrt(0.25 * (a - d) ** 2 + b * b)
    return mean - radius


def hessian_lower_bound(
    interface: RadialInterface,
    annulus: tuple[float, float],
    n_scan: int = 2048,
) -> float:
    """Min over the gauge annulus of the smallest mu^2-Hessian eigenvalue."""
    mu_min, mu_max = annulus
    if not (0.0 < mu_min <= mu_max):
        raise ValueError("annulus must satisfy 0 < mu_min <= mu_max")
    if mu_min == mu_max:
        levels = np.array([mu_min])
    else:
        levels = np.linspace(mu_min, mu_max, 5)
    thetas = np.linspace(0.0, TWO_PI, n_scan, endpoint=False)
    rho = interface.rho(thetas)
    u = np.stack((np.cos(thetas), np.sin(thetas)), axis=-1)
    best = np.inf
    for mu in levels:
        pts = interface.center + (mu * rho)[:, None] * u
        eig = smallest_eigenvalue_2x2(gauge_hessian(interface, pts))
        best = min(best, float(np.min(eig)))
    return best


def distance_extrema(interface: RadialInterface, point) -> tuple[float, float]:
    """(min, max) distance from a point to the interface curve.

    Dense scan bracketed and refined with bounded scalar minimization, so
    the values are accurate to well below 1e-10 for smooth curves.
    """
    p = np.asarray(point, dtype=float)
    thetas = np.linspace(0.0, TWO_PI, 4096, endpoint=False)
    pts = interface.point(thetas)
    d = np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])

    def dist(theta):
        q = interface.point(theta)
        return float(np.hypot(q[0] - p[0], q[1] - p[1]))

    step = TWO_PI / thetas.size

    def refine(idx, sign):
        t0 = thetas[idx]
        res = minimize_scalar(
            lambda t: sign * dist(t),
            bounds=(t0 - 2 * step, t0 + 2 * step),
            method="bounded",
            options={"xatol": 1e-13},
        )
        return sign * float(res.fun)

    dmin = min(float(np.min(d)), refine(int(np.argmin(d)), 1.0))
    dmax = max(float(np.max(d)), refine(int(np.argmax(d)), -1.0))
    return dmin, dmax


def resample_from_center(
    interface: RadialInterface, new_center, n_samples: int | None = None
) -> RadialInterface:
    """Radial description of the same curve about a different interior point.

    For each target angle the ray from ``new_center`` is intersected with
    the spline curve by root finding on the bearing, so the new samples lie
    on the old curve to solver precision.
    """
    nc = np.asarray(new_center, dtype=float)
    if n_samples is None:
        n_samples = max(256, interface.n_samples)
    if np.hypot(*(nc - interface.center)) < _CENTER_EPS:
        if n_samples == interface.n_samples:
            return interface
        thetas = TWO_PI * np.arange(n_samples) / n_samples
        return build_radial_interface(
            np.column_stack((thetas, interface.rho(thetas))), center=interface.center
        )
    if gauge(interface, nc) >= 1.0:
        raise GeometryError("new center must lie strictly inside the curve")

    m_dense = max(4096, 16 * interface.n_samples)
    th_dense = np.linspace(0.0, TWO_PI, m_dense + 1)
    rel = interface.point(th_dense) - nc
    bearing = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    if bearing[-1] - bearing[0] < TWO_PI - 1e-9:
        raise GeometryError("curve does not wind once about the new center")

    def bearing_at(theta):
        q = interface.point(theta) - nc
        return np.arctan2(q[1], q[0])

    targets = TWO_PI * np.arange(n_samples) / n_samples
    radii = np.empty(n_samples)
    for j, target in enumerate(targets):
        shifted = bearing[0] + np.mod(target - bearing[0], TWO_PI)
        idx = int(np.searchsorted(bearing, shifted))
        idx = min(max(idx, 1), m_dense)
        lo, hi = th_dense[idx - 1], th_dense[idx]

        def gap(theta, target=target):
            d = bearing_at(theta) - target
            return (d + np.pi) % TWO_PI - np.pi

        glo, ghi = gap(lo), gap(hi)
        if glo == 0.0:
            theta_star = lo
        elif ghi == 0.0:
            theta_star = hi
        elif glo * ghi < 0.0:
            theta_star = brentq(gap, lo, hi, xtol=1e-14)
        else:  # bracket polluted by wrap; widen once
            theta_star = brentq(gap, lo - TWO_PI / m_dense, hi + TWO_PI / m_dense, xtol=1e-14)
        q = interface.point(theta_star) - nc
        radii[j] = np.hypot(q[0], q[1])
    return build_radial_interface(np.column_stack((targets, radii)), center=nc)


@dataclass(frozen=True)
class RectangularDomain:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise GeometryError("degenerate rectangle")

    @property
    def bounds(self):
        return self.xmin, self.xmax, self.ymin, self.ymax

    def contains(self, pts, margin: float = 0.0):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return (
            (x >= self.xmin + margin)
            & (x <= self.xmax - margin)
            & (y >= self.ymin + margin)
            & (y <= self.ymax - margin)
        )

    def boundary_clearance(self, pts):
        """Distance to the boundary, positive inside."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return np.minimum.reduce(
            [x - self.xmin, self.xmax - x, y - self.ymin, self.ymax - y]
        )

    def boundary_samples(self, n: int):
        """n points on the boundary with outward normals and arc weights."""
        lx = self.xmax - self.xmin
        ly = self.ymax - self.ymin
        perimeter = 2.0 * (lx + ly)
        s = perimeter * (np.arange(n) + 0.5) / n
        pts = np.empty((n, 2))
        nrm = np.empty((n, 2))
        for i, si in enumerate(s):
            if si < lx:
                pts[i] = (self.xmin + si, self.ymin)
                nrm[i] = (0.0, -1.0)
            elif si < lx + ly:
                pts[i] = (self.xmax, self.ymin + (si - lx))
                nrm[i] = (1.0, 0.0)
            elif si < 2 * lx + ly:
                pts[i] = (self.xmax - (si - lx - ly), self.ymax)
                nrm[i] = (0.0, 1.0)
            else:
                pts[i] = (self.xmin, self.ymax - (si - 2 * lx - ly))
                nrm[i] = (-1.0, 0.0)
        weights = np.full(n, perimeter / n)
        return pts, nrm, weights


@dataclass(frozen=True)
class DiskDomain:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise GeometryError("disk radius must be positive")

    @property
    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cx + r, cy - r, cy + r

    def contains(self, pts, margin: float = 0.0):
        pts = np.asarray(pts, dtype=float)
        cx, cy = self.center
        r = np.hypot(pts[..., 0] - cx, pts[..., 1] - cy)
        return r <= self.radius - margin

    def boundary_clearance(self, pts):
        pts = np.asarray(pts, dtype=float)
        cx, cy = self.center
        return self.radius - np.hypot(pts[..., 0] - cx, pts[..., 1] - cy)

    def boundary_samples(self, n: int):
        ang = TWO_PI * (np.arange(n) + 0.5) / n
        nrm = np.stack((np.cos(ang), np.sin(ang)), axis=-1)
        pts = np.asarray(self.center, dtype=float) + self.radius * nrm
        weights = np.full(n, TWO_PI * self.radius / n)
        return pts, nrm, weights


@dataclass(frozen=True)
class DomainLayout:
    """Outer domain plus interface curve; closure of the inner region must
    sit strictly inside the outer domain (which keeps the outer region
    connected for the supported star-shaped curves)."""

    outer: RectangularDomain | DiskDomain
    interface: RadialInterface
    clearance: float = field(init=False)

    def __post_init__(self):
        thetas = np.linspace(0.0, TWO_PI, 2048, endpoint=False)
        pts = self.interface.point(thetas)
        clear = float(np.min(self.outer.boundary_clearance(pts)))
        if clear <= 0.0 or not bool(np.all(self.outer.contains(pts))):
            raise GeometryError("interface must lie strictly inside the outer domain")
        object.__setattr__(self, "clearance", clear)

    def gauge(self, pts):
        return gauge(self.interface, pts)

    def classify(self, pts, band: float = 0.0):
        """OMEGA1 / OMEGA2 / INTERFACE_BAND labels by the gauge value."""
        mu = _gauge_filled(self.interface, pts)
        out = np.where(mu <= 1.0, OMEGA1, OMEGA2).astype(np.int8)
        if band > 0.0:
            out = np.where(np.abs(mu - 1.0) <= band, INTERFACE_BAND, out)
        return out

    def contains(self, pts, margin: float = 0.0):
        return self.outer.contains(pts, margin=margin)
