"""Support-function calculus for families of planar convex sections.

A :class:`SupportField` samples ``F(z, theta) = max_{x in S_z} <x, (cos theta, sin theta)>``
on a uniform ``z`` grid and a uniform periodic ``theta`` grid.  A field may
carry a section *model*, an object with a vectorized method
``support(rows, theta)`` evaluating the exact support value of row ``rows``
at arbitrary angles; models let distance queries resolve sections that are
much thinner than the angular grid spacing.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certificate import Certificate
from .errors import GridMismatch, InvalidSupport, OutOfRange

TOL_CC = 1e-7
MARGIN_CURV = 1e-9
TOL_SUPPORT_FN = 1e-9
_MAGIC = b"CCBSUPF1"


def theta_grid(n_theta: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n_theta) / n_theta


def z_grid(z_max: float, z_step: float) -> np.ndarray:
    n = int(round(z_max / z_step))
    if abs(n * z_step - z_max) > 1e-9 * z_step:
        raise ValueError("z_max must be a multiple of z_step")
    return np.arange(-n, n + 1) * z_step


@dataclass(eq=False)
class SupportField:
    """Sampled support function of a family of horizontal sections."""

    z: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    provenance: str = "field"
    model: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, float)
        self.theta = np.asarray(self.theta, float)
        self.values = np.asarray(self.values, float)
        if self.values.shape != (self.z.size, self.theta.size):
            raise ValueError("values must have shape (len(z), len(theta))")

    @property
    def n_theta(self) -> int:
        return self.theta.size

    @property
    def z_step(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def theta_step(self) -> float:
        return 2.0 * math.pi / self.n_theta

    def row_of(self, z: float) -> int:
        i = int(round((z - self.z[0]) / self.z_step))
        if i < 0 or i >= self.z.size or abs(self.z[i] - z) > 1e-9:
            raise OutOfRange(f"{z} is not a grid height")
        return i

    def rows_in(self, z_window) -> np.ndarray:
        lo, hi = z_window
        tol = 1e-9 * self.z_step
        if lo < self.z[0] - tol or hi > self.z[-1] + tol:
            raise OutOfRange("window exceeds the field grid")
        return np.nonzero((self.z >= lo - tol) & (self.z <= hi + tol))[0]

    def same_grid(self, other: "SupportField") -> bool:
        return (self.values.shape == other.values.shape and np.allclose(self.z, other.z, rtol=0, atol=1e-12)
                and np.allclose(self.theta, other.theta, rtol=0, atol=1e-12))

    def with_values(self, values, provenance=None, model=None) -> "SupportField":
        return SupportField(self.z, self.theta, values, provenance or self.provenance, model)

    # serialization
    def to_binary(self, path) -> None:
        """Little-endian layout: 8-byte magic, int64 nz, int64 ntheta,
        float64 z_min, float64 z_max, 16-byte ASCII provenance, then
        ``nz * ntheta`` float64 values in row-major (z-major) order."""
        prov = self.provenance.encode("ascii")[:16].ljust(16, b"\0")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<qqdd", self.z.size, self.n_theta, float(self.z[0]), float(self.z[-1])))
            fh.write(prov)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "SupportField":
        with open(path, "rb") as fh:
            if fh.read(8) != _MAGIC:
                raise ValueError("not a support-field binary")
            nz, nt, z0, z1 = struct.unpack("<qqdd", fh.read(32))
            prov = fh.read(16).rstrip(b"\0").decode("ascii")
            data = np.frombuffer(fh.read(8 * nz * nt), dtype="<f8")
        if data.size != nz * nt:
            raise ValueError("truncated support-field binary")
        return cls(np.linspace(z0, z1, nz), theta_grid(nt), data.reshape(nz, nt).copy(), prov)

    def to_csv(self, path) -> None:
        zz, tt = np.meshgrid(self.z, self.theta, indexing="ij")
        table = np.column_stack([zz.ravel(), tt.ravel(), self.values.ravel()])
        np.savetxt(path, table, delimiter=",", header="z,theta,F", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, provenance: str = "field") -> "SupportField":
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        z = np.unique(table[:, 0])
        th = np.unique(table[:, 1])
        return cls(z, th, table[:, 2].reshape(z.size, th.size), provenance)


# ---------------------------------------------------------------- angular calculus


def spectral_derivative(h: np.ndarray, order: int = 1) -> np.ndarray:
    """Derivative of periodic samples along the last axis.

    Uses FFT differentiation for power-of-two lengths and fourth-order
    central differences otherwise.
    """
    h = np.asarray(h, float)
    n = h.shape[-1]
    if n & (n - 1) == 0:
        k = np.fft.rfftfreq(n, d=1.0 / n)
        mult = (1j * k) ** order
        if order % 2 == 1:
            mult[-1] = 0.0  # Nyquist mode has no odd derivative
        return np.fft.irfft(np.fft.rfft(h, axis=-1) * mult, n=n, axis=-1)
    d = 2.0 * math.pi / n
    out = h
    for _ in range(order):
        out = (-np.roll(out, -2, -1) + 8 * np.roll(out, -1, -1) - 8 * np.roll(out, 1, -1) + np.roll(out, 2, -1)) / (12 * d)
    return out


def discrete_curvature_radius(h: np.ndarray) -> np.ndarray:
    """Exact discrete analogue of ``h + h''`` along the last axis.

    For support samples at equally spaced angles the quantity
    ``(h[i+1] + h[i-1] - 2 cos(d) h[i]) / (2 (1 - cos d))`` is the edge length
    of the circumscribed polygon divided by ``2 tan(d/2)``.  It equals ``r``
    for a disc of radius ``r`` (any center), is nonnegative for every convex
    set, vanishes along the interior angles of a segment and is linear in
    ``h``.
    """
    h = np.asarray(h, float)
    n = h.shape[-1]
    d = 2.0 * math.pi / n
    c = math.cos(d)
    return (np.roll(h, -1, -1) + np.roll(h, 1, -1) - 2.0 * c * h) / (2.0 * (1.0 - c))


@dataclass
class ConvexSectionBoundary:
    """Boundary points of a convex section indexed by outward normal angle."""

    theta: np.ndarray
    points: np.ndarray  # (n, 2)

    def support(self, theta=None) -> np.ndarray:
        """Support values recomputed as a max over the boundary points."""
        th = self.theta if theta is None else np.asarray(theta, float)
        u = np.stack([np.cos(th), np.sin(th)], axis=1)
        return np.max(u @ self.points.T, axis=1)


def reconstruct_section(h, theta=None, check: bool = True) -> ConvexSectionBoundary:
    """Boundary points ``p = h u + h' u_perp`` of a smooth slice."""
    h = np.asarray(h, float)
    n = h.size
    th = theta_grid(n) if theta is None else np.asarray(theta, float)
    if check:
        radius = discrete_curvature_radius(h)
        scale = max(1.0, float(np.max(np.abs(h))))
        if float(np.min(radius)) < -TOL_SUPPORT_FN * scale:
            raise InvalidSupport(f"slice is not a support function (min h+h'' {np.min(radius):.3e})")
    dh = spectral_derivative(h)
    c, s = np.cos(th), np.sin(th)
    pts = np.stack([h * c - dh * s, h * s + dh * c], axis=1)
    return ConvexSectionBoundary(th, pts)


def minkowski_combine(fields: list, weights) -> SupportField:
    """Weighted Minkowski combination: the support values combine linearly."""
    w = np.asarray(weights, float)
    if len(fields) != w.size or len(fields) == 0:
        raise ValueError("need one weight per field")
    if np.any(w < 0) or abs(float(np.sum(w)) - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to 1")
    base = fields[0]
    for f in fields[1:]:
        if not base.same_grid(f):
            raise GridMismatch("fields live on different grids")
    values = sum(wi * f.values for wi, f in zip(w, fields))
    return base.with_values(values, provenance="combined")


def z_second_difference(field: SupportField) -> np.ndarray:
    v = field.values
    return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / field.z_step**2


def z_convexity_certificate(field: SupportField, z_window=None, tol_cc: float = TOL_CC) -> Certificate:
    """Central second differences in ``z`` must be nonnegative up to ``tol_cc * max(1, |F|)``.

    Rows holding NaN (undefined sections) are skipped together with their
    neighbours.
    """
    d2 = z_second_difference(field)
    f = field.values[1:-1]
    zs = field.z[1:-1]
    valid = np.all(np.isfinite(field.values[2:]) & np.isfinite(field.values[1:-1]) & np.isfinite(field.values[:-2]), axis=1)
    if z_window is not None:
        valid &= (zs >= z_window[0] - 1e-12) & (zs <= z_window[1] + 1e-12)
    if not np.any(valid):
        return Certificate("z_convexity", False, float("nan"), None, {"reason": "no rows in window"})
    d2v, fv = d2[valid], f[valid]
    slack = d2v + tol_cc * np.maximum(1.0, np.abs(fv))
    i, j = np.unravel_index(int(np.argmin(slack)), slack.shape)
    k = int(np.argmin(d2v.min(axis=1)))
    return Certificate(
        name="z_convexity",
        passed=bool(slack[i, j] >= 0),
        margin=float(d2v.min()),
        witness={"z": float(zs[valid][i]), "theta": float(field.theta[j]), "slack": float(slack[i, j])},
        details={"rows": int(valid.sum()), "tol_cc": tol_cc, "argmin_z": float(zs[valid][k])},
    )


def curvature_positivity_certificate(field: SupportField, margin_curv: float = MARGIN_CURV,
                                     method: str = "discrete") -> Certificate:
    """Every slice must have ``h + h'' >= margin_curv``.

    ``method='discrete'`` uses :func:`discrete_curvature_radius`;
    ``method='spectral'`` differentiates spectrally.  Fields of strip
    provenance have segment sections and are reported as not applicable.
    """
    if field.provenance == "strip":
        return Certificate("curvature_positivity", False, float("nan"), None,
                           {"applicable": False, "reason": "segment sections"})
    v = field.values
    finite = np.all(np.isfinite(v), axis=1)
    if method == "discrete":
        r = discrete_curvature_radius(v[finite])
    elif method == "spectral":
        r = v[finite] + spectral_derivative(v[finite], 2)
    else:
        raise ValueError(f"unknown method {method!r}")
    i, j = np.unravel_index(int(np.argmin(r)), r.shape)
    m = float(r[i, j])
    return Certificate(
        name="curvature_positivity",
        passed=m >= margin_curv,
        margin=m,
        witness={"z": float(field.z[finite][i]), "theta": float(field.theta[j])},
        details={"method": method, "margin_curv": margin_curv, "applicable": True},
    )


def _golden_max(fun, lo: float, hi: float, iters: int = 60):
    """Golden-section search for the maximum of a unimodal function."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def section_distance(point, h, theta=None, support=None) -> float:
    """Distance from a point to the convex section with support samples ``h``.

    Uses ``d = max(0, max_theta (<p, u> - h))`` over the grid angles.  When a
    callable ``support(theta)`` is supplied, the maximizing grid angle is
    refined by golden-section search.
    """
    p = np.asarray(point, float)
    h = np.asarray(h, float)
    th = theta_grid(h.size) if theta is None else np.asarray(theta, float)
    gap = p[0] * np.cos(th) + p[1] * np.sin(th) - h
    j = int(np.argmax(gap))
    best = float(gap[j])
    if support is not None:
        step = 2.0 * math.pi / h.size

        def fun(t):
            return p[0] * math.cos(t) + p[1] * math.sin(t) - float(support(t))

        _, val = _golden_max(fun, th[j] - step, th[j] + step)
        best = max(best, val)
    return max(0.0, best)


def field_sup_distance(a: SupportField, b: SupportField, z_window=(-10.0, 10.0)) -> float:
    """``max |F_a - F_b|`` over grid nodes with ``z`` in the window."""
    if not a.same_grid(b):
        raise GridMismatch("fields live on different grids")
    rows = a.rows_in(z_window)
    return float(np.max(np.abs(a.values[rows] - b.values[rows])))


def disc_field(z, n_theta: int, radius, center=(0.0, 0.0), provenance: str = "disc") -> SupportField:
    """Field of discs with per-row radius and fixed or per-row center."""
    z = np.asarray(z, float)
    th = theta_grid(n_theta)
    r = np.broadcast_to(np.asarray(radius, float), z.shape)
    cx, cy = (np.broadcast_to(np.asarray(c, float), z.shape) for c in center)
    values = r[:, None] + np.outer(cx, np.cos(th)) + np.outer(cy, np.sin(th))
    return SupportField(z, th, values, provenance, DiscSections(r, cx, cy))


class DiscSections:
    """Exact disc sections."""

    kind = "disc"

    def __init__(self, radius, cx, cy):
        self.r = np.asarray(radius, float)
        self.c = np.stack([cx, cy], axis=1)

    def support(self, rows, theta):
        return self.r[rows] + self.c[rows, 0] * np.cos(theta) + self.c[rows, 1] * np.sin(theta)

    def boundary_point(self, rows, theta):
        r = self.r[rows]
        return np.stack([self.c[rows, 0] + r * np.cos(theta), self.c[rows, 1] + r * np.sin(theta)], axis=-1)

    def radius(self):
        return self.r + np.linalg.norm(self.c, axis=1)

    def lipschitz_theta(self):
        return np.linalg.norm(self.c, axis=1)
