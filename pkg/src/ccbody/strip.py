"""Ruled strips with segment sections and their compactly supported perturbation.

A strip is the union over ``z`` of the segments
``{(u1 + t f1, u2 + t f2, z) : |t| <= 1}``.  The direction curve solves
``f'' = g f`` and the midpoint curve solves ``u'' = rho f`` with ``rho``
supported in ``|z| <= 1/2`` and chosen so that ``u`` vanishes outside that
interval.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicHermiteSpline

from .certificate import Certificate
from .errors import DivisionNearZero, IntegratorFailure, NoKernelVector, OutOfRange, PreconditionError
from .supportgeo import SupportField, theta_grid, z_grid

ODE_STEP = 1.0 / 1024.0
TOL_ODE = 1e-8
TOL_SUPPORT = 1e-9
TOL_CC = 1e-7


# ---------------------------------------------------------------- sampled functions


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Values and derivatives on a uniform grid with cubic Hermite interpolation.

    ``exact`` optionally holds closed forms ``(value, derivative)`` used to
    evaluate off-grid points without interpolation error.
    """

    z_min: float
    z_max: float
    values: np.ndarray
    derivative: np.ndarray
    exact: Optional[tuple[Callable, Callable]] = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, float)
        d = np.asarray(self.derivative, float)
        if v.ndim != 1 or v.shape != d.shape or v.size < 2 or not self.z_min < self.z_max:
            raise ValueError("need matching 1-D value/derivative arrays on a nondegenerate interval")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "derivative", d)

    @property
    def n_points(self) -> int:
        return self.values.size

    @property
    def step(self) -> float:
        return (self.z_max - self.z_min) / (self.n_points - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.n_points)

    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.grid, self.values, self.derivative, extrapolate=False)

    def _check(self, z):
        z = np.asarray(z, float)
        tol = 1e-12 * max(1.0, abs(self.z_min), abs(self.z_max))
        if np.any(z < self.z_min - tol) or np.any(z > self.z_max + tol):
            raise OutOfRange(f"z outside [{self.z_min}, {self.z_max}]")
        return np.clip(z, self.z_min, self.z_max)

    def __call__(self, z):
        z = self._check(z)
        if self.exact is not None:
            return self.exact[0](z)
        return self._spline()(z)

    def slope(self, z):
        z = self._check(z)
        if self.exact is not None:
            return self.exact[1](z)
        return self._spline().derivative()(z)

    def index_of(self, z: float) -> int:
        """Grid index of a node; raises if ``z`` is not a node."""
        i = int(round((z - self.z_min) / self.step))
        if i < 0 or i >= self.n_points or abs(self.z_min + i * self.step - z) > 1e-9 * self.step:
            raise OutOfRange(f"{z} is not a grid node")
        return i

    def midpoints(self) -> np.ndarray:
        """Values at cell midpoints (exact when available, else Hermite)."""
        if self.exact is not None:
            zs = self.grid
            return self.exact[0](0.5 * (zs[1:] + zs[:-1]))
        v, d, h = self.values, self.derivative, self.step
        return 0.5 * (v[1:] + v[:-1]) + 0.125 * h * (d[:-1] - d[1:])

    def scaled(self, s: float) -> "SampledFunction":
        exact = None
        if self.exact is not None:
            e0, e1 = self.exact
            exact = (lambda z, e0=e0: s * e0(z), lambda z, e1=e1: s * e1(z))
        return SampledFunction(self.z_min, self.z_max, s * self.values, s * self.derivative, exact)

    def to_dict(self) -> dict:
        return {"z_min": self.z_min, "z_max": self.z_max, "values": self.values.tolist(),
                "derivative": self.derivative.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SampledFunction":
        return cls(float(d["z_min"]), float(d["z_max"]), np.asarray(d["values"]), np.asarray(d["derivative"]))


def _grid(z_max: float, step: float) -> np.ndarray:
    n = int(round(z_max / step))
    if abs(n * step - z_max) > 1e-9 * step:
        raise PreconditionError("z_max must be a multiple of the step")
    return np.arange(-n, n + 1) * step


def bump(x):
    """``exp(-1/(1-x^2))`` on ``|x| < 1`` and 0 elsewhere."""
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def bump_slope(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi**2)) * (-2.0 * xi / (1.0 - xi**2) ** 2)
    return out


def from_callables(value: Callable, slope: Callable, z_max: float, step: float) -> SampledFunction:
    zs = _grid(z_max, step)
    return SampledFunction(-z_max, z_max, value(zs), slope(zs), (value, slope))


def default_g(z_max: float = 4.0, step: float = ODE_STEP, amplitude: float = 1.0) -> SampledFunction:
    """``g(z) = amplitude * exp(-1/(1-z^2))`` for ``|z| < 1``, zero elsewhere."""
    return from_callables(lambda z: amplitude * bump(z), lambda z: amplitude * bump_slope(z), z_max, step)


def zero_function(z_max: float = 4.0, step: float = ODE_STEP) -> SampledFunction:
    return from_callables(lambda z: np.zeros_like(np.asarray(z, float)),
                          lambda z: np.zeros_like(np.asarray(z, float)), z_max, step)


# ---------------------------------------------------------------- integrators


def _rk4_homogeneous(c_nodes, c_mid, h, y0, v0, forward=True):
    """Classical RK4 for ``y'' = c(z) y`` over a node sequence."""
    n = len(c_nodes)
    ys = np.empty(n)
    vs = np.empty(n)
    y, v = float(y0), float(v0)
    ys[0], vs[0] = y, v
    hh = h if forward else -h
    for i in range(n - 1):
        c0, cm, c1 = c_nodes[i], c_mid[i], c_nodes[i + 1]
        k1y, k1v = v, c0 * y
        k2y, k2v = v + 0.5 * hh * k1v, cm * (y + 0.5 * hh * k1y)
        k3y, k3v = v + 0.5 * hh * k2v, cm * (y + 0.5 * hh * k2y)
        k4y, k4v = v + hh * k3v, c1 * (y + hh * k3y)
        y += hh / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        v += hh / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        ys[i + 1], vs[i + 1] = y, v
    return ys, vs


def _solve_from_zero(zs, c_nodes, c_mid, y0, v0):
    """Integrate from the central node toward both ends."""
    h = zs[1] - zs[0]
    i0 = len(zs) // 2
    yr, vr = _rk4_homogeneous(c_nodes[i0:], c_mid[i0:], h, y0, v0, True)
    yl, vl = _rk4_homogeneous(c_nodes[i0::-1], c_mid[i0 - 1 :: -1] if i0 > 0 else c_mid[:0], h, y0, v0, False)
    y = np.concatenate([yl[::-1], yr[1:]])
    v = np.concatenate([vl[::-1], vr[1:]])
    return y, v


def _coefficient_samples(g: SampledFunction, zs: np.ndarray):
    mids = 0.5 * (zs[1:] + zs[:-1])
    if g.exact is not None:
        return g.exact[0](zs), g.exact[0](mids)
    return g(zs), g(mids)


def solve_even_odd(g: SampledFunction, z_max: Optional[float] = None, tol: float = TOL_ODE,
                   refine: int = 10) -> tuple[SampledFunction, SampledFunction]:
    """Even and odd solutions of ``y'' = g y`` normalized at ``z = 0``.

    The solution is integrated outward from 0 with RK4 on the grid of ``g``.
    A run with ``refine`` times smaller steps serves as the error oracle;
    the discrepancy at shared nodes, relative to ``max |y|``, must stay below
    ``tol``.
    """
    if z_max is None:
        z_max = min(-g.z_min, g.z_max)
    if z_max < 2:
        raise PreconditionError("z_max must be at least 2")
    step = g.step
    zs = _grid(z_max, step)
    if zs[0] < g.z_min - 1e-12 or zs[-1] > g.z_max + 1e-12:
        raise OutOfRange("g does not cover the requested range")
    c_nodes, c_mid = _coefficient_samples(g, zs)
    if np.max(np.abs(c_nodes - c_nodes[::-1])) > 1e-12 * max(1.0, np.max(np.abs(c_nodes))):
        raise PreconditionError("g must be even")

    # refinement oracle on the part of the axis where g does not vanish;
    # beyond it both runs propagate the same affine solution exactly
    support = np.nonzero(np.abs(c_nodes) > 0)[0]
    reach = float(np.max(np.abs(zs[support]))) + step if support.size else step
    reach = min(math.ceil(reach / step) * step, z_max)
    fine_step = step / refine
    zf = _grid(reach, fine_step)
    cf_nodes, cf_mid = _coefficient_samples(g, zf)
    stride = refine

    out = []
    for y0, v0 in ((1.0, 0.0), (0.0, 1.0)):
        y, v = _solve_from_zero(zs, c_nodes, c_mid, y0, v0)
        yf, vf = _solve_from_zero(zf, cf_nodes, cf_mid, y0, v0)
        i_lo = int(round((-reach - zs[0]) / step))
        coarse = y[i_lo : i_lo + len(zf[::stride])]
        scale = max(1.0, float(np.max(np.abs(y))))
        err = float(np.max(np.abs(coarse - yf[::stride])))
        err_v = float(np.max(np.abs(v[i_lo : i_lo + len(zf[::stride])] - vf[::stride])))
        if not np.all(np.isfinite(y)) or max(err, err_v) > tol * scale:
            raise IntegratorFailure(f"RK4 disagrees with the refined run by {max(err, err_v):.3e}")
        out.append(SampledFunction(-z_max, z_max, y, v))
    return out[0], out[1]


def rescale_for_cone(f1: SampledFunction, f2: SampledFunction,
                     radius2: float = 0.25, slope2: float = 0.5) -> tuple[SampledFunction, SampledFunction, float]:
    """Uniformly shrink the direction curve so the strip fits inside the quasi-cone.

    Returns scaled copies and the factor ``s = min(1, ...)`` ensuring
    ``f1(2)^2 + f2(2)^2 <= radius2`` and that the asymptotic slopes satisfy
    ``f1'^2 + f2'^2 <= slope2`` (checked at ``z = +-2`` and at the grid ends).
    """
    zs = [-2.0, 2.0]
    r2 = max(float(f1(z) ** 2 + f2(z) ** 2) for z in zs)
    ends = [0, -1]
    s2 = max(float(f1.derivative[i] ** 2 + f2.derivative[i] ** 2) for i in ends)
    s = 1.0
    if r2 > radius2:
        s = min(s, math.sqrt(radius2 / r2))
    if s2 > slope2:
        s = min(s, math.sqrt(slope2 / s2))
    return f1.scaled(s), f2.scaled(s), s


def _source_quadrature(h: float, s_nodes: np.ndarray, s_mid: np.ndarray):
    """RK4 for ``u'' = s(z)`` with zero data at the first node, vectorized.

    ``s_nodes`` has shape (n, ...) and ``s_mid`` shape (n-1, ...).
    Returns ``(u, u')`` at the nodes.
    """
    inc_v = h / 6.0 * (s_nodes[:-1] + 4.0 * s_mid + s_nodes[1:])
    v = np.concatenate([np.zeros_like(s_nodes[:1]), np.cumsum(inc_v, axis=0)])
    inc_u = h * v[:-1] + h * h / 6.0 * (s_nodes[:-1] + 2.0 * s_mid)
    u = np.concatenate([np.zeros_like(s_nodes[:1]), np.cumsum(inc_u, axis=0)])
    return u, v


def bump_basis(j: int):
    """Basis function ``cos(j pi 2z) exp(-1/(1-(2z)^2))`` and its derivative."""

    def value(z):
        z = np.asarray(z, float)
        return np.cos(2.0 * j * math.pi * z) * bump(2.0 * z)

    def slope(z):
        z = np.asarray(z, float)
        return (-2.0 * j * math.pi * np.sin(2.0 * j * math.pi * z) * bump(2.0 * z)
                + 2.0 * np.cos(2.0 * j * math.pi * z) * bump_slope(2.0 * z))

    return value, slope


@dataclass
class RhoConstruction:
    """Diagnostics of the perturbation construction."""

    rho: SampledFunction
    coefficients: np.ndarray
    obstruction: np.ndarray
    singular_values: np.ndarray
    kernel_dim: int
    residual: float
    scale: float


def _hermite_mid(f: SampledFunction) -> np.ndarray:
    return f.midpoints()


def construct_rho(g: SampledFunction, f1: SampledFunction, f2: SampledFunction, m: int = 8,
                  indices=None, selection: str = "displacement") -> RhoConstruction:
    """Build an even perturbation with vanishing linear obstructions.

    For each basis function the equations ``u'' = beta_j f_i`` are integrated
    from ``z = -1`` with zero data; the slopes and intercepts of the
    solutions beyond ``z = 1/2`` form a 4 x m obstruction matrix whose kernel
    is computed by SVD.  Within the kernel, ``selection='displacement'``
    picks the vector maximizing the displacement of the midpoint curve
    across the segments relative to ``|rho / g|`` (a generalized eigenvalue
    problem); ``selection='first'`` takes the first right-singular kernel
    vector.
    """
    if m < 6:
        raise PreconditionError("basis size must be at least 6")
    if indices is None:
        indices = list(range(m))
    if len(indices) != m:
        raise PreconditionError("need exactly m basis indices")
    zs = g.grid
    h = g.step
    i_start = g.index_of(-1.0)
    i_half = g.index_of(0.5)
    z = zs[i_start:]
    zm = 0.5 * (z[1:] + z[:-1])
    f_nodes = np.stack([f1.values[i_start:], f2.values[i_start:]], axis=1)
    f_mid = np.stack([_hermite_mid(f1)[i_start:], _hermite_mid(f2)[i_start:]], axis=1)
    basis = [bump_basis(j) for j in indices]
    b_nodes = np.stack([b[0](z) for b in basis], axis=1)
    b_mid = np.stack([b[0](zm) for b in basis], axis=1)
    # sources s[z, i, j] = beta_j(z) f_i(z)
    u, v = _source_quadrature(h, f_nodes[:, :, None] * b_nodes[:, None, :], f_mid[:, :, None] * b_mid[:, None, :])
    k = i_half - i_start
    zh = zs[i_half]
    slope = v[k]
    intercept = u[k] - zh * v[k]
    obstruction = np.stack([slope[0], intercept[0], slope[1], intercept[1]])
    _, sv, vt = np.linalg.svd(obstruction)
    rank = int(np.sum(sv > 1e-8 * sv[0]))
    null = vt[rank:].T
    if null.shape[1] == 0:
        raise NoKernelVector("obstruction matrix has full rank; increase m")

    gz = g.values[i_start:]
    inside = (np.abs(z) < 0.5) & (gz > 1e-12)
    if selection == "first":
        c = null[:, 0]
    elif selection == "displacement":
        fx, fy = f_nodes[inside, 0], f_nodes[inside, 1]
        norm = np.hypot(fx, fy)
        ub = u[inside]  # (n, 2, m)
        perp = (fx[:, None] * ub[:, 1, :] - fy[:, None] * ub[:, 0, :]) / norm[:, None]
        p = perp @ null
        r = (b_nodes[inside] / gz[inside, None]) @ null
        w, vecs = sla.eigh(p.T @ p, r.T @ r)
        c = null @ vecs[:, -1]
    else:
        raise ValueError(f"unknown selection {selection!r}")
    c = c / np.linalg.norm(c)
    residual = float(np.linalg.norm(obstruction @ c) / sv[0])
    if residual > 1e-8:
        raise NoKernelVector(f"kernel residual {residual:.2e} too large; increase m")

    def rho_raw(zz):
        return sum(ci * b[0](zz) for ci, b in zip(c, basis))

    ratio = np.abs(rho_raw(zs[(np.abs(zs) < 0.5) & (g.values > 1e-12)])
                   / g.values[(np.abs(zs) < 0.5) & (g.values > 1e-12)])
    scale = 0.5 / float(np.max(ratio))
    if rho_raw(np.array([0.0]))[0] < 0:
        scale = -scale
    coef = scale * c

    def rho_value(zz):
        return sum(ci * b[0](zz) for ci, b in zip(coef, basis))

    def rho_slope(zz):
        return sum(ci * b[1](zz) for ci, b in zip(coef, basis))

    rho = SampledFunction(g.z_min, g.z_max, rho_value(zs), rho_slope(zs), (rho_value, rho_slope))
    return RhoConstruction(rho, coef, obstruction, sv, null.shape[1], residual, abs(scale))


def build_rho(g: SampledFunction, f1: SampledFunction, f2: SampledFunction, m: int = 8) -> SampledFunction:
    """Even C-infinity perturbation supported in ``|z| <= 1/2`` with ``max|rho/g| = 1/2``."""
    return construct_rho(g, f1, f2, m).rho


def solve_u(rho: SampledFunction, f1: SampledFunction, f2: SampledFunction,
            tol: float = TOL_ODE, refine: int = 10) -> tuple[SampledFunction, SampledFunction]:
    """Solve ``u_i'' = rho f_i`` with zero data at the left end of the grid.

    A run on a ``refine`` times finer grid (with Hermite-interpolated ``f``)
    serves as the error oracle over the support of ``rho``.
    """
    zs = rho.grid
    h = rho.step
    r_nodes, r_mid = rho.values, rho.midpoints()
    out = []
    for f in (f1, f2):
        if f.n_points != rho.n_points or f.z_min != rho.z_min:
            raise PreconditionError("rho and f must share a grid")
        u, v = _source_quadrature(h, r_nodes * f.values, r_mid * f.midpoints())
        out.append((u, v))
    # oracle over the support of rho
    nz = np.nonzero(np.abs(r_nodes) > 0)[0]
    if nz.size:
        lo = zs[max(nz[0] - 1, 0)]
        hi = zs[min(nz[-1] + 1, len(zs) - 1)]
        fine = np.linspace(lo, hi, int(round((hi - lo) / h)) * refine + 1)
        fm = 0.5 * (fine[1:] + fine[:-1])
        i0 = int(round((lo - zs[0]) / h))
        rf, rfm = rho(fine), rho(fm)
        for (u, v), f in zip(out, (f1, f2)):
            uf, vf = _source_quadrature(fine[1] - fine[0], rf * f(fine), rfm * f(fm))
            uf = uf + u[i0] + (fine - lo) * v[i0]
            vf = vf + v[i0]
            idx = np.arange(0, len(fine), refine)
            scale = max(1e-300, float(np.max(np.abs(u))), float(np.max(np.abs(v))))
            err = max(float(np.max(np.abs(uf[idx] - u[i0 : i0 + idx.size]))),
                      float(np.max(np.abs(vf[idx] - v[i0 : i0 + idx.size]))))
            if err > tol * scale:
                raise IntegratorFailure(f"u integration disagrees with the refined run by {err:.3e}")
    return tuple(SampledFunction(rho.z_min, rho.z_max, u, v) for u, v in out)


# ---------------------------------------------------------------- strip model


@dataclass(frozen=True, eq=False)
class StripModel:
    """Direction curve ``f``, midpoint curve ``u`` and the functions defining them."""

    g: SampledFunction
    rho: SampledFunction
    f1: SampledFunction
    f2: SampledFunction
    u1: SampledFunction
    u2: SampledFunction
    scale: float = 1.0

    @property
    def z_max(self) -> float:
        return self.f1.z_max

    def to_json(self) -> str:
        return json.dumps({
            "scale": self.scale,
            **{k: getattr(self, k).to_dict() for k in ("g", "rho", "f1", "f2", "u1", "u2")},
        })

    @classmethod
    def from_json(cls, text: str) -> "StripModel":
        d = json.loads(text)
        parts = {k: SampledFunction.from_dict(d[k]) for k in ("g", "rho", "f1", "f2", "u1", "u2")}
        return cls(scale=float(d.get("scale", 1.0)), **parts)


def build_strip(g: Optional[SampledFunction] = None, m: int = 8, rho_scale: float = 1.0,
                rescale: bool = True, tol: float = TOL_ODE) -> tuple[StripModel, Optional[RhoConstruction]]:
    """Run the full strip construction; ``rho_scale = 0`` gives the unperturbed strip."""
    if g is None:
        g = default_g()
    f1, f2 = solve_even_odd(g, tol=tol)
    s = 1.0
    if rescale:
        f1, f2, s = rescale_for_cone(f1, f2)
    info = None
    if np.any(g.values != 0) and rho_scale != 0:
        info = construct_rho(g, f1, f2, m)
        rho = info.rho.scaled(rho_scale)
    else:
        rho = zero_function(g.z_max, g.step)
    u1, u2 = solve_u(rho, f1, f2, tol=tol)
    return StripModel(g, rho, f1, f2, u1, u2, s), info


def degenerate_strip(z_max: float = 4.0, step: float = ODE_STEP) -> StripModel:
    """Strip with ``f = (1, z)`` and ``u = 0``: a piece of a hyperbolic paraboloid."""
    zero = zero_function(z_max, step)
    one = from_callables(lambda z: np.ones_like(np.asarray(z, float)),
                         lambda z: np.zeros_like(np.asarray(z, float)), z_max, step)
    ident = from_callables(lambda z: np.asarray(z, float), lambda z: np.ones_like(np.asarray(z, float)),
                           z_max, step)
    return StripModel(zero, zero, one, ident, zero, zero, 1.0)


def strip_support(strip: StripModel, z, theta):
    """Support value ``psi + |phi|`` of the segment section at height ``z``."""
    z = np.asarray(z, float)
    c, s = np.cos(theta), np.sin(theta)
    psi = strip.u1(z) * c + strip.u2(z) * s
    phi = strip.f1(z) * c + strip.f2(z) * s
    return psi + np.abs(phi)


# ---------------------------------------------------------------- certificates


def _second_difference(a: np.ndarray, h: float) -> np.ndarray:
    return (a[2:] - 2.0 * a[1:-1] + a[:-2]) / (h * h)


def _second_difference4(a: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central second difference on nodes ``2..n-3``."""
    return (-a[4:] + 16.0 * a[3:-1] - 30.0 * a[2:-2] + 16.0 * a[1:-3] - a[:-4]) / (12.0 * h * h)


def strip_cc_certificate(strip: StripModel, n_theta: int = 256, z_stride: int = 1,
                         tol_cc: float = TOL_CC) -> Certificate:
    """One-sided convexity of ``psi +- phi`` and the dominance ``|rho| <= g``."""
    if n_theta < 8:
        raise PreconditionError("n_theta must be at least 8")
    th = theta_grid(n_theta)
    c, s = np.cos(th), np.sin(th)
    f1, f2 = strip.f1.values[::z_stride], strip.f2.values[::z_stride]
    u1, u2 = strip.u1.values[::z_stride], strip.u2.values[::z_stride]
    h = strip.f1.step * z_stride
    phi = np.outer(f1, c) + np.outer(f2, s)
    psi = np.outer(u1, c) + np.outer(u2, s)
    sgn = np.sign(phi[1:-1])
    plus = _second_difference(phi + psi, h) * sgn
    minus = _second_difference(phi - psi, h) * sgn
    # skip cells adjacent to a sign change of phi
    change = (np.sign(phi[2:]) != np.sign(phi[1:-1])) | (np.sign(phi[:-2]) != np.sign(phi[1:-1])) | (sgn == 0)
    scale = np.maximum(1.0, np.abs(psi[1:-1]) + np.abs(phi[1:-1]))
    worst = np.minimum(plus, minus)
    slack = np.where(change, np.inf, worst + tol_cc * scale)
    i, j = np.unravel_index(int(np.argmin(slack)), slack.shape)
    dominance = float(np.max(np.abs(strip.rho.values) - strip.g.values))
    ok = bool(slack[i, j] >= 0) and dominance <= 0
    margin = float(np.min(np.where(change, np.inf, worst)))
    zs = strip.f1.grid[::z_stride][1:-1]
    return Certificate(
        name="strip_cc",
        passed=ok,
        margin=margin,
        witness={"z": float(zs[i]), "theta": float(th[j]), "slack": float(slack[i, j])},
        details={"dominance_excess": dominance, "skipped_cells": int(np.sum(change)), "tol_cc": tol_cc},
    )


def quotient_slope(strip: StripModel, z_range=(-2.0, 2.0), tol: float = 1e-12) -> SampledFunction:
    """``k = f2 / f1`` and ``k' = W / f1^2`` on a sub-range of the grid."""
    zs = strip.f1.grid
    sel = (zs >= z_range[0] - 1e-12) & (zs <= z_range[1] + 1e-12)
    f1, f2 = strip.f1.values[sel], strip.f2.values[sel]
    d1, d2 = strip.f1.derivative[sel], strip.f2.derivative[sel]
    if np.min(np.abs(f1)) < tol:
        raise DivisionNearZero("f1 vanishes on the requested range")
    k = f2 / f1
    w = f1 * d2 - d1 * f2
    return SampledFunction(float(zs[sel][0]), float(zs[sel][-1]), k, w / f1**2)


def nonconstancy_certificate(strip: StripModel, z_range=(-2.0, 2.0), min_spread: float = 1e-3) -> Certificate:
    """Pass iff ``k'`` is non-constant: the unperturbed strip then holds a single line."""
    q = quotient_slope(strip, z_range)
    spread = float(np.max(q.derivative) - np.min(q.derivative))
    return Certificate("quotient_slope_nonconstant", spread > min_spread, spread - min_spread, None,
                       {"min": float(np.min(q.derivative)), "max": float(np.max(q.derivative))})


def nonproportionality_residual(rho: SampledFunction, g: SampledFunction) -> float:
    """``min_c |rho - c g| / |rho|`` in the discrete L2 norm."""
    r, gv = rho.values, g.values
    nr = float(np.linalg.norm(r))
    if nr == 0:
        return 0.0
    c = float(r @ gv / (gv @ gv)) if np.any(gv) else 0.0
    return float(np.linalg.norm(r - c * gv)) / nr


def wronskian(f1: SampledFunction, f2: SampledFunction) -> np.ndarray:
    return f1.values * f2.derivative - f1.derivative * f2.values


def strip_model_checks(strip: StripModel, tol_ode: float = TOL_ODE, tol_support: float = TOL_SUPPORT) -> list[Certificate]:
    """Invariants of an assembled strip model."""
    h = strip.f1.step
    zs = strip.f1.grid
    g, rho = strip.g.values, strip.rho.values
    out = []
    res = 0.0
    for f in (strip.f1, strip.f2):
        r = np.abs(_second_difference4(f.values, h) - g[2:-2] * f.values[2:-2])
        res = max(res, float(np.max(r)) / max(1.0, float(np.max(np.abs(f.values)))))
    out.append(Certificate("ode_residual_f", res <= tol_ode, tol_ode - res, None, {"residual": res}))
    res_u = 0.0
    for u, f in ((strip.u1, strip.f1), (strip.u2, strip.f2)):
        r = np.abs(_second_difference4(u.values, h) - rho[2:-2] * f.values[2:-2])
        res_u = max(res_u, float(np.max(r)) / max(1.0, float(np.max(np.abs(rho * f.values)))))
    out.append(Certificate("ode_residual_u", res_u <= tol_ode, tol_ode - res_u, None, {"residual": res_u}))
    asym = max(float(np.max(np.abs(strip.f1.values - strip.f1.values[::-1]))),
               float(np.max(np.abs(strip.f2.values + strip.f2.values[::-1]))),
               float(np.max(np.abs(strip.u1.values - strip.u1.values[::-1]))),
               float(np.max(np.abs(strip.u2.values + strip.u2.values[::-1]))))
    out.append(Certificate("parity", asym <= 1e-9, 1e-9 - asym, None, {"asymmetry": asym}))
    outside = np.abs(zs) >= 0.5
    tail = max(float(np.max(np.abs(a[outside]))) for a in
               (strip.u1.values, strip.u2.values, strip.u1.derivative, strip.u2.derivative))
    out.append(Certificate("u_support", tail <= tol_support, tol_support - tail, None, {"tail": tail}))
    dom = float(np.max(np.abs(rho) - g))
    out.append(Certificate("dominance", dom <= 0, -dom, None, {"max_excess": dom}))
    w = wronskian(strip.f1, strip.f2)
    drift = float(np.max(np.abs(w - w[len(w) // 2])) / abs(w[len(w) // 2]))
    out.append(Certificate("wronskian", drift <= 1e-8, 1e-8 - drift, None, {"drift": drift, "value": float(w[len(w) // 2])}))
    return out


# ---------------------------------------------------------------- support fields


class StripSections:
    """Exact segment sections of a strip on the rows of a field grid."""

    kind = "strip"

    def __init__(self, z: np.ndarray, f1, f2, u1, u2, source: Optional[StripModel] = None):
        self.z = z
        self.source = source
        self.f = np.stack([f1, f2], axis=1)
        self.u = np.stack([u1, u2], axis=1)

    def support(self, rows, theta):
        c, s = np.cos(theta), np.sin(theta)
        return (self.u[rows, 0] * c + self.u[rows, 1] * s
                + np.abs(self.f[rows, 0] * c + self.f[rows, 1] * s))

    def boundary_point(self, rows, theta):
        c, s = np.cos(theta), np.sin(theta)
        sg = np.sign(self.f[rows, 0] * c + self.f[rows, 1] * s)
        return np.stack([self.u[rows, 0] + sg * self.f[rows, 0], self.u[rows, 1] + sg * self.f[rows, 1]], axis=-1)

    def radius(self):
        return np.linalg.norm(self.u, axis=1) + np.linalg.norm(self.f, axis=1)

    def lipschitz_theta(self):
        """Per-row bound on ``|dF/dtheta|``."""
        return self.radius()


def strip_field(strip: StripModel, z_max: float = 12.0, z_step: float = 1.0 / 256.0, n_theta: int = 256,
                provenance: str = "strip") -> SupportField:
    """Sample the strip's support function on a field grid."""
    zs = z_grid(z_max, z_step)
    if zs[0] < strip.f1.z_min - 1e-12 or zs[-1] > strip.f1.z_max + 1e-12:
        raise OutOfRange("strip grid does not cover the field grid")
    idx = np.rint((zs - strip.f1.z_min) / strip.f1.step).astype(int)
    if np.allclose(strip.f1.z_min + idx * strip.f1.step, zs, atol=1e-12, rtol=0):
        arrays = [fn.values[idx] for fn in (strip.f1, strip.f2, strip.u1, strip.u2)]
    else:
        arrays = [fn(zs) for fn in (strip.f1, strip.f2, strip.u1, strip.u2)]
    model = StripSections(zs, *arrays, source=strip)
    th = theta_grid(n_theta)
    rows = np.arange(zs.size)[:, None]
    values = model.support(rows, th[None, :])
    return SupportField(zs, th, values, provenance, model)
