"""Gluing a strip to the quasi-cone and smoothing by Minkowski convolution.

The quasi-cone has circular sections of radius ``|z| - 1`` for ``|z| >= 1``.
Gluing takes the convex hull section by section, i.e. the pointwise maximum
of support functions.  Smoothing averages the glued support function over
translations in ``z`` and rotations about the ``z``-axis with a positive
kernel ``K(t, psi)``, which keeps sections convex, keeps the dependence on
``z`` convex and reproduces functions affine in ``z``.

The kernel is a mixture of two separable parts:

* a sharp part ``exp(p (cos psi - 1 - t^2) / eps)`` whose power ``p`` is
  raised until the continuous mass within ``|t|, |psi| <= eps`` is at least
  ``1 - eps``;
* a floor part of weight ``w = floor_fraction * eps``, Gaussian in ``t`` and
  uniform in ``psi``.  It keeps the kernel strictly positive on its whole
  window and turns every section into a Minkowski sum with a disc of
  positive radius, so section curvature is bounded below.

When the sharp part is narrower than the grid, its effect on the grid is
the identity and its continuous effect is bounded through Lipschitz
constants of the input (see :func:`sharp_smoothing_bound`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special
from scipy.signal import fftconvolve

from .certificate import Certificate, bundle
from .errors import CCBodyError, GlueConvexityFailure, InsufficientMargin, InvalidSupport, PreconditionError
from .gaussmap import ScalarFieldOracle, angle_between, gauss_map, second_fundamental_signature
from .quadforms import Signature, householder_complement
from .supportgeo import (
    SupportField,
    curvature_positivity_certificate,
    field_sup_distance,
    reconstruct_section,
    z_convexity_certificate,
)

TAIL = 1e-14
T_CAP = 2.0
REACH_THRESHOLD = 1e-6


# ---------------------------------------------------------------- gluing


class ConeSections:
    """Discs of radius ``|z| - 1`` centered on the axis (rows with ``|z| < 1`` undefined)."""

    kind = "cone"

    def __init__(self, z):
        self.z = np.asarray(z, float)
        self.r = np.where(np.abs(self.z) >= 1.0, np.abs(self.z) - 1.0, np.nan)

    def support(self, rows, theta):
        return self.r[rows] + 0.0 * np.asarray(theta, float)

    def boundary_point(self, rows, theta):
        r = self.r[rows]
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def radius(self):
        return np.nan_to_num(self.r, nan=0.0)

    def lipschitz_theta(self):
        return np.zeros_like(self.r)


def quasicone_field(z, theta) -> SupportField:
    """Support function ``|z| - 1`` of the quasi-cone, NaN where ``|z| < 1``."""
    z = np.asarray(z, float)
    theta = np.asarray(theta, float)
    model = ConeSections(z)
    values = np.repeat(model.r[:, None], theta.size, axis=1)
    return SupportField(z, theta, values, "cone", model)


class GluedSections:
    """Convex hull of a section model and the quasi-cone disc at each height."""

    kind = "glued"

    def __init__(self, inner, z):
        self.inner = inner
        z = np.asarray(z, float)
        self.r = np.where(np.abs(z) >= 1.0, np.abs(z) - 1.0, -np.inf)
        inner_radius = inner.radius()
        # rows whose hull is the centered disc
        self.disc_rows = self.r >= inner_radius

    def support(self, rows, theta):
        return np.maximum(self.inner.support(rows, theta), self.r[rows])

    def boundary_point(self, rows, theta):
        s = self.inner.support(rows, theta)
        r = self.r[rows]
        pin = self.inner.boundary_point(rows, theta)
        rr = np.where(np.isfinite(r), r, 0.0)
        pc = np.stack([rr * np.cos(theta), rr * np.sin(theta)], axis=-1)
        return np.where((r >= s)[..., None], pc, pin)

    def radius(self):
        return np.maximum(self.inner.radius(), np.where(np.isfinite(self.r), self.r, 0.0))

    def lipschitz_theta(self):
        return np.where(self.disc_rows, 0.0, self.radius())


def glue(strip_field: SupportField, cone_field: SupportField, check: bool = True) -> SupportField:
    """``F_E = max(F_S, F_K')`` where the cone is defined and ``F_S`` elsewhere."""
    if not strip_field.same_grid(cone_field):
        raise PreconditionError("strip and cone fields must share a grid")
    cone = cone_field.values
    values = np.where(np.isfinite(cone), np.maximum(strip_field.values, np.nan_to_num(cone, nan=-np.inf)),
                      strip_field.values)
    model = GluedSections(strip_field.model, strip_field.z) if strip_field.model is not None else None
    out = SupportField(strip_field.z, strip_field.theta, values, "glued", model)
    if check:
        cert = z_convexity_certificate(out)
        if not cert.passed:
            raise GlueConvexityFailure(f"glued field is not convex in z: {cert.witness}")
    return out


# ---------------------------------------------------------------- kernel


def _psi_mass_fraction(eps_s: float, radius: float) -> float:
    """Fraction of ``exp((cos psi - 1)/eps_s)`` on the circle lying in ``|psi| <= radius``."""
    total = 2.0 * math.pi * special.i0e(1.0 / eps_s)
    if radius >= math.pi:
        return 1.0
    outside, _ = integrate.quad(lambda p: math.exp((math.cos(p) - 1.0) / eps_s), radius, math.pi, limit=200)
    return max(0.0, 1.0 - 2.0 * outside / total)


@dataclass
class SmoothingKernel:
    """Discretized mixture kernel on ``[-T, T] x circle``.

    Attributes
    ----------
    epsilon : float
        Nominal width parameter.
    power : float
        Sharpening power of the sharp part.
    sharp_epsilon : float
        ``epsilon / power``.
    floor_weight : float
        Mass of the floor part.
    broad_epsilon : float
        Width parameter of the floor part in ``t``.
    half_window : float
        ``T``: support half-width in ``t``.
    z_step, n_theta : grid of the discretization.
    t_weights_sharp, psi_weights_sharp, t_weights_floor : ndarray
        Normalized discrete weights (each sums to 1).
    log_constant : float
        Logarithm of ``C`` in ``C exp(p (cos psi - t^2) / eps)`` normalizing
        the continuous sharp part to unit mass.
    concentration : float
        Continuous mass in ``|t|, |psi| <= epsilon``.
    """

    epsilon: float
    power: float
    sharp_epsilon: float
    floor_weight: float
    broad_epsilon: float
    half_window: float
    z_step: float
    n_theta: int
    t_weights_sharp: np.ndarray = field(repr=False)
    psi_weights_sharp: np.ndarray = field(repr=False)
    t_weights_floor: np.ndarray = field(repr=False)
    log_constant: float = 0.0
    concentration: float = 0.0

    @property
    def offsets(self) -> np.ndarray:
        k = (self.t_weights_sharp.size - 1) // 2
        return np.arange(-k, k + 1) * self.z_step

    @property
    def psi(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def cell(self) -> float:
        return self.z_step * 2.0 * math.pi / self.n_theta

    def values(self) -> np.ndarray:
        """Kernel density on the stored ``(t, psi)`` grid; ``psi`` index ``l`` means offset ``2 pi l / n``."""
        w = self.floor_weight
        dens = (1.0 - w) * np.outer(self.t_weights_sharp, self.psi_weights_sharp)
        dens += w * np.outer(self.t_weights_floor, np.full(self.n_theta, 1.0 / self.n_theta))
        return dens / self.cell

    def discrete_mass(self) -> float:
        return float(np.sum(self.values()) * self.cell)

    def discrete_concentration(self) -> float:
        v = self.values() * self.cell
        t = self.offsets
        psi = np.angle(np.exp(1j * self.psi))
        sel_t = np.abs(t) <= self.epsilon + 1e-15
        sel_p = np.abs(psi) <= self.epsilon + 1e-15
        return float(np.sum(v[np.ix_(sel_t, sel_p)]))

    def sharp_moments(self) -> dict:
        """First absolute moments of the sharp part, continuous and discrete."""
        e = self.sharp_epsilon
        t_cont = math.sqrt(e / math.pi)
        if e < 1e-4:
            psi_cont = math.sqrt(2.0 * e / math.pi)
        else:
            num, _ = integrate.quad(lambda p: p * math.exp((math.cos(p) - 1.0) / e), 0.0, math.pi, limit=200)
            psi_cont = 2.0 * num / (2.0 * math.pi * special.i0e(1.0 / e))
        psi = np.abs(np.angle(np.exp(1j * self.psi)))
        return {
            "t_continuous": t_cont,
            "psi_continuous": psi_cont,
            "t_discrete": float(np.sum(np.abs(self.offsets) * self.t_weights_sharp)),
            "psi_discrete": float(np.sum(psi * self.psi_weights_sharp)),
        }

    def resolved(self) -> bool:
        """True when the sharp part spreads over more than one grid cell."""
        return bool(self.t_weights_sharp.max() < 1.0 - 1e-12 or self.psi_weights_sharp.max() < 1.0 - 1e-12)


def _concentration(eps: float, eps_s: float, w: float, eps_b: float) -> float:
    m_t = special.erf(eps / math.sqrt(eps_s))
    m_p = _psi_mass_fraction(eps_s, eps)
    m_b = special.erf(eps / math.sqrt(eps_b)) * min(1.0, eps / math.pi)
    return (1.0 - w) * m_t * m_p + w * m_b


def make_kernel(epsilon: float, z_step: float = 1.0 / 256.0, n_theta: int = 256,
                floor_fraction: float = 0.25, tail: float = TAIL, max_doublings: int = 80) -> SmoothingKernel:
    """Build the smoothing kernel for width parameter ``epsilon``.

    The sharp part starts at power 1 and the power doubles until the
    continuous concentration reaches ``1 - epsilon``.  The support
    half-width is ``T = min(2, max over parts of sqrt(eps_part ln(1/tail)))``.
    """
    if not 0 < epsilon <= 1:
        raise PreconditionError("epsilon must lie in (0, 1]")
    if not 0 <= floor_fraction < 1:
        raise PreconditionError("floor_fraction must lie in [0, 1)")
    w = floor_fraction * epsilon
    log_tail = math.log(1.0 / tail)
    eps_b = T_CAP**2 / log_tail
    power = 1.0
    for _ in range(max_doublings):
        conc = _concentration(epsilon, epsilon / power, w, eps_b)
        if conc >= 1.0 - epsilon:
            break
        power *= 2.0
    else:
        raise PreconditionError("could not reach the required concentration")
    eps_s = epsilon / power
    t_sharp = min(T_CAP, math.sqrt(eps_s * log_tail))
    t_half = T_CAP if w > 0 else t_sharp
    k = int(math.floor(t_half / z_step + 1e-9))
    t = np.arange(-k, k + 1) * z_step
    a = np.exp(-(t**2) / eps_s)
    a[np.abs(t) > t_sharp + 1e-12] = 0.0
    a = 0.5 * (a + a[::-1])
    a /= a.sum()
    psi = 2.0 * math.pi * np.arange(n_theta) / n_theta
    b = np.exp((np.cos(psi) - 1.0) / eps_s)
    b /= b.sum()
    c = np.exp(-(t**2) / eps_b) if w > 0 else np.zeros_like(t)
    if w > 0:
        c = 0.5 * (c + c[::-1])
        c /= c.sum()
    # log C with C exp(p(cos psi - t^2)/eps) of unit continuous mass
    log_c = -(1.0 / eps_s) - 0.5 * math.log(math.pi * eps_s) - math.log(2.0 * math.pi * special.i0e(1.0 / eps_s))
    return SmoothingKernel(
        epsilon=epsilon, power=power, sharp_epsilon=eps_s, floor_weight=w, broad_epsilon=eps_b,
        half_window=float(k * z_step), z_step=z_step, n_theta=n_theta,
        t_weights_sharp=a, psi_weights_sharp=b, t_weights_floor=c,
        log_constant=log_c, concentration=_concentration(epsilon, eps_s, w, eps_b),
    )


def kernel_certificate(kernel: SmoothingKernel) -> Certificate:
    """Mass, evenness, positivity and concentration of the discretized kernel."""
    v = kernel.values()
    mass = kernel.discrete_mass()
    even = float(np.max(np.abs(v - v[::-1])))
    positive = bool(np.all(v > 0)) if kernel.floor_weight > 0 else bool(np.all(v >= 0))
    conc = kernel.concentration
    ok = abs(mass - 1.0) <= 1e-10 and even == 0.0 and positive and conc >= 1.0 - kernel.epsilon
    return Certificate(
        name="kernel",
        passed=ok,
        margin=conc - (1.0 - kernel.epsilon),
        details={
            "mass": mass, "evenness_defect": even, "strictly_positive": positive,
            "concentration": conc, "discrete_concentration": kernel.discrete_concentration(),
            "power": kernel.power, "sharp_epsilon": kernel.sharp_epsilon,
            "floor_weight": kernel.floor_weight, "half_window": kernel.half_window,
            "sharp_resolved_on_grid": kernel.resolved(),
        },
    )


# ---------------------------------------------------------------- smoothing


def _taps(weights: np.ndarray, centered: bool, rel: float = 1e-17):
    """Nonzero taps ``(offset index, weight)`` above ``rel * max``."""
    idx = np.nonzero(weights > rel * weights.max())[0]
    if centered:
        k = (weights.size - 1) // 2
        return [(int(i - k), float(weights[i])) for i in idx]
    n = weights.size
    return [(int(i if i <= n // 2 else i - n), float(weights[i])) for i in idx]


class SmoothedSections:
    """Exact sections of the discretized convolution of a section model."""

    kind = "smoothed"

    def __init__(self, base, kernel: SmoothingKernel, floor_radius: np.ndarray, n_rows: int):
        self.base = base
        self.w = kernel.floor_weight
        self.t_taps = _taps(kernel.t_weights_sharp, True)
        self.psi_taps = _taps(kernel.psi_weights_sharp, False)
        self.dpsi = 2.0 * math.pi / kernel.n_theta
        self.floor_radius = floor_radius
        self.n_rows = n_rows

    def _base_support(self, rows, theta):
        rows = np.asarray(rows)
        lo, hi = 0, self.n_rows - 1
        inside = (rows >= lo) & (rows <= hi)
        if np.all(inside):
            return self.base.support(rows, theta)
        r = np.clip(rows, lo, hi)
        nb = np.where(rows < lo, lo + 1, hi - 1)
        h0 = self.base.support(r, theta)
        h1 = self.base.support(nb, theta)
        return h0 + (h0 - h1) * np.abs(rows - r)

    def _tap_arrays(self):
        k = np.array([t[0] for t in self.t_taps])
        a = np.array([t[1] for t in self.t_taps])
        l = np.array([t[0] for t in self.psi_taps])
        b = np.array([t[1] for t in self.psi_taps])
        return k, l * self.dpsi, (1.0 - self.w) * np.outer(a, b)

    def support(self, rows, theta):
        rows = np.asarray(rows)
        theta = np.asarray(theta, float)
        k, ang, wts = self._tap_arrays()
        r = rows[..., None, None] - k[:, None]
        t = theta[..., None, None] - ang[None, :]
        base = self._base_support(r, t)
        return np.sum(base * wts, axis=(-2, -1)) + self.w * self.floor_radius[rows] + 0.0 * theta

    def boundary_point(self, rows, theta):
        rows = np.asarray(rows)
        theta = np.asarray(theta, float)
        k, ang, wts = self._tap_arrays()
        r = np.clip(rows[..., None, None] - k[:, None], 0, self.n_rows - 1)
        p = self.base.boundary_point(r, theta[..., None, None] - ang[None, :])
        ca, sa = np.cos(ang), np.sin(ang)
        x = np.sum(wts * (ca * p[..., 0] - sa * p[..., 1]), axis=(-2, -1))
        y = np.sum(wts * (sa * p[..., 0] + ca * p[..., 1]), axis=(-2, -1))
        rf = self.w * self.floor_radius[rows]
        return np.stack([x + rf * np.cos(theta), y + rf * np.sin(theta)], axis=-1)

    def radius(self):
        base = self.base.radius()
        widest = np.zeros_like(base)
        for k, _ in self.t_taps:
            widest = np.maximum(widest, np.roll(base, k))
        return (1.0 - self.w) * widest + self.w * self.floor_radius

    def lipschitz_theta(self):
        base = self.base.lipschitz_theta()
        widest = np.zeros_like(base)
        for k, _ in self.t_taps:
            widest = np.maximum(widest, np.roll(base, k))
        return (1.0 - self.w) * widest


def _extend_linear(values: np.ndarray, k: int) -> np.ndarray:
    """Pad ``k`` rows at both ends by linear extrapolation in ``z``."""
    if k == 0:
        return values
    j = np.arange(1, k + 1).reshape((-1,) + (1,) * (values.ndim - 1))
    lo = values[0] - j[::-1] * (values[1] - values[0])
    hi = values[-1] + j * (values[-1] - values[-2])
    return np.concatenate([lo, values, hi], axis=0)


def _convolve_z(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    k = (weights.size - 1) // 2
    if k == 0 or np.count_nonzero(weights) == 1 and weights[k] == 1.0:
        return values.copy()
    ext = _extend_linear(values, k)
    if values.ndim == 1:
        return fftconvolve(ext, weights, mode="valid")
    return fftconvolve(ext, weights[:, None], mode="valid", axes=0)


def _convolve_theta(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    if weights[0] == 1.0:
        return values.copy()
    return np.fft.irfft(np.fft.rfft(values, axis=1) * np.fft.rfft(weights)[None, :], n=values.shape[1], axis=1)


def smooth(field: SupportField, kernel: SmoothingKernel, linear_tol: float = 1e-9) -> SupportField:
    """Discrete fiberwise convolution of a support field with the kernel.

    The input is extended beyond its grid by linear extrapolation in ``z``;
    the last three rows at each end must already be affine in ``z``
    (true for the glued field, which is the cone ``|z| - 1`` there).
    """
    if abs(field.z_step - kernel.z_step) > 1e-12 or field.n_theta != kernel.n_theta:
        raise PreconditionError("kernel was discretized on a different grid")
    v = field.values
    if not np.all(np.isfinite(v)):
        raise PreconditionError("field has undefined rows")
    scale = max(1.0, float(np.max(np.abs(v))))
    for end in (v[:3], v[-3:]):
        if float(np.max(np.abs(end[0] - 2.0 * end[1] + end[2]))) > linear_tol * scale:
            raise InsufficientMargin("field is not affine in z at the grid ends; enlarge Z_max")
    w = kernel.floor_weight
    sharp = _convolve_z(_convolve_theta(v, kernel.psi_weights_sharp), kernel.t_weights_sharp)
    floor = np.zeros(v.shape[0])
    if w > 0:
        floor = _convolve_z(v.mean(axis=1), kernel.t_weights_floor)
    out = (1.0 - w) * sharp + w * floor[:, None]
    model = SmoothedSections(field.model, kernel, floor, v.shape[0]) if field.model is not None else None
    return SupportField(field.z, field.theta, out, "smoothed", model)


def lipschitz_constants(field: SupportField, z_window=None) -> tuple[float, float]:
    """Bounds on ``|dF/dz|`` and ``|dF/dtheta|`` over a window.

    The ``z`` bound is the largest grid difference quotient (exact for
    piecewise affine dependence); the ``theta`` bound is the model's
    section-radius bound when available, else the largest angular
    difference quotient.
    """
    rows = np.arange(field.z.size) if z_window is None else field.rows_in(z_window)
    v = field.values[rows]
    lz = float(np.max(np.abs(np.diff(v, axis=0)))) / field.z_step if rows.size > 1 else 0.0
    if field.model is not None and hasattr(field.model, "lipschitz_theta"):
        lt = float(np.max(field.model.lipschitz_theta()[rows]))
    else:
        lt = float(np.max(np.abs(v - np.roll(v, 1, axis=1)))) / field.theta_step
    return lz, lt


def sharp_smoothing_bound(kernel: SmoothingKernel, lip_z: float, lip_theta: float) -> float:
    """Bound on the distance between continuous and discrete sharp smoothing.

    For an input with Lipschitz constants ``lip_z`` and ``lip_theta`` both
    smoothings move values by at most ``lip_z E|t| + lip_theta E|psi|``
    under their respective weights.
    """
    m = kernel.sharp_moments()
    return (1.0 - kernel.floor_weight) * (lip_z * (m["t_continuous"] + m["t_discrete"])
                                          + lip_theta * (m["psi_continuous"] + m["psi_discrete"]))


def certified_closeness(D: SupportField, E: SupportField, kernel: SmoothingKernel, z_window=(-10.0, 10.0)) -> dict:
    """Grid sup distance between smoothed and input fields plus off-grid bounds.

    The certified value bounds ``sup |F_D - F_E|`` over the continuous
    window: the grid value, the sub-grid sharp part, and the variation of
    the floor part between grid nodes.
    """
    grid = field_sup_distance(D, E, z_window)
    T = kernel.half_window
    lo, hi = max(z_window[0] - T, E.z[0]), min(z_window[1] + T, E.z[-1])
    lz, lt = lipschitz_constants(E, (lo, hi))
    sharp = sharp_smoothing_bound(kernel, lz, lt)
    between = kernel.floor_weight * (lz * E.z_step + lt * E.theta_step)
    return {"grid": grid, "sharp_bound": sharp, "between_nodes": between,
            "certified": grid + sharp + between, "lip_z": lz, "lip_theta": lt}


# ---------------------------------------------------------------- certificates


def reachable_mask(E: SupportField, kernel: SmoothingKernel, threshold: float = REACH_THRESHOLD) -> np.ndarray:
    """Cells where the kernel average of the second ``z``-difference of ``F_E`` exceeds ``threshold``.

    Returned for interior rows (shape ``(nz - 2, ntheta)``).
    """
    d2 = (E.values[2:] - 2.0 * E.values[1:-1] + E.values[:-2]) / E.z_step**2
    w = kernel.floor_weight
    sharp = _convolve_z(_convolve_theta(d2, kernel.psi_weights_sharp), kernel.t_weights_sharp)
    avg = (1.0 - w) * sharp
    if w > 0:
        avg = avg + w * _convolve_z(d2.mean(axis=1), kernel.t_weights_floor)[:, None]
    return avg > threshold


def strict_convexity_certificate(D: SupportField, E: SupportField, kernel: SmoothingKernel,
                                 threshold: float = REACH_THRESHOLD) -> Certificate:
    """``D_z^2 F_D > 0`` on every cell where the kernel-averaged ``D_z^2 F_E`` exceeds ``threshold``."""
    reach = reachable_mask(E, kernel, threshold)
    d2 = (D.values[2:] - 2.0 * D.values[1:-1] + D.values[:-2]) / D.z_step**2
    if not np.any(reach):
        return Certificate("strict_z_convexity", False, float("nan"), None, {"reason": "empty reachable set"})
    vals = np.where(reach, d2, np.inf)
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    m = float(vals[i, j])
    zs = D.z[1:-1]
    full = np.all(reach, axis=1)
    window = _central_run(zs, full)
    return Certificate(
        name="strict_z_convexity",
        passed=m > 0,
        margin=m,
        witness={"z": float(zs[i]), "theta": float(D.theta[j])},
        details={"threshold": threshold, "reachable_cells": int(reach.sum()),
                 "reachable_fraction": float(reach.mean()), "full_rows_window": window},
    )


def _central_run(zs: np.ndarray, ok: np.ndarray):
    """Largest interval of consecutive ``ok`` rows containing the grid center, else None."""
    c = int(np.argmin(np.abs(zs)))
    if not ok[c]:
        return None
    lo = c
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    hi = c
    while hi < ok.size - 1 and ok[hi + 1]:
        hi += 1
    return [float(zs[lo]), float(zs[hi])]


def tail_certificate(D: SupportField, kernel: SmoothingKernel, noise: float = 1e-12) -> Certificate:
    """``max_theta |F_D - (|z| - 1)|`` is non-increasing in ``|z|`` on ``[2, 2 + T]`` and at rounding level beyond."""
    T = kernel.half_window
    res = np.max(np.abs(D.values - (np.abs(D.z) - 1.0)[:, None]), axis=1)
    details = {}
    ok = True
    worst = 0.0
    for sgn in (1.0, -1.0):
        sel = sgn * D.z >= 2.0 - 1e-12
        zs = np.abs(D.z[sel])
        r = res[sel]
        order = np.argsort(zs)
        zs, r = zs[order], r[order]
        near = zs <= 2.0 + T + 1e-12
        far = ~near
        floor = noise * np.maximum(1.0, zs)
        inc = np.diff(r[near]) - floor[near][1:]
        rise = float(np.max(inc)) if inc.size else -np.inf
        far_max = float(np.max(r[far] - floor[far])) if np.any(far) else -np.inf
        ok &= rise <= 0 and far_max <= 0
        worst = max(worst, rise, far_max)
        details["positive" if sgn > 0 else "negative"] = {
            "at_2": float(r[0]), "at_2_plus_T": float(r[near][-1]), "max_rise": rise, "beyond_max_excess": far_max}
    details["half_window"] = T
    return Certificate("tail_decay", bool(ok), -worst, None, details)


# ---------------------------------------------------------------- mesh


@dataclass
class Mesh:
    """Parametric boundary mesh: vertex grid over (z, theta) with outward normals."""

    z: np.ndarray
    theta: np.ndarray
    vertices: np.ndarray  # (nz, ntheta, 3)
    normals: np.ndarray  # (nz, ntheta, 3)

    def faces(self) -> np.ndarray:
        nz, nt = self.vertices.shape[:2]
        i, j = np.meshgrid(np.arange(nz - 1), np.arange(nt), indexing="ij")
        a = i * nt + j
        b = (i + 1) * nt + j
        c = (i + 1) * nt + (j + 1) % nt
        d = i * nt + (j + 1) % nt
        return np.stack([a, d, c, b], axis=-1).reshape(-1, 4)

    def write_obj(self, path) -> None:
        v = self.vertices.reshape(-1, 3)
        n = self.normals.reshape(-1, 3)
        f = self.faces() + 1
        with open(path, "w") as fh:
            fh.write("# parametric boundary mesh, rows = z, columns = theta\n")
            np.savetxt(fh, v, fmt="v %.12g %.12g %.12g")
            np.savetxt(fh, n, fmt="vn %.12g %.12g %.12g")
            np.savetxt(fh, np.repeat(f, 2, axis=1), fmt="f %d//%d %d//%d %d//%d %d//%d")


def _z_derivative(values: np.ndarray, h: float) -> np.ndarray:
    return np.gradient(values, h, axis=0)


def _trig_boundary_point(h: np.ndarray, theta) -> np.ndarray:
    """``h u + h' u_perp`` at arbitrary angles from trigonometric interpolation of samples ``h``."""
    n = h.size
    c = np.fft.rfft(h) / n
    k = np.arange(c.size)
    weight = np.where((k == 0) | ((n % 2 == 0) & (k == n // 2)), 1.0, 2.0)
    th = np.asarray(theta, float)[..., None]
    e = np.exp(1j * k * th)
    val = np.real(np.sum(weight * c * e, axis=-1))
    der = np.real(np.sum(weight * c * 1j * k * e * (k != n // 2), axis=-1))
    t = th[..., 0]
    return np.stack([val * np.cos(t) - der * np.sin(t), val * np.sin(t) + der * np.cos(t)], axis=-1)


def boundary_points(field: SupportField, rows, theta) -> np.ndarray:
    """Boundary points ``grad F`` of the sections at given rows and angles."""
    if field.model is not None and hasattr(field.model, "boundary_point"):
        return field.model.boundary_point(rows, theta)
    rows, theta = np.broadcast_arrays(np.asarray(rows), np.asarray(theta, float))
    out = np.empty(rows.shape + (2,))
    for r in np.unique(rows):
        sel = rows == r
        out[sel] = _trig_boundary_point(field.values[r], theta[sel])
    return out


def export_mesh(field: SupportField, z_window=(-3.0, 3.0), z_stride: int = 1, path=None) -> Mesh:
    """Vertex grid ``(grad F(z, theta), z)`` with outward normals ``(u, -F_z)``."""
    if field.provenance not in ("smoothed", "disc", "cone", "combined"):
        raise InvalidSupport("mesh export expects a smooth field")
    rows = field.rows_in(z_window)[::z_stride]
    th = field.theta
    fz = _z_derivative(field.values, field.z_step)[rows]
    if field.model is not None and hasattr(field.model, "boundary_point"):
        xy = field.model.boundary_point(rows[:, None], th[None, :])
    else:
        xy = np.array([reconstruct_section(field.values[r], check=False).points for r in rows])
    verts = np.concatenate([xy, np.broadcast_to(field.z[rows][:, None, None], xy.shape[:2] + (1,))], axis=-1)
    nrm = np.stack([np.broadcast_to(np.cos(th), fz.shape), np.broadcast_to(np.sin(th), fz.shape), -fz], axis=-1)
    nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
    mesh = Mesh(field.z[rows], th, verts, nrm)
    if path is not None:
        mesh.write_obj(path)
    return mesh


def _balanced(a: float, b: float, ratio: float = 2.0) -> bool:
    return min(a, b) > 0 and max(a, b) <= ratio * min(a, b)


def _local_stencil(field: SupportField, row: int, col: int, dtheta: float = None, max_halvings: int = 12):
    """Boundary points on a 3 x 3 parameter stencil around grid vertex ``(row, col)``.

    The angular step shrinks until the two angular chords are balanced.  When
    the rows on one side of the vertex lie across a crease (unbalanced
    chords) the ``z`` stencil becomes one-sided on the resolved side, if
    that side is itself balanced.
    Returns the stencil and the outward normal ``(u, -F_z)`` with the
    matching difference for ``F_z``.
    """
    theta = float(field.theta[col])
    if dtheta is None:
        dtheta = field.theta_step / 4.0
    nz = field.z.size
    col_rows = np.arange(max(row - 2, 0), min(row + 3, nz))
    col_pts = boundary_points(field, col_rows, np.full(col_rows.size, theta))
    pos = {int(r): col_pts[i] for i, r in enumerate(col_rows)}

    def chord(r0, r1):
        return float(np.linalg.norm(pos[r1] - pos[r0])) if r0 in pos and r1 in pos else 0.0

    lo, up = chord(row - 1, row), chord(row, row + 1)
    v = field.values[:, col]
    h = field.z_step
    if _balanced(lo, up):
        rows = np.array([row - 1, row, row + 1])
        fz = (v[row + 1] - v[row - 1]) / (2.0 * h)
    elif up > lo and _balanced(chord(row - 2, row - 1), lo):
        rows = np.array([row - 2, row - 1, row])
        fz = (v[row] - v[row - 1]) / h
    elif lo > up and _balanced(chord(row + 1, row + 2), up):
        rows = np.array([row, row + 1, row + 2])
        fz = (v[row + 1] - v[row]) / h
    else:
        rows = np.array([row - 1, row, row + 1])
        fz = (v[row + 1] - v[row - 1]) / (2.0 * h)
    for _ in range(max_halvings):
        ang = theta + dtheta * np.array([-1.0, 0.0, 1.0])
        pts = boundary_points(field, rows[:, None], ang[None, :])
        mid = pts[list(rows).index(row)]
        if _balanced(np.linalg.norm(mid[1] - mid[0]), np.linalg.norm(mid[2] - mid[1])):
            break
        dtheta /= 2.0
    z = field.z[rows]
    stencil = np.concatenate([pts, np.broadcast_to(z[:, None, None], (3, 3, 1))], axis=-1)
    normal = np.array([math.cos(theta), math.sin(theta), -fz])
    return stencil, normal / np.linalg.norm(normal)


def osculating_quadric(stencil: np.ndarray, normal: np.ndarray):
    """Osculating quadric of a 3 x 3 parameter stencil in affinely normalized coordinates.

    ``stencil[i, j]`` is the surface point at parameter offsets ``(i - 1, j - 1)``.
    Coordinates ``y = A (x - c)`` with ``A = [p_1, p_2, n]^{-1}`` send the
    discrete tangent vectors to unit vectors; second differences projected on
    ``n`` give the second form ``II`` in these coordinates and the oracle is
    ``P(y) = y_3 - (y_1, y_2) II (y_1, y_2)^T / 2`` at the origin.  The
    signature of the second form is invariant under affine maps, and the
    normalization keeps both principal scales comparable on thin caps.

    Returns the oracle and the ambient stencil normal ``p_1 x p_2`` oriented
    like ``normal``.
    """
    c = stencil[1, 1]
    p1 = 0.5 * (stencil[2, 1] - stencil[0, 1])
    p2 = 0.5 * (stencil[1, 2] - stencil[1, 0])
    p11 = stencil[2, 1] - 2.0 * c + stencil[0, 1]
    p22 = stencil[1, 2] - 2.0 * c + stencil[1, 0]
    p12 = 0.25 * (stencil[2, 2] - stencil[2, 0] - stencil[0, 2] + stencil[0, 0])
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    ii = np.array([[p11 @ n, p12 @ n], [p12 @ n, p22 @ n]])
    cross = np.cross(p1, p2)
    norm = np.linalg.norm(cross)
    if norm == 0:
        raise np.linalg.LinAlgError("degenerate stencil")
    cross = cross / norm
    if cross @ n < 0:
        cross = -cross
    h = np.zeros((3, 3))
    h[:2, :2] = -ii

    def value(y):
        y = np.asarray(y, float)
        return float(y[2] + 0.5 * y @ h @ y)

    def gradient(y):
        y = np.asarray(y, float)
        return np.array([0.0, 0.0, 1.0]) + h @ y

    def hessian(y):
        return h

    return ScalarFieldOracle(value, gradient, hessian, 3, "osculating_quadric"), cross


def mesh_hyperbolicity_certificate(field: SupportField, E: SupportField, kernel: SmoothingKernel,
                                   n_samples: int = 500, seed: int = 0, z_window=(-10.0, 10.0),
                                   expected: Signature = Signature(1, 1, 0)) -> Certificate:
    """Second-form signature at random mesh vertices of the kernel-reachable window.

    Each vertex gets the osculating quadric of a small parameter stencil of
    boundary points; its signature comes from
    :func:`second_fundamental_signature`.  The mesh normal ``(u, -F_z)`` is
    compared with the stencil normal.
    """
    reach = reachable_mask(E, kernel)
    rows_all = np.arange(1, field.z.size - 1)
    inwin = (field.z[rows_all] >= z_window[0]) & (field.z[rows_all] <= z_window[1])
    cand = np.argwhere(reach & inwin[:, None])
    rng = np.random.default_rng(seed)
    pick = cand[rng.choice(len(cand), size=min(n_samples, len(cand)), replace=False)]
    bad = []
    max_normal_err = 0.0
    for ii, j in pick:
        row = int(rows_all[ii])
        th = float(field.theta[j])
        try:
            pts, n = _local_stencil(field, row, int(j))
            oracle, ns = osculating_quadric(pts, n)
            sig = second_fundamental_signature(oracle, np.zeros(3))
        except (np.linalg.LinAlgError, CCBodyError) as exc:
            bad.append({"z": float(field.z[row]), "theta": th, "error": str(exc)})
            continue
        max_normal_err = max(max_normal_err, angle_between(ns, n))
        if not sig.matches(expected):
            bad.append({"z": float(field.z[row]), "theta": th, "signature": sig.to_dict()})
    return Certificate(
        name="mesh_hyperbolicity",
        passed=not bad and len(pick) == n_samples,
        margin=float("nan"),
        witness=bad[0] if bad else None,
        details={"n_samples": int(len(pick)), "violations": len(bad), "max_normal_angle": max_normal_err,
                 "candidates": int(len(cand))},
    )


def smoothed_certificates(D: SupportField, E: SupportField, delta: float, kernel: SmoothingKernel,
                          n_mesh_samples: int = 500, seed: int = 0, z_window=(-10.0, 10.0)) -> Certificate:
    """Aggregate certificates of the smoothed body."""
    parts = [curvature_positivity_certificate(D)]
    parts.append(strict_convexity_certificate(D, E, kernel))
    parts.append(z_convexity_certificate(D))
    close = certified_closeness(D, E, kernel, z_window)
    parts.append(Certificate("delta_closeness", close["certified"] <= delta, delta - close["certified"], None, close))
    parts.append(tail_certificate(D, kernel))
    parts.append(mesh_hyperbolicity_certificate(D, E, kernel, n_mesh_samples, seed, z_window))
    return bundle("smoothed", parts)
