"""Line-freeness of convex-concave bodies through the minimax line distance.

A non-horizontal line is ``l(z) = (a + b z, c + d z, z)``.  Its minimax
distance to a body is ``max over z in a window of dist(l(z), section(z))``.
Since each section is convex, the distance is convex in ``(a, b, c, d)`` and
so is the maximum over ``z``; a positive global minimum means no line lies
in the body over the window.

Sections of the strip, of the glued body and of bodies smoothed by a kernel
narrower than the grid all have support functions of the form
``max(U.e + |F.e| + r1, r2)``.  For those the largest gap
``max_theta (<p, e(theta)> - h(theta))`` is the maximum of a minimum of three
sinusoids and is computed exactly from its finitely many candidate angles.
Other fields fall back to a grid maximum over the sampled directions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.stats import qmc

from .certificate import Certificate
from .errors import OutOfRange, PreconditionError
from .supportgeo import SupportField

Z_WINDOW = (-10.0, 10.0)
N_STARTS = 32
POLISH_STEP = 1e-6
INF = np.inf


@dataclass(frozen=True)
class Line3:
    """Line ``z -> (a + b z, c + d z, z)``."""

    a: float
    b: float
    c: float
    d: float

    def point(self, z):
        z = np.asarray(z, float)
        return np.stack([self.a + self.b * z, self.c + self.d * z], axis=-1)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d])

    @classmethod
    def from_array(cls, x) -> "Line3":
        return cls(*(float(v) for v in x))

    def mirrored(self) -> "Line3":
        """Image under ``(x, y, z) -> (x, -y, -z)``."""
        return Line3(self.a, -self.b, -self.c, self.d)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


# ---------------------------------------------------------------- section families


@njit(cache=True, inline="always")
def _min3(ex, ey, ax, ay, ac, bx, by, bc, cx, cy, ccc):
    v = ax * ex + ay * ey - ac
    t = bx * ex + by * ey - bc
    if t < v:
        v = t
    t = cx * ex + cy * ey - ccc
    if t < v:
        v = t
    return v


@njit(cache=True, inline="always")
def _pair(best, kx, ky, kc, jx, jy, jc, ax, ay, ac, bx, by, bc, cx, cy, ccc):
    wx = kx - jx
    wy = ky - jy
    w = math.hypot(wx, wy)
    c = kc - jc
    if w > 0.0 and abs(c) <= w:
        ux, uy = wx / w, wy / w
        co = c / w
        si = math.sqrt(max(0.0, 1.0 - co * co))
        v = _min3(co * ux - si * uy, co * uy + si * ux, ax, ay, ac, bx, by, bc, cx, cy, ccc)
        if v > best:
            best = v
        v = _min3(co * ux + si * uy, co * uy - si * ux, ax, ay, ac, bx, by, bc, cx, cy, ccc)
        if v > best:
            best = v
    return best


@njit(cache=True)
def _gap(px, py, u1, u2, f1, f2, r1, r2):
    """``max_theta min_k (v_k . e - c_k)`` over the active terms.

    Terms with an infinite offset are inactive; an inactive term is
    represented by a duplicate of an active one so that the minimum is
    unchanged.
    """
    cap = r1 > -INF
    disc = r2 > -INF
    if not cap and not disc:
        return -INF
    if cap:
        ax, ay, ac = px - u1 - f1, py - u2 - f2, r1
        bx, by, bc = px - u1 + f1, py - u2 + f2, r1
        if disc:
            cx, cy, ccc = px, py, r2
        else:
            cx, cy, ccc = ax, ay, ac
    else:
        ax, ay, ac = px, py, r2
        bx, by, bc = ax, ay, ac
        cx, cy, ccc = ax, ay, ac
    best = -INF
    for vx, vy in ((ax, ay), (bx, by), (cx, cy)):
        n = math.hypot(vx, vy)
        if n > 0.0:
            v = _min3(vx / n, vy / n, ax, ay, ac, bx, by, bc, cx, cy, ccc)
            if v > best:
                best = v
    best = _pair(best, ax, ay, ac, bx, by, bc, ax, ay, ac, bx, by, bc, cx, cy, ccc)
    if disc and cap:
        best = _pair(best, ax, ay, ac, cx, cy, ccc, ax, ay, ac, bx, by, bc, cx, cy, ccc)
        best = _pair(best, bx, by, bc, cx, cy, ccc, ax, ay, ac, bx, by, bc, cx, cy, ccc)
    if best == -INF:
        best = _min3(1.0, 0.0, ax, ay, ac, bx, by, bc, cx, cy, ccc)
    return best


@njit(cache=True)
def _row_distances(params, zs, a, b, c, d, out):
    for i in range(zs.size):
        z = zs[i]
        g = _gap(a + b * z, c + d * z, params[i, 0], params[i, 1], params[i, 2], params[i, 3],
                 params[i, 4], params[i, 5])
        out[i] = g if g > 0.0 else 0.0


@njit(cache=True)
def _max_row_distance(params, zs, a, b, c, d):
    best = 0.0
    arg = 0
    for i in range(zs.size):
        z = zs[i]
        g = _gap(a + b * z, c + d * z, params[i, 0], params[i, 1], params[i, 2], params[i, 3],
                 params[i, 4], params[i, 5])
        if g > best:
            best = g
            arg = i
    return best, arg


@njit(cache=True)
def _grid_max_distance(values, cs, sn, zs, a, b, c, d):
    best = 0.0
    arg = 0
    for i in range(zs.size):
        px = a + b * zs[i]
        py = c + d * zs[i]
        for j in range(cs.size):
            g = px * cs[j] + py * sn[j] - values[i, j]
            if g > best:
                best = g
                arg = i
    return best, arg


@dataclass
class SectionFamily:
    """Row parameters ``(U1, U2, F1, F2, r1, r2)`` and their continuous dependence on ``z``."""

    z: np.ndarray
    params: np.ndarray
    at: Callable[[float], np.ndarray]


def _strip_at(strip):
    def at(z):
        return np.array([float(strip.u1(z)), float(strip.u2(z)), float(strip.f1(z)), float(strip.f2(z)), 0.0, -INF])
    return at


def _interp_at(z, params):
    def at(t):
        i = int(np.clip(np.searchsorted(z, t) - 1, 0, z.size - 2))
        lam = (t - z[i]) / (z[i + 1] - z[i])
        out = (1.0 - lam) * params[i] + lam * params[i + 1]
        out[np.isinf(params[i]) | np.isinf(params[i + 1])] = -INF
        return out
    return at


def section_family(field: SupportField) -> Optional[SectionFamily]:
    """Closed-form section parameters of a field's model, or None if unavailable."""
    return _family(field.model, field.z)


def _family(model, z) -> Optional[SectionFamily]:
    kind = getattr(model, "kind", None)
    if kind == "strip":
        p = np.column_stack([model.u, model.f, np.zeros(z.size), np.full(z.size, -INF)])
        src = getattr(model, "source", None)
        return SectionFamily(z, p, _strip_at(src) if src is not None else _interp_at(z, p))
    if kind == "disc":
        p = np.column_stack([model.c, np.zeros((z.size, 2)), model.r, np.full(z.size, -INF)])
        return SectionFamily(z, p, _interp_at(z, p))
    if kind == "cone":
        p = np.column_stack([np.zeros((z.size, 4)), np.full(z.size, -INF), np.where(np.isnan(model.r), -INF, model.r)])

        def at_cone(t):
            return np.array([0.0, 0.0, 0.0, 0.0, -INF, abs(t) - 1.0 if abs(t) >= 1.0 else -INF])
        return SectionFamily(z, p, at_cone)
    if kind == "glued":
        inner = _family(model.inner, z)
        if inner is None or np.any(np.isfinite(inner.params[:, 5])):
            return None
        p = inner.params.copy()
        p[:, 5] = model.r

        def at_glued(t):
            q = inner.at(t)
            q[5] = abs(t) - 1.0 if abs(t) >= 1.0 else -INF
            return q
        return SectionFamily(z, p, at_glued)
    if kind == "smoothed":
        if len(model.t_taps) != 1 or len(model.psi_taps) != 1 or model.t_taps[0][0] != 0 or model.psi_taps[0][0] != 0:
            return None
        base = _family(model.base, z)
        if base is None:
            return None
        w = model.w
        floor = w * model.floor_radius

        def transform(q, fl):
            out = q.copy()
            out[:4] *= 1.0 - w
            out[4] = (1.0 - w) * q[4] + fl if q[4] > -INF else -INF
            out[5] = (1.0 - w) * q[5] + fl if q[5] > -INF else -INF
            return out

        p = np.array([transform(base.params[i], floor[i]) for i in range(z.size)])

        def at_smoothed(t):
            i = int(np.clip(np.searchsorted(z, t) - 1, 0, z.size - 2))
            lam = (t - z[i]) / (z[i + 1] - z[i])
            return transform(base.at(t), (1.0 - lam) * floor[i] + lam * floor[i + 1])
        return SectionFamily(z, p, at_smoothed)
    return None


# ---------------------------------------------------------------- maxdist


def _golden_max(fun, lo, hi, iters=50):
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


class MaxDist:
    """Minimax line distance to a field over a ``z`` window, with cached row data."""

    def __init__(self, field: SupportField, z_window=Z_WINDOW):
        rows = field.rows_in(z_window)
        if rows.size == 0:
            raise OutOfRange("empty window")
        self.field = field
        self.window = (float(z_window[0]), float(z_window[1]))
        self.rows = rows
        self.z = np.ascontiguousarray(field.z[rows])
        fam = section_family(field)
        self.family = fam
        if fam is not None:
            self.params = np.ascontiguousarray(fam.params[rows])
            self.method = "exact_sections"
        else:
            self.values = np.ascontiguousarray(field.values[rows])
            self.cos = np.cos(field.theta)
            self.sin = np.sin(field.theta)
            self.method = "grid"
        self.evaluations = 0

    def on_rows(self, x) -> tuple[float, int]:
        """Maximum over grid rows and its row index."""
        self.evaluations += 1
        a, b, c, d = (float(v) for v in x)
        if self.family is not None:
            return _max_row_distance(self.params, self.z, a, b, c, d)
        return _grid_max_distance(self.values, self.cos, self.sin, self.z, a, b, c, d)

    def row_profile(self, x) -> np.ndarray:
        a, b, c, d = (float(v) for v in x)
        out = np.empty(self.z.size)
        if self.family is not None:
            _row_distances(self.params, self.z, a, b, c, d, out)
        else:
            g = (a + b * self.z)[:, None] * self.cos + (c + d * self.z)[:, None] * self.sin - self.values
            out = np.maximum(0.0, g.max(axis=1))
        return out

    def at_height(self, x, z: float) -> float:
        """Distance at an arbitrary height inside the window (exact families only)."""
        p = self.family.at(z)
        a, b, c, d = x
        return max(0.0, _gap(a + b * z, c + d * z, *p))

    def __call__(self, x, refine: bool = True, n_peaks: int = 3) -> tuple[float, float]:
        """Refined value and the height attaining it.

        The grid maximum is refined by golden-section search in ``z`` on the
        two cells around each of the ``n_peaks`` largest local row maxima.
        """
        prof = self.row_profile(x)
        self.evaluations += 1
        i = int(np.argmax(prof))
        best, zbest = float(prof[i]), float(self.z[i])
        if not refine or self.family is None or self.z.size < 3:
            return best, zbest
        inner = (prof[1:-1] >= prof[:-2]) & (prof[1:-1] >= prof[2:])
        peaks = np.nonzero(inner)[0] + 1
        peaks = set(peaks[np.argsort(prof[peaks])[::-1][:n_peaks]].tolist()) | {i}
        for k in peaks:
            lo = self.z[max(k - 1, 0)]
            hi = self.z[min(k + 1, self.z.size - 1)]
            zz, val = _golden_max(lambda t: self.at_height(x, t), lo, hi)
            if val > best:
                best, zbest = val, zz
        return best, zbest


def maxdist(line: Line3, field: SupportField, z_window=Z_WINDOW, refine: bool = True) -> float:
    """``max over z in the window of dist(line(z), section(z))``."""
    lo, hi = z_window
    if lo < field.z[0] - 1e-12 or hi > field.z[-1] + 1e-12:
        raise OutOfRange("window exceeds the field grid")
    return MaxDist(field, z_window)(line.as_array(), refine=refine)[0]


# ---------------------------------------------------------------- search


@dataclass
class LineSearchReport:
    """Result of the multistart minimization of the minimax distance."""

    best_line: Line3
    margin: float
    evaluations: int
    restarts: int
    witness_z: float
    seed: int = 0
    method: str = "exact_sections"
    box: dict = field(default_factory=dict)
    start_values: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "best_line": self.best_line.to_dict(), "margin": self.margin, "evaluations": self.evaluations,
            "restarts": self.restarts, "witness_z": self.witness_z, "seed": self.seed, "method": self.method,
            "box": self.box,
        }


def search_box(field: SupportField, z_window=Z_WINDOW) -> np.ndarray:
    """Half-widths of the box ``|a|, |c| <= 2 R`` and ``|b|, |d| <= 2 R`` with ``R`` the largest section radius."""
    rows = field.rows_in(z_window)
    if field.model is not None and hasattr(field.model, "radius"):
        r = float(np.max(field.model.radius()[rows]))
    else:
        r = float(np.max(np.abs(field.values[rows])))
    r = max(r, 1e-12)
    return np.array([2.0 * r, 2.0 * r, 2.0 * r, 2.0 * r])


def is_mirror_symmetric(field: SupportField, tol: float = 1e-10) -> bool:
    """Whether ``F(z, theta) = F(-z, -theta)`` on the grid."""
    if not np.allclose(field.z, -field.z[::-1], atol=1e-12, rtol=0):
        return False
    n = field.n_theta
    neg = (-np.arange(n)) % n
    return bool(np.max(np.abs(field.values - field.values[::-1][:, neg])) <= tol * max(1.0, np.max(np.abs(field.values))))


def _polish(fun, x, step=POLISH_STEP, max_rounds=200):
    """Coordinate descent with step doubling and halving down to ``step``."""
    x = np.array(x, float)
    fx = fun(x)
    h = 1e-3
    rounds = 0
    while h >= step and rounds < max_rounds:
        improved = False
        for k in range(x.size):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[k] += sgn * h
                fy = fun(y)
                if fy < fx:
                    x, fx, improved = y, fy, True
                    break
        rounds += 1
        if not improved:
            h /= 2.0
    return x, fx


def line_search(field: SupportField, z_window=Z_WINDOW, budget: int = N_STARTS, seed: int = 0,
                exploit_symmetry: Optional[bool] = None, max_fev: int = 3000) -> LineSearchReport:
    """Multistart Nelder-Mead on ``(a, b, c, d)`` followed by coordinate polish.

    Starts are scrambled Sobol points in the search box (with ``c >= 0`` when
    the field is mirror symmetric).  Each start is deterministic given the
    seed.  The reported margin is the refined minimax distance of the best
    line.
    """
    if budget < 1:
        raise PreconditionError("budget must be at least 1")
    md = MaxDist(field, z_window)
    half = search_box(field, z_window)
    sym = is_mirror_symmetric(field) if exploit_symmetry is None else exploit_symmetry
    lo, hi = -half.copy(), half.copy()
    if sym:
        lo[2] = 0.0
    sob = qmc.Sobol(4, scramble=True, seed=seed)
    starts = qmc.scale(sob.random(max(budget, 1)), lo, hi)[:budget]
    # the axis line is a natural candidate for bodies around the z-axis
    starts[0] = np.zeros(4)

    def fun(x):
        if np.any(np.abs(x) > half * 1.5):
            return 1e30
        return md.on_rows(x)[0]

    results = []
    for x0 in starts:
        simplex = np.vstack([x0, x0 + np.diag(0.05 * half)])
        res = minimize(fun, x0, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-13, "maxfev": max_fev})
        results.append((float(res.fun), res.x))
    results.sort(key=lambda r: r[0])
    best_x = None
    best_val = math.inf
    for val, x in results[: min(4, len(results))]:
        xp, fp = _polish(fun, x)
        res = minimize(fun, xp, method="Nelder-Mead",
                       options={"initial_simplex": np.vstack([xp, xp + np.diag(np.full(4, 1e-4))]),
                                "xatol": 1e-12, "fatol": 1e-14, "maxfev": max_fev})
        xp, fp = _polish(fun, res.x) if res.fun < fp else (xp, fp)
        if fp < best_val:
            best_val, best_x = fp, xp
    margin, zw = md(best_x)
    return LineSearchReport(
        best_line=Line3.from_array(best_x), margin=float(margin), evaluations=md.evaluations, restarts=budget,
        witness_z=float(zw), seed=seed, method=md.method,
        box={"half_widths": half.tolist(), "mirror_symmetric": sym},
        start_values=[r[0] for r in results],
    )


def linefree_certificate(field: SupportField, required_margin: float, z_window=Z_WINDOW, budget: int = N_STARTS,
                         seed: int = 0, report: Optional[LineSearchReport] = None) -> Certificate:
    """Passes iff the searched margin is at least ``required_margin``.

    The margin is the largest sup-norm perturbation of the support field
    that keeps every line out of the body over the window.
    """
    rep = report if report is not None else line_search(field, z_window, budget, seed)
    ok = rep.margin >= required_margin and rep.margin > 0
    return Certificate(
        name="linefree",
        passed=bool(ok),
        margin=rep.margin - required_margin,
        witness={"line": rep.best_line.to_dict(), "z": rep.witness_z},
        details={**rep.to_dict(), "required_margin": required_margin, "delta_budget": rep.margin,
                 "kind": "empirical: multistart search, not exhaustive"},
    )


# ---------------------------------------------------------------- oracle


def cell_radius(h) -> float:
    """Largest displacement of the line's point over ``|z| <= 10`` within a cell of half-widths ``h``."""
    ha, hb, hc, hd = h
    zmax = 10.0
    return math.hypot(ha + zmax * hb, hc + zmax * hd)


@dataclass
class OracleResult:
    lattice_min: float
    lattice_line: Line3
    refined_margin: float
    refined_line: Line3
    leaves: int
    nodes: int
    spacing: float
    cell_diameter: float

    def to_dict(self) -> dict:
        return {
            "lattice_min": self.lattice_min, "lattice_line": self.lattice_line.to_dict(),
            "refined_margin": self.refined_margin, "refined_line": self.refined_line.to_dict(),
            "leaves": self.leaves, "nodes": self.nodes, "spacing": self.spacing, "cell_diameter": self.cell_diameter,
        }


def grid_scan_oracle(field: SupportField, z_window=Z_WINDOW, spacing: float = 0.01, box=None,
                     symmetric: Optional[bool] = None, max_nodes: int = 2_000_000) -> OracleResult:
    """Minimum of the minimax distance over a lattice of spacing ``spacing``, by branch and bound.

    The lattice covers the search box.  A box of lattice points is split
    until it is a single point unless ``f(center) - r`` already exceeds the
    incumbent, where ``r`` bounds how far any line in the box moves over the
    window; the minimax distance is 1-Lipschitz in that displacement, so
    pruned boxes cannot contain a better lattice point.  The lattice
    minimum is then refined by local search.
    """
    if abs(z_window[0]) > 10 + 1e-12 or abs(z_window[1]) > 10 + 1e-12:
        raise PreconditionError("oracle cell bound assumes |z| <= 10")
    md = MaxDist(field, z_window)
    half = search_box(field, z_window) if box is None else np.asarray(box, float)
    sym = is_mirror_symmetric(field) if symmetric is None else symmetric
    n = np.floor(half / spacing).astype(int)
    lo_idx = -n.copy()
    if sym:
        lo_idx[2] = 0
    hi_idx = n.copy()

    def f(idx):
        return md.on_rows(np.asarray(idx, float) * spacing)[0]

    best_idx = np.zeros(4, int)
    best = f(best_idx)
    stack = [(lo_idx, hi_idx)]
    nodes = leaves = 0
    while stack:
        lo, hi = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise PreconditionError("oracle node budget exhausted")
        if np.all(lo == hi):
            leaves += 1
            v = f(lo)
            if v < best:
                best, best_idx = v, lo.copy()
            continue
        center = (lo + hi) // 2
        r = cell_radius(((hi - lo + 1) // 2) * spacing)  # covers every lattice point of the box
        v = f(center)
        if v < best:
            best, best_idx = v, center.copy()
        if v - r >= best:
            continue
        k = int(np.argmax((hi - lo) * np.array([1.0, 10.0, 1.0, 10.0])))
        mid = (lo[k] + hi[k]) // 2
        left_hi = hi.copy()
        left_hi[k] = mid
        right_lo = lo.copy()
        right_lo[k] = mid + 1
        stack.extend([(lo, left_hi), (right_lo, hi)])
    x0 = best_idx * spacing
    xr, fr = _polish(lambda x: md.on_rows(x)[0], x0)
    res = minimize(lambda x: md.on_rows(x)[0], xr, method="Nelder-Mead",
                   options={"initial_simplex": np.vstack([xr, xr + np.diag(np.full(4, spacing / 4))]),
                            "xatol": 1e-12, "fatol": 1e-14, "maxfev": 4000})
    if res.fun < fr:
        xr, fr = _polish(lambda x: md.on_rows(x)[0], res.x)
    refined, _ = md(xr)
    return OracleResult(
        lattice_min=float(best), lattice_line=Line3.from_array(x0), refined_margin=float(refined),
        refined_line=Line3.from_array(xr), leaves=leaves, nodes=nodes, spacing=spacing,
        cell_diameter=2.0 * cell_radius(np.full(4, spacing / 2.0)),
    )


# ---------------------------------------------------------------- properties


def coercivity_check(field: SupportField, n_directions: int = 100, seed: int = 0, z_window=Z_WINDOW) -> Certificate:
    """The minimax distance increases along rays leaving the search box."""
    md = MaxDist(field, z_window)
    half = search_box(field, z_window)
    rng = np.random.default_rng(seed)
    worst = math.inf
    inner = md.on_rows(np.zeros(4))[0]
    bad = None
    for _ in range(n_directions):
        v = rng.standard_normal(4)
        v /= np.max(np.abs(v) / half)  # on the box boundary
        vals = [md.on_rows(s * v)[0] for s in (1.0, 1.5, 2.0, 4.0)]
        steps = np.diff(vals)
        gap = min(float(np.min(steps)), vals[0] - inner)
        if gap < worst:
            worst, bad = gap, v.tolist()
    return Certificate("coercivity", worst > 0, worst, {"direction": bad} if worst <= 0 else None,
                       {"n_directions": n_directions, "interior_value": inner})


def symmetry_defect(field: SupportField, lines, z_window=Z_WINDOW) -> float:
    """``max |maxdist(l) - maxdist(mirror(l))|`` over lines."""
    md = MaxDist(field, z_window)
    return max(abs(md.on_rows(l.as_array())[0] - md.on_rows(l.mirrored().as_array())[0]) for l in lines)
