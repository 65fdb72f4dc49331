"""Gauss maps, second fundamental forms and sampled surface certificates.

A hypersurface is given implicitly as ``{P = 0}`` by a
:class:`ScalarFieldOracle`.  The normal is ``+grad P / |grad P|`` and the
second form is the tangential restriction of ``Hess P`` divided by
``|grad P|``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .certificate import Certificate
from .errors import PreconditionError, SingularPoint, ZeroPoint
from .quadforms import (
    QuadraticForm,
    Signature,
    dual_form,
    householder_complement,
    signature_of,
    standard_form,
)

TOL_GRAD = 1e-12
TOL_ON_SURFACE = 1e-10
TOL_FOLD = 1e-6
TOL_CONTAINMENT = 1e-10


@dataclass(frozen=True)
class ScalarFieldOracle:
    """Value, gradient and Hessian of a smooth function on R^n."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "field"


def quadric_oracle(q: QuadraticForm, level: float = 0.0) -> ScalarFieldOracle:
    """Oracle for ``x^T A x - level``."""
    a = q.matrix
    return ScalarFieldOracle(
        value=lambda x: float(x @ a @ x) - level,
        gradient=lambda x: 2.0 * (a @ x),
        hessian=lambda x: 2.0 * a,
        dim=q.dim,
        name=f"quadric(level={level})",
    )


def sphere_oracle(dim: int = 3, radius: float = 1.0) -> ScalarFieldOracle:
    return quadric_oracle(QuadraticForm(np.eye(dim)), radius**2)


def plane_oracle(normal) -> ScalarFieldOracle:
    n = np.asarray(normal, float)
    return ScalarFieldOracle(
        value=lambda x: float(n @ x),
        gradient=lambda x: n.copy(),
        hessian=lambda x: np.zeros((n.size, n.size)),
        dim=n.size,
        name="plane",
    )


def torus_oracle(major: float = 2.0, minor: float = 0.5) -> ScalarFieldOracle:
    """Torus of revolution about the z-axis, centered at the origin."""

    def value(x):
        rho = math.hypot(x[0], x[1])
        return (rho - major) ** 2 + x[2] ** 2 - minor**2

    def gradient(x):
        rho = math.hypot(x[0], x[1])
        s = 2.0 * (rho - major) / rho
        return np.array([s * x[0], s * x[1], 2.0 * x[2]])

    def hessian(x):
        rho = math.hypot(x[0], x[1])
        xy = np.array([x[0], x[1]])
        s = 2.0 * (rho - major) / rho
        h = np.zeros((3, 3))
        h[:2, :2] = s * np.eye(2) + 2.0 * major * np.outer(xy, xy) / rho**3
        h[2, 2] = 2.0
        return h

    return ScalarFieldOracle(value, gradient, hessian, 3, "torus")


def gauss_map(oracle: ScalarFieldOracle, point) -> np.ndarray:
    """Unit normal ``grad P / |grad P|``."""
    g = np.asarray(oracle.gradient(np.asarray(point, float)), float)
    norm = np.linalg.norm(g)
    if not norm > TOL_GRAD:
        raise SingularPoint(f"gradient norm {norm:.3e} below {TOL_GRAD}")
    return g / norm


def gauss_quadric_closed_form(k: int, l: int, point) -> np.ndarray:
    """Closed-form Gauss map ``(x_1..x_k, -x_{k+1}..-x_n) / |x|`` of a standard quadric."""
    x = np.asarray(point, float)
    if x.size != k + l:
        raise ValueError("point has wrong dimension")
    norm = np.linalg.norm(x)
    if norm == 0:
        raise ZeroPoint("closed form undefined at the origin")
    y = x.copy()
    y[k:] *= -1.0
    return y / norm


def angle_between(u, v) -> float:
    """Angle between two nonzero vectors, accurate for small angles."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    return 2.0 * math.atan2(np.linalg.norm(u - v), np.linalg.norm(u + v))


def second_fundamental_form(oracle: ScalarFieldOracle, point) -> np.ndarray:
    """Matrix of the second form in a Householder basis of the tangent space."""
    x = np.asarray(point, float)
    g = np.asarray(oracle.gradient(x), float)
    norm = np.linalg.norm(g)
    if not norm > TOL_GRAD:
        raise SingularPoint(f"gradient norm {norm:.3e} below {TOL_GRAD}")
    t = householder_complement(g)
    return t.T @ np.asarray(oracle.hessian(x), float) @ t / norm


def second_fundamental_signature(oracle: ScalarFieldOracle, point) -> Signature:
    """Signature of the second fundamental form at a surface point."""
    return signature_of(QuadraticForm(second_fundamental_form(oracle, point)))


# ---------------------------------------------------------------- sampling


@dataclass
class SurfaceSampleSet:
    """Points on a hypersurface with normals and second-form signatures."""

    points: np.ndarray
    normals: np.ndarray
    signatures: np.ndarray  # (N, 3) int: plus, minus, zero
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    def signature(self, i: int) -> Signature:
        return Signature(*map(int, self.signatures[i]))

    def to_csv(self, path) -> None:
        n = self.points.shape[1]
        header = [f"x{i}" for i in range(n)] + [f"n{i}" for i in range(n)]
        header += ["sig_plus", "sig_minus", "sig_zero"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for p, nv, s in zip(self.points, self.normals, self.signatures):
                w.writerow([repr(float(v)) for v in p] + [repr(float(v)) for v in nv] + [int(v) for v in s])

    @classmethod
    def from_csv(cls, path) -> "SurfaceSampleSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        n = sum(1 for h in header if h.startswith("x"))
        data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), 2 * n + 3)
        return cls(data[:, :n], data[:, n : 2 * n], data[:, 2 * n :].astype(int), {"source": str(path)})


def project_to_surface(oracle: ScalarFieldOracle, x0, tol: float = TOL_ON_SURFACE, max_iter: int = 60):
    """Newton projection along the gradient onto ``{P = 0}``; returns None on failure."""
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        p = oracle.value(x)
        if abs(p) <= tol:
            return x
        g = oracle.gradient(x)
        gg = float(g @ g)
        if not gg > TOL_GRAD**2:
            return None
        x = x - p * g / gg
        if not np.all(np.isfinite(x)):
            return None
    return x if abs(oracle.value(x)) <= tol else None


def sample_surface(
    oracle: ScalarFieldOracle,
    region,
    n_samples: int,
    seed: int = 0,
    max_tries: int = 50,
) -> SurfaceSampleSet:
    """Project scrambled Sobol points of a box onto the surface.

    Parameters
    ----------
    region : array_like, shape (n, 2)
        Lower and upper bounds of the ambient sampling box.  Projected points
        leaving the box are discarded.
    """
    box = np.asarray(region, float)
    sampler = qmc.Sobol(d=oracle.dim, scramble=True, seed=seed)
    pts: list[np.ndarray] = []
    for _ in range(max_tries):
        raw = qmc.scale(sampler.random(1 << max(6, (2 * n_samples - 1).bit_length())), box[:, 0], box[:, 1])
        for x0 in raw:
            x = project_to_surface(oracle, x0)
            if x is None or np.any(x < box[:, 0]) or np.any(x > box[:, 1]):
                continue
            pts.append(x)
            if len(pts) == n_samples:
                break
        if len(pts) == n_samples:
            break
    if len(pts) < n_samples:
        raise PreconditionError(f"only {len(pts)} of {n_samples} samples landed on the surface")
    points = np.array(pts)
    normals = np.array([gauss_map(oracle, p) for p in points])
    sigs = np.array([second_fundamental_signature(oracle, p).as_tuple() for p in points])
    meta = {"count": n_samples, "seed": seed, "region": box.tolist(), "oracle": oracle.name}
    return SurfaceSampleSet(points, normals, sigs, meta)


def hyperbolicity_certificate(
    oracle: ScalarFieldOracle,
    region,
    n_samples: int,
    expected: Signature,
    seed: int = 0,
    unordered: bool = True,
) -> Certificate:
    """Check the second-form signature at sampled surface points."""
    if n_samples < 1:
        raise PreconditionError("n_samples must be positive")
    samples = sample_surface(oracle, region, n_samples, seed)
    return signature_certificate(samples, expected, unordered, name="hyperbolicity")


def signature_certificate(samples: SurfaceSampleSet, expected: Signature, unordered: bool = True,
                          name: str = "hyperbolicity") -> Certificate:
    """Pass iff every sample carries the expected signature."""
    bad = [i for i in range(len(samples)) if not samples.signature(i).matches(expected, unordered)]
    witness = None
    if bad:
        i = bad[0]
        witness = {"point": samples.points[i], "signature": samples.signature(i).to_dict()}
    return Certificate(
        name=name,
        passed=not bad,
        margin=float("nan"),
        witness=witness,
        details={"n_samples": len(samples), "violations": len(bad), "expected": expected.to_dict()},
    )


# ---------------------------------------------------------------- Rolle field


@dataclass(frozen=True)
class RolleField:
    """``f(x) = sqrt(a^2 + eps) - b`` with ``a = |x[:k]|`` and ``b = |x[k:]|``."""

    k: int
    l: int
    epsilon: float

    def split(self, x):
        x = np.asarray(x, float)
        return float(np.linalg.norm(x[: self.k])), float(np.linalg.norm(x[self.k :]))

    def value(self, x) -> float:
        a, b = self.split(x)
        return math.sqrt(a * a + self.epsilon) - b

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        a, b = self.split(x)
        if b == 0:
            raise SingularPoint("f is not differentiable where b = 0")
        g = np.empty_like(x)
        g[: self.k] = x[: self.k] / math.sqrt(a * a + self.epsilon)
        g[self.k :] = -x[self.k :] / b
        return g

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        a, b = self.split(x)
        n = self.k + self.l
        h = np.zeros((n, n))
        xa, xb = x[: self.k], x[self.k :]
        r = math.sqrt(a * a + self.epsilon)
        h[: self.k, : self.k] = np.eye(self.k) / r - np.outer(xa, xa) / r**3
        h[self.k :, self.k :] = -(np.eye(self.l) / b - np.outer(xb, xb) / b**3)
        return h

    def oracle(self) -> ScalarFieldOracle:
        return ScalarFieldOracle(self.value, self.gradient, self.hessian, self.k + self.l, "rolle")


def rolle_value(field: RolleField, point) -> float:
    return field.value(point)


def rolle_gradient_identity_check(field: RolleField, point) -> Certificate:
    """Verify that ``df`` is parallel to ``dQ`` at the rescaled point on ``{Q = -eps}``."""
    x = np.asarray(point, float)
    a, b = field.split(x)
    t = field.value(x)
    if not b > 1e-12 or not t < 0:
        raise PreconditionError("requires b > 0 and f(point) < 0")
    lam = (b + t) / b
    y = x.copy()
    y[field.k :] *= lam
    q = standard_form(field.k, field.l)
    dq = 2.0 * (q.matrix @ y)
    angle = angle_between(field.gradient(x), dq)
    residual = abs(q(y) + field.epsilon)
    ok = angle < 1e-8 and residual < 1e-10
    return Certificate(
        name="rolle_gradient_identity",
        passed=ok,
        margin=min(1e-8 - angle, 1e-10 - residual),
        witness=None if ok else {"point": x},
        details={"angle": angle, "level_residual": residual, "lambda": lam, "t": t},
    )


def rolle_identity_certificate(k: int, l: int, epsilon: float, n_points: int = 1000, seed: int = 0,
                               scale: float = 2.0) -> Certificate:
    """Gradient identity at random points with ``f < 0`` (normal samples of width ``scale``)."""
    fld = RolleField(k, l, epsilon)
    rng = np.random.default_rng(seed)
    worst_angle = worst_res = 0.0
    done = 0
    bad = None
    while done < n_points:
        x = scale * rng.standard_normal(k + l)
        if fld.split(x)[1] <= 1e-12 or fld.value(x) >= 0:
            continue
        c = rolle_gradient_identity_check(fld, x)
        worst_angle = max(worst_angle, c.details["angle"])
        worst_res = max(worst_res, c.details["level_residual"])
        if not c.passed and bad is None:
            bad = c.witness
        done += 1
    return Certificate(
        name="rolle_identity",
        passed=bad is None,
        margin=min(1e-8 - worst_angle, 1e-10 - worst_res),
        witness=bad,
        details={"k": k, "l": l, "epsilon": epsilon, "n_points": n_points, "max_angle": worst_angle,
                 "max_level_residual": worst_res, "seed": seed},
    )


def containment_certificate(samples: SurfaceSampleSet, k: int, l: int, epsilon: float,
                            tol: float = TOL_CONTAINMENT) -> Certificate:
    """Pass iff the Rolle function is nonnegative on every sample."""
    if len(samples) == 0:
        raise PreconditionError("empty sample set")
    fld = RolleField(k, l, epsilon)
    vals = np.array([fld.value(p) for p in samples.points])
    i = int(np.argmin(vals))
    return Certificate(
        name="containment",
        passed=bool(vals[i] >= -tol),
        margin=float(vals[i]),
        witness={"point": samples.points[i], "value": float(vals[i])},
        details={"n_samples": len(samples)},
    )


# ---------------------------------------------------------------- radial projection


def _cell_index(directions: np.ndarray, cell_deg: float) -> np.ndarray:
    """Spherical (latitude, longitude) cell indices of unit vectors."""
    step = math.radians(cell_deg)
    lat = np.arcsin(np.clip(directions[:, 2], -1, 1))
    lon = np.arctan2(directions[:, 1], directions[:, 0])
    return np.stack([np.floor((lat + math.pi / 2) / step), np.floor((lon + math.pi) / step)], axis=1).astype(int)


def radial_projection_injectivity(
    samples: SurfaceSampleSet,
    cell_deg: float = 1.0,
    tol_fold: float = TOL_FOLD,
    slack: float = 2.0,
) -> Certificate:
    """Check that central projection from the origin is a local and global embedding.

    (i) No tangent plane passes through the origin:
    ``|<n, p>| > tol_fold |p|``.
    (ii) Samples sharing a spherical cell must lie on one sheet.  A pair is
    accepted as one sheet when its radial gap is explained by the local
    slope of the radial function, ``|dr| <= slack * r * tan(gamma) * alpha +
    tol``, where ``gamma`` is the angle between the normal and the ray and
    ``alpha`` the angular separation of the two rays.
    """
    pts = np.asarray(samples.points, float)
    if pts.shape[1] != 3:
        raise PreconditionError("radial projection needs ambient dimension 3")
    nrm = np.asarray(samples.normals, float)
    r = np.linalg.norm(pts, axis=1)
    radial = np.abs(np.sum(nrm * pts, axis=1))
    fold = radial <= tol_fold * r
    if np.any(fold):
        i = int(np.argmax(fold))
        return Certificate("radial_projection", False, float(np.min(radial / r) - tol_fold),
                           {"kind": "fold", "point": pts[i]}, {"folds": int(np.sum(fold))})
    dirs = pts / r[:, None]
    cos_g = np.clip(radial / r, 1e-300, 1.0)
    tan_g = np.sqrt(np.maximum(1.0 - cos_g**2, 0.0)) / cos_g
    cells = _cell_index(dirs, cell_deg)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    keys = cells[order]
    collisions = 0
    start = 0
    n = len(order)
    while start < n:
        stop = start + 1
        while stop < n and np.array_equal(keys[stop], keys[start]):
            stop += 1
        group = order[start:stop]
        for ii in range(len(group)):
            for jj in range(ii + 1, len(group)):
                i, j = group[ii], group[jj]
                alpha = math.acos(float(np.clip(dirs[i] @ dirs[j], -1.0, 1.0)))
                allowed = slack * max(r[i] * tan_g[i], r[j] * tan_g[j]) * alpha + 1e-9 * max(r[i], r[j])
                if abs(r[i] - r[j]) > allowed:
                    collisions += 1
                    return Certificate(
                        "radial_projection", False, float(allowed - abs(r[i] - r[j])),
                        {"kind": "collision", "points": [pts[i], pts[j]]},
                        {"folds": 0, "collisions": collisions},
                    )
        start = stop
    return Certificate("radial_projection", True, float(np.min(radial / r) - tol_fold), None,
                       {"folds": 0, "collisions": 0, "cell_deg": cell_deg, "n_samples": len(pts)})


def gauss_identity_certificate(max_k: int = 3, max_l: int = 3, n_points: int = 10_000, seed: int = 0,
                               tol: float = 1e-10) -> Certificate:
    """``q*(dQ(x), dQ(x)) = 4 Q(x)`` for the standard forms with ``k <= max_k`` and ``l <= max_l``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    per_form = {}
    for k in range(1, max_k + 1):
        for l in range(1, max_l + 1):
            q = standard_form(k, l)
            qd = dual_form(q)
            x = rng.standard_normal((n_points, k + l))
            dq = 2.0 * x @ q.matrix
            lhs = np.einsum("ij,jk,ik->i", dq, qd.matrix, dq)
            rhs = 4.0 * np.einsum("ij,jk,ik->i", x, q.matrix, x)
            r = float(np.max(np.abs(lhs - rhs)))
            per_form[f"{k},{l}"] = r
            worst = max(worst, r)
    return Certificate("gauss_identity", worst < tol, tol - worst, None,
                       {"max_residual": worst, "per_form": per_form, "n_points": n_points})
