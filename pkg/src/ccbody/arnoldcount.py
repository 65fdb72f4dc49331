"""Counting intersections and tangent planes of lines and quadrics in RP^3.

For a nondegenerate quadric ``{x^T A x = 0}`` and a line spanned by ``p``
and ``q``, the number of intersection points is the number of real roots on
RP^1 of the binary form ``M = [p q]^T A [p q]``.  A plane with covector ``u``
is tangent to the quadric iff ``u^T A^{-1} u = 0``; the planes through the
line form the pencil spanned by a basis ``u_1, u_2`` of the annihilator of
``span(p, q)``, so tangent planes through the line are counted by the
binary form ``N = [u_1 u_2]^T A^{-1} [u_1 u_2]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq

from .certificate import Certificate, bundle
from .errors import DegenerateForm, PreconditionError
from .quadforms import QuadraticForm, Signature, signature_of

TOL_DISC = 1e-9
TOL_DET = 1e-12
TOL_RANK = 1e-10
INFINITE = math.inf


class HomogeneousQuadric:
    """Quadric surface ``{x^T A x = 0}`` in RP^3 with nondegenerate ``A``."""

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float)
        if a.shape != (4, 4):
            raise ValueError("matrix must be 4 x 4")
        a = 0.5 * (a + a.T)
        scale = float(np.max(np.abs(a)))
        if scale == 0 or abs(np.linalg.det(a)) <= TOL_DET * scale**4:
            raise DegenerateForm("quadric matrix is singular")
        self.matrix = a

    @property
    def signature(self) -> Signature:
        return signature_of(QuadraticForm(self.matrix))

    def dual(self) -> "HomogeneousQuadric":
        return HomogeneousQuadric(np.linalg.inv(self.matrix))

    def transformed(self, g) -> "HomogeneousQuadric":
        """Matrix in coordinates ``y`` with ``x = g y``."""
        g = np.asarray(g, float)
        return HomogeneousQuadric(g.T @ self.matrix @ g)


class ProjectiveLine:
    """Line of RP^3 spanned by two homogeneous 4-vectors."""

    def __init__(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        if p.shape != (4,) or q.shape != (4,):
            raise ValueError("spanning vectors must be 4-vectors")
        s = np.linalg.svd(np.column_stack([p, q]), compute_uv=False)
        if s[0] == 0 or s[1] <= TOL_RANK * s[0]:
            raise PreconditionError("spanning vectors are dependent")
        self.p, self.q = p, q

    @property
    def basis(self) -> np.ndarray:
        return np.column_stack([self.p, self.q])

    def dual(self) -> "ProjectiveLine":
        """Annihilator line: covectors vanishing on ``p`` and ``q``."""
        u = null_space(self.basis.T)
        return ProjectiveLine(u[:, 0], u[:, 1])

    def transformed(self, g) -> "ProjectiveLine":
        """Same line in coordinates ``y`` with ``x = g y``."""
        ginv = np.linalg.inv(np.asarray(g, float))
        return ProjectiveLine(ginv @ self.p, ginv @ self.q)


@dataclass(frozen=True)
class BinaryCount:
    """Real root count of a binary quadratic form with its discriminant data."""

    count: float  # 0, 1, 2 or INFINITE
    det: float
    scale: float

    @property
    def relative_det(self) -> float:
        return self.det / self.scale**2 if self.scale > 0 else 0.0

    @property
    def near_tangent(self) -> bool:
        return self.count == 1


def count_binary_roots(m, vanish_scale: float, tol_disc: float = TOL_DISC) -> BinaryCount:
    """Roots on RP^1 of ``m11 t^2 + 2 m12 t s + m22 s^2``.

    Two roots when ``det m < 0``, none when ``det m > 0``, one (a double
    root) when ``|det m|`` is below ``tol_disc`` relative to the squared
    coefficient scale, infinitely many when ``m`` vanishes relative to
    ``vanish_scale``.
    """
    m = np.asarray(m, float)
    scale = float(np.max(np.abs(m)))
    if scale <= TOL_DISC * vanish_scale:
        return BinaryCount(INFINITE, 0.0, scale)
    det = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    if abs(det) <= tol_disc * scale**2:
        return BinaryCount(1, det, scale)
    return BinaryCount(2 if det < 0 else 0, det, scale)


def _restricted(a: np.ndarray, basis: np.ndarray) -> tuple[np.ndarray, float]:
    m = basis.T @ a @ basis
    vs = float(np.max(np.abs(a))) * float(np.prod(np.linalg.norm(basis, axis=0)))
    return 0.5 * (m + m.T), vs


def intersection_form(S: HomogeneousQuadric, L: ProjectiveLine) -> BinaryCount:
    m, vs = _restricted(S.matrix, L.basis)
    return count_binary_roots(m, vs)


def tangency_form(S: HomogeneousQuadric, L: ProjectiveLine) -> BinaryCount:
    u = null_space(L.basis.T)
    m, vs = _restricted(np.linalg.inv(S.matrix), u)
    return count_binary_roots(m, vs)


def line_quadric_intersections(S: HomogeneousQuadric, L: ProjectiveLine) -> float:
    """Number of points of ``S`` on ``L`` (``INFINITE`` if the line lies on ``S``)."""
    return intersection_form(S, L).count


def tangent_planes_through_line(S: HomogeneousQuadric, L: ProjectiveLine) -> float:
    """Number of planes through ``L`` tangent to ``S`` (``INFINITE`` for a degenerate pencil)."""
    return tangency_form(S, L).count


def random_line(rng: np.random.Generator) -> ProjectiveLine:
    return ProjectiveLine(rng.standard_normal(4), rng.standard_normal(4))


def _require_22(S: HomogeneousQuadric) -> None:
    if not S.signature.matches(Signature(2, 2, 0), unordered=False):
        raise PreconditionError("identity with zero Euler characteristic needs signature (2, 2)")


def arnold_identity_certificate(S: HomogeneousQuadric, n_lines: int = 1000, seed: int = 0,
                                tol_disc: float = TOL_DISC) -> Certificate:
    """Intersection count equals tangency count for random generic lines.

    Lines within ``tol_disc`` of tangency on either side, and lines on the
    quadric, are skipped and counted.
    """
    _require_22(S)
    rng = np.random.default_rng(seed)
    violations = []
    skipped = 0
    hist = {0: 0, 2: 0}
    for _ in range(n_lines):
        L = random_line(rng)
        ci = intersection_form(S, L)
        ct = tangency_form(S, L)
        if ci.count in (1, INFINITE) or ct.count in (1, INFINITE):
            skipped += 1
            continue
        if ci.count != ct.count:
            violations.append({"p": L.p.tolist(), "q": L.q.tolist(), "intersections": ci.count,
                               "tangencies": ct.count})
        else:
            hist[int(ci.count)] += 1
    return Certificate(
        name="arnold_identity",
        passed=not violations,
        margin=float(-len(violations)),
        witness=violations[0] if violations else None,
        details={"violations": len(violations), "skipped_near_tangent": skipped, "retained": n_lines - skipped,
                 "count_histogram": hist, "seed": seed},
    )


def duality_certificate(S: HomogeneousQuadric, n_instances: int = 500, seed: int = 1) -> Certificate:
    """Tangent planes of ``(S, L)`` are intersections of ``(S*, L*)`` and vice versa."""
    rng = np.random.default_rng(seed)
    bad = 0
    skipped = 0
    Sd = S.dual()
    for _ in range(n_instances):
        L = random_line(rng)
        Ld = L.dual()
        a = tangent_planes_through_line(S, L)
        b = line_quadric_intersections(Sd, Ld)
        c = line_quadric_intersections(S, L)
        d = tangent_planes_through_line(Sd, Ld)
        if 1 in (a, b, c, d):
            skipped += 1
            continue
        bad += (a != b) + (c != d)
    return Certificate("duality_involution", bad == 0, float(-bad), None,
                       {"instances": n_instances, "mismatches": bad, "skipped_near_tangent": skipped})


def projective_invariance_certificate(S: HomogeneousQuadric, n_trials: int = 100, seed: int = 2) -> Certificate:
    """Both counts are unchanged by a common random change of coordinates."""
    rng = np.random.default_rng(seed)
    bad = 0
    skipped = 0
    for _ in range(n_trials):
        L = random_line(rng)
        g = rng.standard_normal((4, 4))
        while abs(np.linalg.det(g)) < 1e-3:
            g = rng.standard_normal((4, 4))
        S2, L2 = S.transformed(g), L.transformed(g)
        before = (intersection_form(S, L), tangency_form(S, L))
        after = (intersection_form(S2, L2), tangency_form(S2, L2))
        if any(c.count == 1 for c in before + after):
            skipped += 1
            continue
        bad += sum(x.count != y.count for x, y in zip(before, after))
    return Certificate("projective_invariance", bad == 0, float(-bad), None,
                       {"trials": n_trials, "mismatches": bad, "skipped_near_tangent": skipped})


def homotopy_certificate(S: HomogeneousQuadric, n_homotopies: int = 20, seed: int = 3,
                         n_samples: int = 64, tol_param: float = 1e-8) -> Certificate:
    """Along line families crossing tangency both counts change at the same parameter.

    Each family ``L(tau) = span(p, q + tau v)`` is chosen so that the
    intersection count differs at ``tau = 0`` and ``tau = 1``.  The
    parameter where each discriminant vanishes is located by root finding
    and the two locations are compared; counts are compared at all samples.
    """
    _require_22(S)
    rng = np.random.default_rng(seed)
    done = 0
    tries = 0
    bad = []
    worst = 0.0
    while done < n_homotopies and tries < 100 * n_homotopies:
        tries += 1
        p, q, v = rng.standard_normal((3, 4))
        fam = lambda t: ProjectiveLine(p, q + t * v)  # noqa: E731
        i0, i1 = intersection_form(S, fam(0.0)), intersection_form(S, fam(1.0))
        if {i0.count, i1.count} != {0, 2}:
            continue
        det_i = lambda t: intersection_form(S, fam(t)).det  # noqa: E731
        det_t = lambda t: tangency_form(S, fam(t)).det  # noqa: E731
        try:
            ti = brentq(det_i, 0.0, 1.0, xtol=1e-14)
            tt = brentq(det_t, 0.0, 1.0, xtol=1e-14)
        except ValueError:
            bad.append({"reason": "tangency discriminant has no sign change"})
            done += 1
            continue
        worst = max(worst, abs(ti - tt))
        if abs(ti - tt) > tol_param:
            bad.append({"tau_intersection": ti, "tau_tangency": tt})
        for t in np.linspace(0.0, 1.0, n_samples):
            a, b = intersection_form(S, fam(t)), tangency_form(S, fam(t))
            if a.count != 1 and b.count != 1 and a.count != b.count:
                bad.append({"tau": float(t), "intersections": a.count, "tangencies": b.count})
        done += 1
    return Certificate("tangency_homotopy", not bad and done == n_homotopies, -worst, bad[0] if bad else None,
                       {"homotopies": done, "max_parameter_gap": worst})


def arnold_certificates(S: HomogeneousQuadric, n_lines: int = 1000, seed: int = 7) -> Certificate:
    return bundle("arnold", [
        arnold_identity_certificate(S, n_lines, seed),
        duality_certificate(S, 500, seed + 1),
        projective_invariance_certificate(S, 100, seed + 2),
        homotopy_certificate(S, 20, seed + 3),
    ])
