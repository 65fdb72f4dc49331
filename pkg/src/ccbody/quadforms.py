"""Quadratic forms: signatures, duals and hyperplane restrictions.

All routines work on small dense symmetric matrices.  Eigenvalues are
classified as zero when they fall below ``TOL_DEGENERATE`` times the largest
absolute eigenvalue.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .certificate import Certificate
from .errors import DegenerateForm, ZeroCovector

TOL_DEGENERATE = 1e-9


@dataclass(frozen=True)
class Signature:
    """Inertia counts of a real quadratic form."""

    plus: int
    minus: int
    zero: int = 0

    @property
    def dim(self) -> int:
        return self.plus + self.minus + self.zero

    def matches(self, other: "Signature", unordered: bool = True) -> bool:
        """Compare signatures; by default (p, q) also matches (q, p)."""
        if self.zero != other.zero:
            return False
        if (self.plus, self.minus) == (other.plus, other.minus):
            return True
        return unordered and (self.plus, self.minus) == (other.minus, other.plus)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.plus, self.minus, self.zero)

    def to_dict(self) -> dict:
        return {"plus": self.plus, "minus": self.minus, "zero": self.zero}


class QuadraticForm:
    """Symmetric bilinear form on R^n.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
        Matrix of the form.  It is symmetrized on construction.
    """

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("matrix must be square and nonempty")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._matrix = a

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return x @ self._matrix @ x

    def bilinear(self, x, y) -> float:
        return np.asarray(x, float) @ self._matrix @ np.asarray(y, float)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._matrix)

    def threshold(self, tol: float = TOL_DEGENERATE) -> float:
        ev = self.eigenvalues()
        return tol * max(float(np.max(np.abs(ev))), 0.0)

    @property
    def nondegenerate(self) -> bool:
        ev = self.eigenvalues()
        scale = float(np.max(np.abs(ev)))
        return scale > 0 and float(np.min(np.abs(ev))) > TOL_DEGENERATE * scale

    def __eq__(self, other) -> bool:
        return isinstance(other, QuadraticForm) and np.array_equal(self._matrix, other._matrix)

    def __repr__(self) -> str:
        return f"QuadraticForm({self._matrix.tolist()!r})"

    # serialization
    def to_json(self) -> str:
        iu = np.triu_indices(self.dim)
        return json.dumps({"dim": self.dim, "upper": self._matrix[iu].tolist()})

    @classmethod
    def from_json(cls, text: str) -> "QuadraticForm":
        data = json.loads(text)
        n = int(data["dim"])
        upper = np.asarray(data["upper"], dtype=float)
        if upper.size != n * (n + 1) // 2:
            raise ValueError("upper triangle has wrong length")
        a = np.zeros((n, n))
        a[np.triu_indices(n)] = upper
        return cls(a + np.triu(a, 1).T)


def standard_form(k: int, l: int) -> QuadraticForm:
    """Diagonal form with ``k`` entries +1 followed by ``l`` entries -1."""
    if k < 1 or l < 1:
        raise ValueError("k and l must be positive")
    return QuadraticForm(np.diag([1.0] * k + [-1.0] * l))


def signature_of(q: QuadraticForm, tol: float = TOL_DEGENERATE, scale: float = None) -> Signature:
    """Count positive, negative and (numerically) zero eigenvalues.

    Eigenvalues below ``tol * scale`` in absolute value count as zero; the
    default scale is the largest absolute eigenvalue.
    """
    ev = q.eigenvalues()
    if scale is None:
        scale = float(np.max(np.abs(ev))) if ev.size else 0.0
    cut = tol * scale
    return Signature(int(np.sum(ev > cut)), int(np.sum(ev < -cut)), int(np.sum(np.abs(ev) <= cut)))


def _form_map(q: QuadraticForm, x) -> np.ndarray:
    """Linear map x -> q(x, .) identified with a covector."""
    return q.matrix @ np.asarray(x, float)


def dual_form(q: QuadraticForm) -> QuadraticForm:
    """Form on covectors transported through the isomorphism induced by ``q``.

    Its matrix is the inverse of the matrix of ``q``.  The defining identity
    is re-checked on random covectors.
    """
    if not q.nondegenerate:
        raise DegenerateForm("dual of a degenerate form is undefined")
    inv = np.linalg.inv(q.matrix)
    dual = QuadraticForm(inv)
    rng = np.random.default_rng(0)
    for _ in range(4):
        ell = rng.standard_normal(q.dim)
        v = np.linalg.solve(q.matrix, ell)  # covector -> vector
        lhs, rhs = dual(ell), q(v)
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs), abs(rhs)), "dual identity violated"
    return dual


def householder_complement(v) -> np.ndarray:
    """Orthonormal basis (columns) of the hyperplane orthogonal to ``v``."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0 or not np.isfinite(norm):
        raise ZeroCovector("direction must be nonzero")
    e = v / norm
    n = e.size
    # reflector H with H e = -sign(e0) e_0; its remaining columns span e^perp
    s = 1.0 if e[0] >= 0 else -1.0
    w = e.copy()
    w[0] += s
    h = np.eye(n) - 2.0 * np.outer(w, w) / (w @ w)
    return h[:, 1:]


def restrict_to_hyperplane(q: QuadraticForm, ell) -> tuple[QuadraticForm, Signature]:
    """Restriction of ``q`` to ``{ell = 0}`` in an orthonormal basis.

    Zero eigenvalues are judged relative to the scale of ``q`` itself.
    """
    basis = householder_complement(ell)
    r = QuadraticForm(basis.T @ q.matrix @ basis)
    return r, signature_of(r, scale=float(np.max(np.abs(q.eigenvalues()))))


def dual_value(q: QuadraticForm, ell) -> float:
    """q*(ell, ell) computed by a linear solve."""
    if not q.nondegenerate:
        raise DegenerateForm("form is degenerate")
    ell = np.asarray(ell, float)
    return float(ell @ np.linalg.solve(q.matrix, ell))


def predict_restricted_signature(q: QuadraticForm, ell, tol: float = TOL_DEGENERATE) -> Signature:
    """Signature of ``q`` on ``{ell = 0}`` read off from the sign of q*(ell, ell)."""
    ell = np.asarray(ell, float)
    if not np.any(ell):
        raise ZeroCovector("covector must be nonzero")
    sig = signature_of(q)
    if sig.zero:
        raise DegenerateForm("form is degenerate")
    k, l = sig.plus, sig.minus
    value = dual_value(q, ell)
    inv_scale = 1.0 / float(np.min(np.abs(q.eigenvalues())))
    cut = tol * inv_scale * float(ell @ ell)
    if value < -cut:
        return Signature(k, l - 1, 0)
    if value > cut:
        return Signature(k - 1, l, 0)
    return Signature(k - 1, l - 1, 1)


def random_form(rng: np.random.Generator, dim: int, min_gap: float = 0.1) -> QuadraticForm:
    """Random nondegenerate form: orthogonal conjugate of a diagonal with ``|eigenvalues| >= min_gap``."""
    ev = rng.uniform(min_gap, 2.0, dim) * rng.choice([-1.0, 1.0], dim)
    qm, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return QuadraticForm(qm @ np.diag(ev) @ qm.T)


def signature_law_certificate(n_forms: int = 500, max_dim: int = 6, seed: int = 0,
                              min_dual: float = 1e-3) -> Certificate:
    """Predicted and eigen-computed restricted signatures agree on random instances.

    Covectors with ``|q*(ell, ell)| < min_dual |ell|^2`` are redrawn so that
    every instance is away from the degenerate case.
    """
    rng = np.random.default_rng(seed)
    bad = []
    counts: dict = {}
    for _ in range(n_forms):
        dim = int(rng.integers(2, max_dim + 1))
        q = random_form(rng, dim)
        while True:
            ell = rng.standard_normal(dim)
            if abs(dual_value(q, ell)) >= min_dual * float(ell @ ell):
                break
        predicted = predict_restricted_signature(q, ell)
        _, actual = restrict_to_hyperplane(q, ell)
        key = "negative" if dual_value(q, ell) < 0 else "positive"
        counts[key] = counts.get(key, 0) + 1
        if not predicted.matches(actual, unordered=False):
            bad.append({"form": q.matrix.tolist(), "ell": ell.tolist(), "predicted": predicted.to_dict(),
                        "actual": actual.to_dict()})
    return Certificate("signature_law", not bad, float(-len(bad)), bad[0] if bad else None,
                       {"n_forms": n_forms, "max_dim": max_dim, "mismatches": len(bad), "dual_sign_counts": counts})
