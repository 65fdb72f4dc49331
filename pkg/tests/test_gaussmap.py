"""Gauss maps, second forms, the Rolle field and radial projection."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from ccbody.errors import PreconditionError, SingularPoint, ZeroPoint
from ccbody.gaussmap import (
    RolleField,
    SurfaceSampleSet,
    angle_between,
    containment_certificate,
    gauss_identity_certificate,
    gauss_map,
    gauss_quadric_closed_form,
    hyperbolicity_certificate,
    plane_oracle,
    project_to_surface,
    quadric_oracle,
    radial_projection_injectivity,
    rolle_gradient_identity_check,
    rolle_identity_certificate,
    sample_surface,
    second_fundamental_form,
    second_fundamental_signature,
    sphere_oracle,
    torus_oracle,
)
from ccbody.quadforms import QuadraticForm, Signature, householder_complement, standard_form


def graph_hessian_oracle(oracle, point, h=1e-4):
    """Independent oracle: second differences of the local graph over the tangent plane."""
    x = np.asarray(point, float)
    g = oracle.gradient(x)
    n = g / np.linalg.norm(g)
    t = householder_complement(g)
    m = t.shape[1]

    def height(s):
        base = x + t @ s
        return brentq(lambda w: oracle.value(base + w * n), -0.5, 0.5, xtol=1e-15)

    hess = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            ei, ej = np.eye(m)[i] * h, np.eye(m)[j] * h
            hess[i, j] = (height(ei + ej) - height(ei - ej) - height(-ei + ej) + height(-ei - ej)) / (4 * h * h)
    # P(x + t s + w n) = 0 gives w = -(1/2) s^T II s to second order
    return -hess


def test_sphere_second_form_is_identity_over_radius():
    o = sphere_oracle(3, 2.0)
    ii = second_fundamental_form(o, [0.0, 0.0, 2.0])
    assert np.allclose(ii, np.eye(2) / 2.0)


def test_one_sheet_hyperboloid_second_form():
    o = quadric_oracle(standard_form(2, 1), 1.0)
    ii = second_fundamental_form(o, [1.0, 0.0, 0.0])
    assert np.allclose(np.sort(np.linalg.eigvalsh(ii)), [-1.0, 1.0])
    assert second_fundamental_signature(o, [1.0, 0.0, 0.0]) == Signature(1, 1, 0)


def test_plane_is_flat():
    assert second_fundamental_signature(plane_oracle([0, 0, 1.0]), [1.0, 2.0, 0.0]) == Signature(0, 0, 2)


def test_torus_inner_and_outer_equator():
    o = torus_oracle(2.0, 0.5)
    assert second_fundamental_signature(o, [2.5, 0.0, 0.0]).matches(Signature(2, 0, 0))
    assert second_fundamental_signature(o, [1.5, 0.0, 0.0]).matches(Signature(1, 1, 0))


def test_torus_second_form_against_graph_oracle(rng):
    o = torus_oracle(2.0, 0.5)
    for _ in range(5):
        phi, psi = rng.uniform(0, 2 * math.pi, 2)
        rho = 2.0 + 0.5 * math.cos(psi)
        p = np.array([rho * math.cos(phi), rho * math.sin(phi), 0.5 * math.sin(psi)])
        assert np.allclose(second_fundamental_form(o, p), graph_hessian_oracle(o, p), atol=1e-5)


def test_singular_and_zero_points():
    with pytest.raises(SingularPoint):
        gauss_map(quadric_oracle(standard_form(1, 1)), [0.0, 0.0])
    with pytest.raises(ZeroPoint):
        gauss_quadric_closed_form(1, 1, [0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 3), l=st.integers(1, 3))
def test_gauss_map_closed_form(seed, k, l):
    x = np.random.default_rng(seed).standard_normal(k + l)
    n = gauss_map(quadric_oracle(standard_form(k, l), 0.0), x)
    assert angle_between(n, gauss_quadric_closed_form(k, l, x)) < 1e-12


def test_angle_between_small_angles():
    assert angle_between([1.0, 0.0], [1.0, 1e-12]) == pytest.approx(1e-12, rel=1e-6)
    assert angle_between([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(math.pi)


def test_gauss_identity_certificate():
    cert = gauss_identity_certificate(n_points=2000)
    assert cert.passed and cert.margin >= 0


@pytest.mark.parametrize("k,l", [(1, 1), (2, 1), (1, 2), (2, 2)])
@pytest.mark.parametrize("level", [1.0, -1.0])
def test_quadric_level_set_signatures(k, l, level):
    expected = Signature(k - 1, l, 0) if level > 0 else Signature(k, l - 1, 0)
    cert = hyperbolicity_certificate(quadric_oracle(standard_form(k, l), level), [[-3, 3]] * (k + l), 50,
                                     expected, seed=1, unordered=False)
    assert cert.passed, cert.witness


def test_projection_lands_on_surface():
    o = sphere_oracle(3)
    x = project_to_surface(o, [0.3, 0.2, 0.9])
    assert abs(np.linalg.norm(x) - 1.0) < 1e-10


def test_sample_csv_round_trip(tmp_path):
    s = sample_surface(sphere_oracle(3), [[-2, 2]] * 3, 20, seed=0)
    s.to_csv(tmp_path / "s.csv")
    t = SurfaceSampleSet.from_csv(tmp_path / "s.csv")
    assert np.array_equal(t.points, s.points) and np.array_equal(t.signatures, s.signatures)


def test_rolle_field_derivatives_against_finite_differences(rng):
    f = RolleField(2, 2, 0.1)
    x = rng.standard_normal(4)
    h = 1e-6
    fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(4)])
    assert np.allclose(f.gradient(x), fd, atol=1e-8)
    fdh = np.array([(f.gradient(x + h * e) - f.gradient(x - h * e)) / (2 * h) for e in np.eye(4)])
    assert np.allclose(f.hessian(x), fdh, atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 3), l=st.integers(1, 3),
       eps=st.floats(1e-3, 1.0))
def test_rolle_identity_property(seed, k, l, eps):
    f = RolleField(k, l, eps)
    x = 2 * np.random.default_rng(seed).standard_normal(k + l)
    if f.value(x) >= 0 or f.split(x)[1] < 1e-6:
        return
    assert rolle_gradient_identity_check(f, x).passed


def test_rolle_requires_negative_value():
    with pytest.raises(PreconditionError):
        rolle_gradient_identity_check(RolleField(1, 1, 0.1), [0.0, 0.1])


def test_rolle_certificate():
    assert rolle_identity_certificate(2, 2, 0.1, 200).passed


def test_containment_on_level_set():
    # {Q = -eps} with Q = |a|^2 - |b|^2 lies in {f >= 0}
    s = sample_surface(quadric_oracle(standard_form(2, 1), -0.1), [[-3, 3]] * 3, 100, seed=2)
    assert containment_certificate(s, 2, 1, 0.1).passed


def test_radial_projection_hyperboloid_and_torus():
    h = sample_surface(quadric_oracle(standard_form(2, 1), 1.0), [[-3, 3]] * 3, 1000, seed=0)
    assert radial_projection_injectivity(h).passed
    t = sample_surface(torus_oracle(), [[-3, 3]] * 3, 1000, seed=0)
    assert not radial_projection_injectivity(t).passed


def test_radial_projection_detects_fold():
    # a plane through the origin is tangent to every ray inside it
    s = SurfaceSampleSet(np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 3), int))
    c = radial_projection_injectivity(s)
    assert not c.passed and c.witness["kind"] == "fold"
