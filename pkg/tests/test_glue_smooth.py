"""Gluing with the quasi-cone, the smoothing kernel, smoothing and mesh export."""
import math

import numpy as np
import pytest
from scipy import integrate

from ccbody.errors import GlueConvexityFailure, InsufficientMargin, InvalidSupport, PreconditionError
from ccbody.gaussmap import angle_between, second_fundamental_signature
from ccbody.glue_smooth import (
    Mesh,
    certified_closeness,
    export_mesh,
    glue,
    kernel_certificate,
    make_kernel,
    mesh_hyperbolicity_certificate,
    osculating_quadric,
    quasicone_field,
    reachable_mask,
    smooth,
    strict_convexity_certificate,
    tail_certificate,
)
from ccbody.quadforms import Signature
from ccbody.supportgeo import (
    SupportField,
    curvature_positivity_certificate,
    disc_field,
    field_sup_distance,
    theta_grid,
    z_convexity_certificate,
    z_grid,
)

EPS = 0.05 / 512


@pytest.fixture(scope="module")
def kernel():
    return make_kernel(EPS)


@pytest.fixture(scope="module")
def smoothed(glued_fld, kernel):
    return smooth(glued_fld, kernel)


def brute_smooth_at(values, kernel, i, j):
    """Independent oracle: explicit double sum of kernel density times shifted samples."""
    dens = kernel.values() * kernel.cell
    k = (dens.shape[0] - 1) // 2
    n = values.shape[1]
    total = 0.0
    for a in range(dens.shape[0]):
        row = i - (a - k)
        row_vals = values[min(max(row, 0), values.shape[0] - 1)]
        if row < 0 or row >= values.shape[0]:
            # linear extrapolation beyond the grid
            edge = 0 if row < 0 else values.shape[0] - 1
            step = values[edge] - values[edge + (1 if row < 0 else -1)]
            row_vals = values[edge] + abs(row - edge) * step
        total += float(dens[a] @ row_vals[(j - np.arange(n)) % n])
    return total


# ---------------------------------------------------------------- cone and gluing


def test_quasicone_values():
    z = z_grid(3.0, 0.5)
    fld = quasicone_field(z, theta_grid(8))
    assert np.all(fld.values[fld.row_of(2.0)] == 1.0)
    assert np.all(fld.values[fld.row_of(1.0)] == 0.0)
    assert np.all(np.isnan(fld.values[fld.row_of(0.5)]))


def test_glue_regions(strip_fld, glued_fld):
    outer = np.abs(glued_fld.z) >= 2.0
    inner = np.abs(glued_fld.z) <= 1.0
    assert np.array_equal(glued_fld.values[outer], np.repeat((np.abs(glued_fld.z[outer]) - 1.0)[:, None], 256, 1))
    assert np.array_equal(glued_fld.values[inner], strip_fld.values[inner])
    assert np.all(glued_fld.values >= strip_fld.values)
    cone = quasicone_field(glued_fld.z, glued_fld.theta).values
    assert np.all(glued_fld.values[~inner] >= cone[~inner])
    assert z_convexity_certificate(glued_fld).passed


def test_glue_rejects_oversized_strip():
    # sections shrinking concavely in z and wider than the cone stay concave after the max
    z = z_grid(4.0, 1 / 64)
    big = disc_field(z, 32, 5.0 - 0.1 * z**2, provenance="strip")
    with pytest.raises(GlueConvexityFailure):
        glue(big, quasicone_field(z, big.theta))


def test_glue_grid_mismatch():
    z = z_grid(4.0, 0.25)
    with pytest.raises(PreconditionError):
        glue(disc_field(z, 16, 0.1), quasicone_field(z, theta_grid(8)))


# ---------------------------------------------------------------- kernel


def test_kernel_mass_evenness_positivity(kernel):
    cert = kernel_certificate(kernel)
    assert cert.passed
    assert abs(cert.details["mass"] - 1.0) <= 1e-10
    v = kernel.values()
    assert np.array_equal(v, v[::-1])
    assert np.all(v > 0)


def test_kernel_normalization_constant_by_quadrature():
    # independent quadrature of C exp(p (cos psi - t^2) / eps) over the plane strip
    k = make_kernel(0.5, z_step=1 / 64, n_theta=64)
    e = k.sharp_epsilon
    t_mass, _ = integrate.quad(lambda t: math.exp(-t * t / e), -np.inf, np.inf)
    p_mass, _ = integrate.quad(lambda p: math.exp((math.cos(p) - 1.0) / e), -math.pi, math.pi)
    assert math.exp(k.log_constant + 1.0 / e) * t_mass * p_mass == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.05, 1e-3])
def test_kernel_concentration(eps):
    k = make_kernel(eps)
    assert k.concentration >= 1.0 - eps
    assert kernel_certificate(k).passed
    assert k.half_window <= 2.0


def test_kernel_rejects_bad_epsilon():
    with pytest.raises(PreconditionError):
        make_kernel(0.0)
    with pytest.raises(PreconditionError):
        make_kernel(2.0)


# ---------------------------------------------------------------- smoothing


def test_affine_reproduction():
    z = z_grid(12.0, 1 / 64)
    th = theta_grid(64)
    k = make_kernel(0.05, z_step=1 / 64, n_theta=64)
    fld = SupportField(z, th, np.repeat((0.7 * z + 2.0)[:, None], 64, axis=1), "field")
    assert np.max(np.abs(smooth(fld, k).values - fld.values)) < 1e-10


def test_affine_in_z_with_angular_part():
    # alpha z + beta + gamma cos(theta): the affine z-part passes unchanged and
    # cos(theta) is damped by the angular mean of cos(psi) under the kernel
    z = z_grid(12.0, 1 / 64)
    th = theta_grid(64)
    k = make_kernel(0.05, z_step=1 / 64, n_theta=64)
    vals = 0.7 * z[:, None] + 2.0 + 0.3 * np.cos(th)[None, :]
    out = smooth(SupportField(z, th, vals, "field"), k).values
    damp = (1.0 - k.floor_weight) * float(k.psi_weights_sharp @ np.cos(k.psi))
    expected = 0.7 * z[:, None] + 2.0 + 0.3 * damp * np.cos(th)[None, :]
    assert np.max(np.abs(out - expected)) < 1e-9


def test_smooth_matches_brute_force(glued_fld):
    k = make_kernel(0.05, z_step=1 / 256, n_theta=256)
    out = smooth(glued_fld, k)
    for z, j in ((0.0, 0), (0.3125, 17), (1.0, 100), (-11.9921875, 5)):
        i = glued_fld.row_of(z)
        assert out.values[i, j] == pytest.approx(brute_smooth_at(glued_fld.values, k, i, j), abs=1e-10)


def test_smooth_requires_affine_ends():
    z = z_grid(2.0, 1 / 64)
    th = theta_grid(64)
    fld = SupportField(z, th, np.repeat((z**2)[:, None], 64, axis=1))
    with pytest.raises(InsufficientMargin):
        smooth(fld, make_kernel(0.05, z_step=1 / 64, n_theta=64))


def test_smooth_grid_mismatch(glued_fld):
    with pytest.raises(PreconditionError):
        smooth(glued_fld, make_kernel(0.05, z_step=1 / 64, n_theta=64))


def test_smoothing_preserves_convexity(glued_fld, smoothed):
    me = z_convexity_certificate(glued_fld).margin
    md = z_convexity_certificate(smoothed).margin
    assert md >= me - 1e-9


def test_smoothed_curvature_and_strictness(glued_fld, smoothed, kernel):
    assert curvature_positivity_certificate(smoothed).passed
    assert not curvature_positivity_certificate(glued_fld).passed
    cert = strict_convexity_certificate(smoothed, glued_fld, kernel)
    assert cert.passed and cert.margin > 0
    assert np.any(reachable_mask(glued_fld, kernel))


def test_closeness_and_delta(glued_fld, smoothed, kernel):
    close = certified_closeness(smoothed, glued_fld, kernel)
    assert close["grid"] == field_sup_distance(smoothed, glued_fld)
    assert close["grid"] <= close["certified"] < 0.1
    assert not close["certified"] <= 1e-12  # a tiny delta is not met


def test_tail_decay(smoothed, kernel):
    cert = tail_certificate(smoothed, kernel)
    assert cert.passed, cert.details


# ---------------------------------------------------------------- mesh


def test_mesh_cone_circles_and_watertight(smoothed, tmp_path):
    mesh = export_mesh(smoothed, (2.5, 3.0), 8, tmp_path / "m.obj")
    r = np.linalg.norm(mesh.vertices[..., :2], axis=-1)
    assert np.max(np.abs(r - (np.abs(mesh.z)[:, None] - 1.0))) < 1e-9
    f = mesh.faces()
    nt = mesh.theta.size
    assert f.shape == ((mesh.z.size - 1) * nt, 4)
    assert np.all(f[nt - 1] % nt == [nt - 1, 0, 0, nt - 1])
    text = (tmp_path / "m.obj").read_text().splitlines()
    assert sum(line.startswith("v ") for line in text) == mesh.z.size * nt
    assert sum(line.startswith("vn ") for line in text) == mesh.z.size * nt
    assert sum(line.startswith("f ") for line in text) == len(f)


def test_mesh_rejects_nonsmooth(strip_fld):
    with pytest.raises(InvalidSupport):
        export_mesh(strip_fld)


def test_mesh_normals_on_cone_against_closed_form():
    # cone x^2 + y^2 = (z - 1)^2 for z > 1: outward normal (u, -1) / sqrt(2)
    z = z_grid(4.0, 1 / 64)
    fld = disc_field(z, 64, np.abs(z) + 1.0)
    mesh = export_mesh(fld, (1.5, 3.0))
    u = np.stack([np.cos(fld.theta), np.sin(fld.theta), -np.ones(64)], axis=1) / math.sqrt(2)
    for row in mesh.normals:
        assert max(angle_between(a, b) for a, b in zip(row, u)) < 1e-9


def test_osculating_quadric_on_hyperboloid():
    # one-sheet hyperboloid x^2 + y^2 = 1 + z^2 parameterized by (z, theta)
    h = 1e-3
    zs = 0.4 + h * np.array([-1, 0, 1])
    ts = 0.7 + h * np.array([-1, 0, 1])
    r = np.sqrt(1 + zs**2)
    pts = np.array([[[ri * math.cos(t), ri * math.sin(t), zi] for t in ts] for ri, zi in zip(r, zs)])
    n = np.array([math.cos(0.7), math.sin(0.7), -0.4 / math.sqrt(1 + 0.16)])
    oracle, cross = osculating_quadric(pts, n)
    assert second_fundamental_signature(oracle, np.zeros(3)) == Signature(1, 1, 0)
    assert angle_between(cross, n) < 1e-3


def test_mesh_hyperbolicity_sampled(smoothed, glued_fld, kernel):
    cert = mesh_hyperbolicity_certificate(smoothed, glued_fld, kernel, n_samples=100, seed=3)
    assert cert.passed, cert.witness
    assert cert.details["max_normal_angle"] < 1e-3
