"""The ten acceptance criteria at their stated tolerances and time limits.

Each test is named ``test_criterion_NN_<label>``; the conftest hook prints a
one-line verdict per criterion at the end of the run.
"""
import time

import numpy as np
import pytest

from ccbody.arnoldcount import HomogeneousQuadric, arnold_identity_certificate, duality_certificate
from ccbody.gaussmap import (
    gauss_identity_certificate,
    hyperbolicity_certificate,
    quadric_oracle,
    radial_projection_injectivity,
    rolle_identity_certificate,
    sample_surface,
    torus_oracle,
)
from ccbody.glue_smooth import (
    kernel_certificate,
    make_kernel,
    mesh_hyperbolicity_certificate,
    smooth,
    strict_convexity_certificate,
    tail_certificate,
)
from ccbody.linefree import grid_scan_oracle, line_search
from ccbody.quadforms import Signature, signature_law_certificate, standard_form
from ccbody.strip import build_strip, default_g, nonproportionality_residual, strip_model_checks
from ccbody.supportgeo import (
    SupportField,
    curvature_positivity_certificate,
    field_sup_distance,
    theta_grid,
    z_convexity_certificate,
    z_grid,
)


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _smoothed(default_run, glued_fld):
    """Kernel, E and D of the default run, rebuilt in memory so exact section models stay attached."""
    report = default_run[0]
    assert report.passed, report.to_json()
    cfg = report.config
    kernel = make_kernel(report.margins["epsilon"], cfg["z_step"], cfg["n_theta"], cfg["floor_fraction"])
    D = smooth(glued_fld, kernel)
    for fld, key in ((glued_fld, "glued_field"), (D, "smoothed_field")):
        assert np.array_equal(SupportField.from_binary(report.artifacts[key]).values, fld.values)
    return report, glued_fld, D, kernel


def test_criterion_01_signature_law():
    with Clock() as c:
        cert = signature_law_certificate(n_forms=500, max_dim=6, seed=0)
    assert cert.passed and cert.details["mismatches"] == 0
    assert set(cert.details["dual_sign_counts"]) == {"negative", "positive"}
    assert c.seconds < 5


def test_criterion_02_gauss_identity():
    gauss_identity_certificate(n_points=10, seed=1)  # warm up
    with Clock() as c:
        cert = gauss_identity_certificate(max_k=3, max_l=3, n_points=10_000, seed=0)
    assert cert.passed and cert.margin > 0
    assert c.seconds < 1


def test_criterion_03_quadric_second_form_signatures():
    with Clock() as c:
        for k, l in ((1, 1), (2, 1), (1, 2), (2, 2)):
            q = standard_form(k, l)
            for level, expected in ((1.0, Signature(k - 1, l)), (-1.0, Signature(k, l - 1))):
                cert = hyperbolicity_certificate(quadric_oracle(q, level), [[-3.0, 3.0]] * (k + l), 100, expected,
                                                 seed=k * 10 + l, unordered=False)
                assert cert.passed, (k, l, level, cert.witness)
    assert c.seconds < 10


def test_criterion_04_rolle_identity():
    with Clock() as c:
        cert = rolle_identity_certificate(2, 2, 0.1, n_points=1000, seed=0)
    assert cert.passed
    assert cert.details["max_angle"] < 1e-8 and cert.details["max_level_residual"] < 1e-10
    assert c.seconds < 2


def test_criterion_05_strip_construction():
    with Clock() as c:
        g = default_g(12.0)
        strip, info = build_strip(g)
        checks = {cert.name: cert for cert in strip_model_checks(strip)}
    assert checks["u_support"].details["tail"] < 1e-9
    pos = g.values > 0
    assert np.max(np.abs(strip.rho.values[pos]) / g.values[pos]) <= 0.5
    assert np.all(strip.rho.values[~pos] == 0)
    assert nonproportionality_residual(strip.rho, g) > 0.1
    assert checks["wronskian"].details["drift"] < 1e-8
    assert all(cert.passed for cert in checks.values())
    assert c.seconds < 30


def test_criterion_06_convex_concavity(strip_fld, glued_fld, default_run):
    report, E, D, kernel = _smoothed(default_run, glued_fld)
    with Clock() as c:
        cs = z_convexity_certificate(strip_fld)
        ce = z_convexity_certificate(E)
        cd = strict_convexity_certificate(D, E, kernel)
    assert strip_fld.n_theta == 256 and E.n_theta == 256
    assert cs.passed and cs.margin >= -1e-7
    assert ce.passed and ce.margin >= -1e-7
    assert cd.passed and cd.margin > 0
    lo, hi = cd.details["full_rows_window"]
    assert lo < 0.0 < hi
    assert c.seconds < 60


def test_criterion_07_line_freeness(strip_fld, degenerate_fld, default_run):
    report, run_seconds = default_run[0], default_run[2]
    E = SupportField.from_binary(report.artifacts["glued_field"])
    D = SupportField.from_binary(report.artifacts["smoothed_field"])
    with Clock() as c:
        rep_s = line_search(strip_fld, (-10.0, 10.0), seed=0)
        oracle = grid_scan_oracle(strip_fld, (-10.0, 10.0), spacing=0.01)
        rep_deg = line_search(degenerate_fld, (-10.0, 10.0), seed=0)
    assert rep_s.margin > 0
    assert oracle.lattice_min > 0
    assert abs(rep_s.margin - oracle.lattice_min) <= oracle.cell_diameter
    assert rep_s.margin <= oracle.lattice_min + 1e-12
    assert rep_deg.margin < 1e-6
    c_e = report.margins["linefree_glued"]
    assert c_e > 0 and report.margins["linefree_smoothed"] > 0
    assert field_sup_distance(D, E, (-10.0, 10.0)) < c_e
    assert report.margins["closeness_certified"] < c_e
    assert c.seconds + run_seconds < 600


def test_criterion_08_smoothing_surrogates(glued_fld, default_run):
    report, E, D, kernel = _smoothed(default_run, glued_fld)
    with Clock() as c:
        kc = kernel_certificate(kernel)
        z = z_grid(12.0, 1 / 256)
        th = theta_grid(256)
        affine = SupportField(z, th, 0.7 * z[:, None] + 2.0 + 0.0 * th[None, :], "field")
        affine_err = float(np.max(np.abs(smooth(affine, kernel).values - affine.values)))
        curv = curvature_positivity_certificate(D)
        mesh = mesh_hyperbolicity_certificate(D, E, kernel, n_samples=500, seed=0)
        tail = tail_certificate(D, kernel)
    assert abs(kernel.discrete_mass() - 1.0) <= 1e-10 and kc.passed
    assert affine_err < 1e-9
    assert curv.passed and curv.margin > 0
    assert mesh.passed
    assert tail.passed
    assert c.seconds < 300


def test_criterion_09_arnold_identity():
    S = HomogeneousQuadric(np.diag([1.0, 1.0, -1.0, -1.0]))
    with Clock() as c:
        ident = arnold_identity_certificate(S, 1000, seed=7)
        dual = duality_certificate(S, 500, seed=8)
    assert ident.passed and ident.details["violations"] == 0 and ident.details["retained"] > 900
    assert dual.passed and dual.details["mismatches"] == 0
    assert c.seconds < 10


def test_criterion_10_projection_injectivity():
    with Clock() as c:
        hyp = sample_surface(quadric_oracle(standard_form(2, 1), 1.0), [[-3.0, 3.0]] * 3, 2000, seed=0)
        tor = sample_surface(torus_oracle(), [[-3.0, 3.0], [-3.0, 3.0], [-1.0, 1.0]], 2000, seed=0)
        ok = radial_projection_injectivity(hyp)
        bad = radial_projection_injectivity(tor)
    assert ok.passed
    assert not bad.passed
    assert c.seconds < 20
