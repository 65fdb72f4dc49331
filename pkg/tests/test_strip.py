"""Strip construction: ODE solutions, the perturbation and certificates."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from ccbody.errors import DivisionNearZero, NoKernelVector, OutOfRange, PreconditionError
from ccbody.strip import (
    StripModel,
    SampledFunction,
    bump,
    construct_rho,
    default_g,
    degenerate_strip,
    nonconstancy_certificate,
    nonproportionality_residual,
    quotient_slope,
    rescale_for_cone,
    solve_even_odd,
    solve_u,
    strip_cc_certificate,
    strip_field,
    strip_model_checks,
    strip_support,
    wronskian,
    zero_function,
)
from ccbody.strip import _second_difference4


def ivp_oracle(rhs, y0, z):
    """Independent high-order oracle (DOP853 at tight tolerance) from z = 0."""
    sol = solve_ivp(rhs, (0.0, z), y0, method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1]


def g_rhs(z, y):
    return [y[1], float(bump(np.array([z]))[0]) * y[0]]


def test_default_g_closed_form():
    g = default_g()
    assert g(0.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert g(1.0) == 0.0 and g(2.0) == 0.0 and g(-2.0) == 0.0
    assert np.array_equal(g.values, g.values[::-1])


def test_sampled_function_range_and_derivative():
    g = default_g()
    with pytest.raises(OutOfRange):
        g(5.0)
    fd = (g.values[2:] - g.values[:-2]) / (2 * g.step)
    # O(h^2) consistency with a third-derivative bound of 200
    assert np.max(np.abs(fd - g.derivative[1:-1])) < 200 * g.step**2 / 6


def test_zero_g_gives_affine_solutions():
    f1, f2 = solve_even_odd(zero_function())
    assert np.allclose(f1.values, 1.0, atol=1e-14)
    assert np.allclose(f2.values, f2.grid, atol=1e-12)


def test_solutions_against_ivp_oracle():
    f1, f2 = solve_even_odd(default_g())
    for z in (0.5, 0.9, 2.0, 3.5):
        e = ivp_oracle(g_rhs, [1.0, 0.0], z)
        o = ivp_oracle(g_rhs, [0.0, 1.0], z)
        assert f1(z) == pytest.approx(e[0], abs=1e-9)
        assert f2(z) == pytest.approx(o[0], abs=1e-9)
        assert f1(-z) == pytest.approx(e[0], abs=1e-9)
        assert f2(-z) == pytest.approx(-o[0], abs=1e-9)


def test_solutions_affine_beyond_support():
    f1, f2 = solve_even_odd(default_g())
    sel = np.abs(f1.grid[1:-1]) > 1.0 + f1.step
    for f in (f1, f2):
        d2 = (f.values[2:] - 2 * f.values[1:-1] + f.values[:-2]) / f.step**2
        assert np.max(np.abs(d2[sel])) < 1e-8


def test_wronskian_constant():
    f1, f2 = solve_even_odd(default_g())
    w = wronskian(f1, f2)
    assert w[len(w) // 2] == pytest.approx(1.0, abs=1e-15)
    assert np.max(np.abs(w - 1.0)) < 1e-8


def test_even_odd_precondition():
    g = default_g()
    shifted = SampledFunction(g.z_min, g.z_max, np.roll(g.values, 40), np.roll(g.derivative, 40))
    with pytest.raises(PreconditionError):
        solve_even_odd(shifted)
    with pytest.raises(PreconditionError):
        solve_even_odd(default_g(), z_max=1.5)


def test_rescale_degenerate_direction():
    strip = degenerate_strip()
    f1, f2, s = rescale_for_cone(strip.f1, strip.f2)
    # f = (1, z): f1(2)^2 + f2(2)^2 = 5, so s = sqrt(0.25 / 5)
    assert s == pytest.approx(math.sqrt(0.05), rel=1e-14)
    assert f1(2.0) ** 2 + f2(2.0) ** 2 <= 0.25 + 1e-14


def test_rescale_noop_for_small_curves():
    strip = degenerate_strip()
    f1, f2, s = rescale_for_cone(strip.f1.scaled(0.1), strip.f2.scaled(0.1))
    assert s == 1.0


def test_rescale_post_check(strip_model):
    strip = strip_model[0]
    for z in (-2.0, 2.0):
        assert strip.f1(z) ** 2 + strip.f2(z) ** 2 < 1.0
    assert strip.f1.derivative[-1] ** 2 + strip.f2.derivative[-1] ** 2 <= 0.5 + 1e-12


def test_rho_properties(strip_model):
    strip, info = strip_model
    rho, g = strip.rho, strip.g
    assert np.array_equal(rho.values, rho.values[::-1])
    assert np.all(rho.values[np.abs(rho.grid) >= 0.5] == 0.0)
    inside = (np.abs(g.grid) < 0.5) & (g.values > 1e-12)
    assert np.max(np.abs(rho.values[inside] / g.values[inside])) == pytest.approx(0.5, rel=1e-12)
    assert nonproportionality_residual(rho, g) > 0.1
    assert info.residual < 1e-8 and info.kernel_dim >= 1


def test_rho_m6_kernel_and_reintegration():
    g = default_g()
    f1, f2 = solve_even_odd(g)
    f1, f2, _ = rescale_for_cone(f1, f2)
    info = construct_rho(g, f1, f2, m=6)
    u1, u2 = solve_u(info.rho, f1, f2)
    for u in (u1, u2):
        assert abs(u(0.75)) < 1e-9 and abs(u.slope(0.75)) < 1e-9


def test_rho_requires_basis_size():
    g = default_g()
    f1, f2 = solve_even_odd(g)
    with pytest.raises(PreconditionError):
        construct_rho(g, f1, f2, m=4)


def test_u_against_ivp_oracle(strip_model):
    strip = strip_model[0]
    rho, f1, f2 = strip.rho, strip.f1, strip.f2

    def rhs(z, y):
        return [y[1], float(rho(z)) * float(f1(z)), y[3], float(rho(z)) * float(f2(z))]

    sol = solve_ivp(rhs, (-0.5, 0.5), [0.0, 0.0, 0.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-15,
                    dense_output=True)
    for z in (-0.25, 0.0, 0.3, 0.5):
        y = sol.sol(z)
        assert strip.u1(z) == pytest.approx(y[0], abs=1e-9)
        assert strip.u2(z) == pytest.approx(y[2], abs=1e-9)


def test_zero_rho_gives_zero_u():
    strip = degenerate_strip()
    u1, u2 = solve_u(strip.rho, strip.f1, strip.f2)
    assert not np.any(u1.values) and not np.any(u2.values)


def test_model_checks_pass(strip_model):
    for cert in strip_model_checks(strip_model[0]):
        assert cert.passed, cert.name


def test_model_check_details(strip_model):
    checks = {c.name: c for c in strip_model_checks(strip_model[0])}
    assert checks["u_support"].details["tail"] < 1e-9
    assert checks["wronskian"].details["drift"] < 1e-8


def test_second_difference_identity(strip_model):
    # second derivative of psi +- phi equals (rho +- g) phi; the fourth-order
    # stencil keeps the truncation error of the oscillating perturbation small
    strip = strip_model[0]
    h = strip.f1.step
    for th in np.linspace(0, 2 * math.pi, 7):
        c, s = math.cos(th), math.sin(th)
        phi = strip.f1.values * c + strip.f2.values * s
        psi = strip.u1.values * c + strip.u2.values * s
        for sign in (1, -1):
            lhs = (psi + sign * phi)
            d2 = _second_difference4(lhs, h)
            rhs = (strip.rho.values + sign * strip.g.values)[2:-2] * phi[2:-2]
            assert np.max(np.abs(d2 - rhs)) < 1e-6 * max(1.0, np.max(np.abs(phi)))


def test_strip_cc_passes(strip_model):
    assert strip_cc_certificate(strip_model[0]).passed
    assert strip_cc_certificate(degenerate_strip()).passed


def test_strip_cc_fails_when_dominance_violated(strip_model):
    strip = strip_model[0]
    big = StripModel(strip.g, strip.g.scaled(2.0), strip.f1, strip.f2, strip.u1, strip.u2, strip.scale)
    cert = strip_cc_certificate(big)
    assert not cert.passed and cert.details["dominance_excess"] > 0


def test_strip_support_degenerate():
    strip = degenerate_strip()
    assert strip_support(strip, 0.0, 0.0) == pytest.approx(1.0)
    assert strip_support(strip, 1.0, math.pi / 2) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(z=st.floats(-3.9, 3.9), th=st.floats(0, 2 * math.pi))
def test_strip_rotation_symmetry_and_width(z, th):
    strip = _shared_strip()
    a = strip_support(strip, z, th)
    assert a == pytest.approx(strip_support(strip, -z, -th), abs=1e-9)
    assert a + strip_support(strip, z, th + math.pi) >= -1e-12


_CACHE = {}


def _shared_strip():
    if "s" not in _CACHE:
        from ccbody.strip import build_strip
        _CACHE["s"] = build_strip(default_g())[0]
    return _CACHE["s"]


def test_quotient_slope_degenerate_constant():
    q = quotient_slope(degenerate_strip())
    assert np.allclose(q.derivative, 1.0)
    assert not nonconstancy_certificate(degenerate_strip()).passed


def test_quotient_slope_default(strip_model):
    strip = strip_model[0]
    q = quotient_slope(strip)
    assert nonconstancy_certificate(strip).passed
    fd = (q.values[2:] - q.values[:-2]) / (2 * q.step)
    # central difference error is O(h^2 k''') with small constants here
    assert np.max(np.abs(fd - q.derivative[1:-1])) < 1e-6


def test_quotient_slope_division_guard():
    strip = degenerate_strip()
    zero = StripModel(strip.g, strip.rho, strip.f2, strip.f1, strip.u1, strip.u2)
    with pytest.raises(DivisionNearZero):
        quotient_slope(zero)


def test_model_json_round_trip(strip_model, tmp_path):
    strip = strip_model[0]
    back = StripModel.from_json(strip.to_json())
    assert np.array_equal(back.u1.values, strip.u1.values) and back.scale == strip.scale


def test_strip_field_matches_support(strip_model):
    strip = strip_model[0]
    fld = strip_field(strip, 4.0, 1 / 64, 32)
    i, j = 100, 7
    assert fld.values[i, j] == pytest.approx(strip_support(strip, fld.z[i], fld.theta[j]), abs=1e-14)
    with pytest.raises(OutOfRange):
        strip_field(degenerate_strip(4.0), 12.0)
