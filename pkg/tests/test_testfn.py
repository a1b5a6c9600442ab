import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdreflect.errors import ParameterError, PreconditionError
from tdreflect.geometry import ConstantOblique, DomainSpec, InwardNormalSmoothed, MovingDisk, MovingInterval, RotatedNormal, Spline, gamma
from tdreflect.testfn import (
    SampleBudget,
    TestFunctionParams,
    build_alpha,
    eval_alpha,
    eval_g,
    eval_h,
    eval_w_eps,
    params_from_config,
    profile,
    verify_test_properties,
)

P = TestFunctionParams(theta=0.5)
NORMAL = InwardNormalSmoothed()
# defined everywhere, unlike the smoothed normal which lives in a thin tube
TILTED = ConstantOblique((0.6, 0.8))
UP = ConstantOblique((1.0,))
INTERVAL = DomainSpec(1.0, MovingInterval(Spline.linear(0.0, 0.2), Spline.constant(1.0)))
DISK = DomainSpec(1.0, MovingDisk(0.0, 0.0, Spline.linear(1.0, -0.3)))

finite = st.floats(-10, 10, allow_nan=False)


def unit(a):
    return np.array([math.cos(a), math.sin(a)])


# -- parameters ------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [dict(theta=0.0), dict(theta=1.0), dict(theta=0.5, c_g=0.0), dict(theta=0.5, c_g=2.0, K_const=1.0), dict(theta=0.5, blend_width=0.6), dict(theta=0.5, nu_knots=(1.2, 2.0))],
)
def test_bad_parameters(kw):
    with pytest.raises(ParameterError):
        TestFunctionParams(**kw)


def test_defaults_and_config():
    assert P.K_const == 1.0 and P.blend_width == 0.25
    q = params_from_config({"theta": 0.4, "c_g": 2.0, "K_const": 3.0})
    assert (q.theta, q.c_g, q.K_const) == (0.4, 2.0, 3.0) and math.isnan(q.C)


def test_chi_is_profile_minimum():
    u = np.linspace(-1, 1, 400001)
    assert P.chi == pytest.approx(float(profile(P, u)[0].min()), rel=1e-8)
    # the blend starts below the band-edge value before rising to K
    assert P.chi < 0.75


# -- g ----------------------------------------------------------------------------


def test_g_vanishes_at_zero_momentum():
    ge = eval_g(P, unit(0.3), np.zeros(2))
    assert ge.value == 0.0
    assert np.all(ge.grad_p == 0.0)


def test_g_band_value():
    # p orthogonal to xi: u = 0 so g = c_g |p|^2
    assert eval_g(P, np.array([1.0, 0.0]), np.array([0.0, 2.0])).value == pytest.approx(4.0, rel=1e-15)
    q = TestFunctionParams(theta=0.5, c_g=3.0, K_const=5.0)
    p = np.array([0.4, math.sqrt(1 - 0.16)])  # unit p with u = 0.4
    assert eval_g(q, np.array([1.0, 0.0]), p).value == pytest.approx(3.0 * (1 - 0.16), rel=1e-14)


def test_g_outer_constant():
    q = TestFunctionParams(theta=0.5, K_const=2.0)
    assert eval_g(q, np.array([1.0, 0.0]), np.array([3.0, 0.0])).value == pytest.approx(18.0)


def test_g_rejects_non_unit_xi():
    with pytest.raises(PreconditionError):
        eval_g(P, np.array([2.0, 0.0]), np.array([1.0, 0.0]))


@given(st.floats(0, 2 * math.pi), st.floats(-0.49, 0.49), st.floats(0.01, 50))
def test_g_band_identity(a, u, r):
    xi = unit(a)
    perp = np.array([-xi[1], xi[0]])
    p = r * (u * xi + math.sqrt(1 - u * u) * perp)
    ge = eval_g(P, xi, p)
    assert abs(ge.grad_p @ xi) <= 1e-12 * (1 + r * r)


@given(st.floats(0, 2 * math.pi), finite, finite, st.floats(0.1, 10))
def test_g_degree_two_homogeneous(a, p1, p2, s):
    xi, p = unit(a), np.array([p1, p2])
    assert eval_g(P, xi, s * p).value == pytest.approx(s * s * eval_g(P, xi, p).value, rel=1e-12, abs=1e-12)


@given(st.floats(0, 2 * math.pi), finite, finite)
def test_g_quadratic_lower_bound_and_symmetry(a, p1, p2):
    xi, p = unit(a), np.array([p1, p2])
    v = eval_g(P, xi, p).value
    assert v >= P.chi * (p @ p) - 1e-12
    assert eval_g(P, xi, -p).value == pytest.approx(v, rel=1e-14, abs=1e-300)


@given(st.floats(-1, 1))
def test_profile_is_even_and_bounded(u):
    f, _, _ = profile(P, u)
    assert f == profile(P, -u)[0]
    assert P.chi <= f <= P.K_const


# -- h and w ------------------------------------------------------------------------


def test_h_is_one_at_zero_momentum():
    assert eval_h(P, TILTED, DISK, 0.3, np.array([0.2, 0.1]), np.zeros(2)).value == 1.0


def test_h_clamp_is_flat_below_and_identity_above():
    x = np.array([0.2, 0.1])
    small = eval_h(P, TILTED, DISK, 0.3, x, np.array([0.3, 0.3]))  # g < 1/2
    assert small.value == 1.0 and np.all(small.grad_p == 0.0)
    big = np.array([1.5, 1.5])
    h = eval_h(P, TILTED, DISK, 0.3, x, big)
    g = eval_g(P, gamma(TILTED, DISK, 0.3, x), big).value
    assert g >= 2.0
    assert h.value == g


def test_w_diagonal_value():
    x = np.array([0.1, -0.2])
    for eps in (1.0, 0.1, 1e-3):
        assert eval_w_eps(P, TILTED, DISK, 0.4, x, x, eps).value == pytest.approx(eps, rel=1e-15)


def test_w_requires_positive_eps():
    x = np.array([0.1, -0.2])
    with pytest.raises(ParameterError):
        eval_w_eps(P, TILTED, DISK, 0.4, x, x, 0.0)
    with pytest.raises(ParameterError):
        eval_w_eps(P, TILTED, DISK, 0.4, x, x, -1.0)


@given(st.floats(0, 1), st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(1e-3, 1))
def test_w_quadratic_lower_bound_interval(t, x, y, eps):
    lo = float(INTERVAL.shape.a(t))
    x, y = lo + x * (1 - lo), lo + y * (1 - lo)
    w = eval_w_eps(P, UP, INTERVAL, t, [x], [y], eps).value
    assert w >= P.chi * (x - y) ** 2 / eps - 1e-12


# -- alpha ---------------------------------------------------------------------------


def test_alpha_interval_boundary_derivative_and_support():
    spec = build_alpha(INTERVAL, NORMAL, delta=0.1)
    for t in (0.0, 0.5, 1.0):
        for xb in (float(INTERVAL.shape.a(t)), 1.0):
            A = eval_alpha(spec, t, [xb])
            g = gamma(NORMAL, INTERVAL, t, [xb])
            assert A.grad_x @ g >= 1.0 - 1e-9
            assert A.value >= 0.0
    mid = 0.5 * (float(INTERVAL.shape.a(0.5)) + 1.0)
    assert eval_alpha(spec, 0.5, [mid]).value == 0.0


def test_alpha_disk_rotated_field():
    f = RotatedNormal(0.4)
    spec = build_alpha(DISK, f, delta=0.1)
    ang = np.linspace(0, 2 * math.pi, 50, endpoint=False)
    for t in (0.0, 1.0):
        r = float(DISK.shape.r(t))
        xb = r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        A = eval_alpha(spec, np.full(50, t), xb)
        ip = np.einsum("bi,bi->b", A.grad_x, gamma(f, DISK, np.full(50, t), xb))
        assert ip.min() >= 1.0 - 1e-9
    assert eval_alpha(spec, 0.5, np.zeros(2)).value == 0.0


# -- property suite ---------------------------------------------------------------------


def test_suite_needs_ten_thousand_points():
    with pytest.raises(PreconditionError):
        verify_test_properties(P, NORMAL, INTERVAL, SampleBudget(n_points=100))


@pytest.mark.parametrize("domain,field", [(INTERVAL, NORMAL), (DISK, RotatedNormal(0.3))], ids=["interval", "disk_rotated"])
def test_suite_passes(domain, field):
    rep = verify_test_properties(P, field, domain)
    bad = [r.check_name for r in rep.rows if not r.passed]
    assert not bad, str(rep)
    assert rep.row("certified_constants").fitted_constants["chi"] > 0


def test_suite_flags_too_small_constant():
    rep = verify_test_properties(P.with_C(1e-3), NORMAL, INTERVAL)
    assert not rep.passed
    assert not rep.row("g_p_bounds").passed
