import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdreflect.errors import DomainOfDefinitionError, ParameterError, PreconditionError, RegionError
from tdreflect.geometry import (
    ConeCertificate,
    ConstantOblique,
    DomainSpec,
    InwardNormalSmoothed,
    MovingDisk,
    MovingInterval,
    MovingScaledPolygon,
    Power,
    RotatedNormal,
    Sampler,
    Sine,
    Spline,
    distance,
    domain_from_config,
    field_from_config,
    gamma,
    gamma_outward,
    mollified_distance,
    motion_from_config,
    unit_square,
    verify_assumptions,
)
from tdreflect.geometry.verify import exterior_cone_holds, holder_fit

coord = st.floats(-3, 3, allow_nan=False)


@pytest.fixture(scope="module")
def sliding():
    return DomainSpec(1.0, MovingInterval(Spline.linear(0.0, 1.0), Spline.linear(2.0, 1.0)))


@pytest.fixture(scope="module")
def shrinking_disk():
    return DomainSpec(2.0, MovingDisk(0.0, 0.0, Spline.linear(1.0, -0.25)))


@pytest.fixture(scope="module")
def square():
    return DomainSpec(1.0, MovingScaledPolygon(0.5, 0.5, 1.0, unit_square()))


# -- motions -------------------------------------------------------------------


def test_spline_linear_value_and_derivative():
    m = Spline.linear(1.0, -0.25)
    assert m(2.0) == pytest.approx(0.5, abs=1e-15)
    assert m.derivative(0.3) == pytest.approx(-0.25, abs=1e-15)


def test_reversed_motion_runs_backwards():
    m = Sine(0.3, 2.0, offset=1.0)
    r = m.reversed(1.5)
    t = np.linspace(0, 1.5, 7)
    np.testing.assert_allclose(r(t), m(1.5 - t), atol=1e-14)
    np.testing.assert_allclose(r.derivative(t), -m.derivative(1.5 - t), atol=1e-14)


def test_power_motion_is_flat_before_origin():
    m = Power(0.3, 0.0, 0.5)
    assert m(0.25) == pytest.approx(0.15)
    assert m(-1.0) == 0.0


def test_motion_from_config_variants():
    assert motion_from_config(2.0)(0.7) == pytest.approx(2.0)
    assert motion_from_config({"kind": "linear", "intercept": 1, "slope": 2})(0.5) == pytest.approx(2.0)
    assert motion_from_config({"kind": "sine", "amplitude": 1})(math.pi / 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        motion_from_config({"kind": "bogus"})


@given(st.floats(0, 1), st.floats(0, 1))
def test_spline_displacement_bound_covers_sampled_motion(t0, h):
    m = Spline.interpolate([0, 0.3, 0.7, 1.0], [0, 0.4, -0.2, 0.1])
    grid = np.array([0.0, t0 * 0.5, t0 * 0.5 + h * 0.5 + 1e-3])
    bnd = m.displacement_bounds(grid)
    for k in range(2):
        s = np.linspace(grid[k], grid[k + 1], 200)
        assert np.max(np.abs(m(s) - m(grid[k]))) <= bnd[k] * (1 + 1e-9) + 1e-14


# -- distance ------------------------------------------------------------------


def test_interval_distance_inside(sliding):
    assert distance(sliding, 0.5, 1.7) == 0.0


def test_interval_distance_to_left_endpoint(sliding):
    assert distance(sliding, 0.5, 0.2) == pytest.approx(0.3, abs=1e-15)


def test_disk_distance_outside(shrinking_disk):
    assert distance(shrinking_disk, 1.0, np.array([1.5, 0.0])) == pytest.approx(0.75, abs=1e-15)


def test_time_outside_horizon_is_rejected(sliding):
    with pytest.raises(DomainOfDefinitionError):
        distance(sliding, 1.5, 0.0)
    with pytest.raises(DomainOfDefinitionError):
        distance(sliding, -0.1, 0.0)


def test_degenerate_sections_are_rejected():
    with pytest.raises(ParameterError):
        DomainSpec(1.0, MovingDisk(0.0, 0.0, Spline.linear(0.5, -1.0)))


def test_polygon_distance_closed_forms(square):
    assert distance(square, 0.0, np.array([0.5, 0.5])) == 0.0
    assert distance(square, 0.0, np.array([1.5, 0.5])) == pytest.approx(0.5)
    assert distance(square, 0.0, np.array([2.0, 2.0])) == pytest.approx(math.sqrt(2))
    assert square.signed_distance(0.0, np.array([0.5, 0.5])) == pytest.approx(-0.5)


@pytest.mark.parametrize("name", ["sliding", "shrinking_disk", "square"])
def test_distance_is_one_lipschitz(name, request):
    dom = request.getfixturevalue(name)
    rng = np.random.default_rng(1)
    n = dom.dim
    t = rng.uniform(0, dom.horizon, 10_000)
    x = rng.uniform(-2, 3, (10_000, n))
    y = x + rng.normal(scale=0.3, size=x.shape)
    dx = np.abs(dom.distance(t, x) - dom.distance(t, y))
    gap = np.linalg.norm(x - y, axis=1)
    assert np.max(dx - gap) <= 1e-12


@pytest.mark.parametrize("name", ["sliding", "shrinking_disk", "square"])
def test_distance_zero_exactly_on_closure(name, request):
    dom = request.getfixturevalue(name)
    rng = np.random.default_rng(2)
    for t in (0.0, 0.4 * dom.horizon, dom.horizon):
        inside = dom.shape.interior_points(t, 500, rng)
        assert np.all(dom.distance(t, inside) == 0.0)
        lo, hi = dom.shape.bounding_box(np.array([t]))
        far = hi + 0.5 + rng.uniform(0, 1, (100, dom.dim))
        assert np.all(dom.distance(t, far) > 0)


@given(st.floats(0, 2), coord, coord)
def test_disk_distance_matches_closed_form(t, x, y):
    dom = DomainSpec(2.0, MovingDisk(0.0, 0.0, Spline.linear(1.0, -0.25)))
    r = 1 - t / 4
    assert dom.distance(t, np.array([x, y])) == pytest.approx(max(math.hypot(x, y) - r, 0.0), abs=1e-12)


def test_reversed_domain(shrinking_disk):
    rev = shrinking_disk.reversed()
    x = np.array([0.9, 0.0])
    for s in (0.0, 0.5, 2.0):
        assert rev.signed_distance(s, x) == pytest.approx(shrinking_disk.signed_distance(2.0 - s, x), abs=1e-14)


def test_domain_from_config():
    d = domain_from_config({"kind": "interval", "horizon": 1, "a": 0.0, "b": {"kind": "linear", "intercept": 1, "slope": 1}})
    assert d.distance(0.5, 2.0) == pytest.approx(0.5)
    with pytest.raises(ParameterError):
        domain_from_config({"kind": "torus", "horizon": 1})


# -- fields --------------------------------------------------------------------


def test_constant_field_everywhere(square):
    f = ConstantOblique((0.0, 1.0))
    np.testing.assert_array_equal(gamma(f, square, 0.3, np.array([7.0, -3.0])), [0.0, 1.0])


def test_disk_inward_normal(shrinking_disk):
    g = gamma(InwardNormalSmoothed(1e-4), shrinking_disk, 1.0, np.array([0.75, 0.0]))
    np.testing.assert_allclose(g, [-1.0, 0.0], atol=1e-8)


def test_rotated_normal_turns_by_angle(shrinking_disk):
    a = math.pi / 6
    g = gamma(RotatedNormal(a, 1e-4), shrinking_disk, 1.0, np.array([0.75, 0.0]))
    np.testing.assert_allclose(g, [-math.cos(a), math.sin(a)], atol=1e-8)


def test_outward_twin_is_negation(shrinking_disk):
    x = np.array([0.0, 0.75])
    f = RotatedNormal(0.2)
    np.testing.assert_array_equal(gamma_outward(f, shrinking_disk, 1.0, x), -gamma(f, shrinking_disk, 1.0, x))


def test_normal_field_outside_tube_is_a_region_error(shrinking_disk):
    with pytest.raises(RegionError):
        gamma(InwardNormalSmoothed(1e-4), shrinking_disk, 0.0, np.array([0.2, 0.0]))


def test_field_parameter_checks():
    with pytest.raises(ParameterError):
        InwardNormalSmoothed(0.0)
    with pytest.raises(ParameterError):
        RotatedNormal(2.0)
    with pytest.raises(ParameterError):
        ConstantOblique((0.0, 0.0))
    assert field_from_config({"kind": "rotated", "angle": 0.1}).angle == 0.1


def _tube_points(dom, field, n, seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, dom.horizon, n)
    xb = np.concatenate([dom.shape.boundary_points(ti, 1, rng) for ti in t])
    _, grad = dom.signed_distance(t, xb, with_gradient=True)
    x = xb + rng.uniform(-2, 2, (n, 1)) * field.beta * grad
    return t, x


@pytest.mark.parametrize("field", [InwardNormalSmoothed(0.05), RotatedNormal(0.4, 0.05)])
@pytest.mark.parametrize("kind", ["disk", "polygon"])
def test_gamma_unit_norm_and_derivatives_match_differences(field, kind):
    if kind == "disk":
        dom = DomainSpec(1.0, MovingDisk(Sine(0.2, 1.0), 0.0, Spline.linear(1.0, -0.3)))
    else:
        dom = DomainSpec(1.0, MovingScaledPolygon(Sine(0.1, 2.0, offset=0.5), 0.5, Spline.linear(1.0, -0.2), unit_square()))
    t, x = _tube_points(dom, field, 400, 5)
    blk = gamma(field, dom, t, x, derivatives=True)
    assert np.max(np.abs(np.linalg.norm(blk.value, axis=1) - 1.0)) <= 1e-12
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (gamma(field, dom, t, x + e) - gamma(field, dom, t, x - e)) / (2 * h)
        scale = np.max(np.abs(blk.dx[:, :, j])) + 1e-12
        assert np.max(np.abs(fd - blk.dx[:, :, j])) / scale <= 1e-6
    ht = 1e-6
    tt = np.clip(t, ht, dom.horizon - ht)
    fd_t = (gamma(field, dom, tt + ht, x) - gamma(field, dom, tt - ht, x)) / (2 * ht)
    blk_t = gamma(field, dom, tt, x, derivatives=True)
    assert np.max(np.abs(fd_t - blk_t.dt)) / (np.max(np.abs(blk_t.dt)) + 1e-12) <= 1e-6


# -- mollified distance ----------------------------------------------------------


def test_mollified_distance_zero_inside(shrinking_disk):
    m = mollified_distance(shrinking_disk, 0.0, np.array([0.1, 0.1]), 0.05)
    assert m.d_beta == 0.0 and m.v_beta == 0.0
    np.testing.assert_array_equal(m.grad_v_beta, [0.0, 0.0])


def test_mollified_distance_static_interval():
    dom = DomainSpec(1.0, MovingInterval(0.0, 2.0))
    assert mollified_distance(dom, 0.0, -0.5, 0.01).d_beta == pytest.approx(0.5, abs=1e-4)


def test_mollified_distance_requires_positive_width(shrinking_disk):
    with pytest.raises(ParameterError):
        mollified_distance(shrinking_disk, 0.0, np.array([1.0, 0.0]), 0.0)


@given(st.floats(1e-3, 0.2), st.floats(0, 2), coord, coord)
def test_mollified_distance_within_width_of_distance(beta, t, x, y):
    dom = DomainSpec(2.0, MovingDisk(0.0, 0.0, Spline.linear(1.0, -0.25)))
    p = np.array([x, y])
    m = mollified_distance(dom, t, p, beta)
    assert abs(m.d_beta - dom.distance(t, p)) <= beta + 1e-12


# -- assumption verification -----------------------------------------------------


def test_disk_with_normal_field_passes_every_check(shrinking_disk):
    rep = verify_assumptions(shrinking_disk, InwardNormalSmoothed(), ConeCertificate(0.9, 0.5, 0.2, 1.0))
    assert rep.row("exterior_cone").worst_violation == 0.0
    assert rep.passed, str(rep)


def test_sqrt_wall_has_half_holder_exponent():
    dom = DomainSpec(1.0, MovingInterval(Power(0.3, 0.0, 0.5), 2.0))
    fit = holder_fit(dom)
    assert 0.45 <= fit["exponent"] <= 0.55


def test_square_with_upward_field_fails_where_the_field_is_not_inward(square):
    # The constant upward field points into the square only on the bottom side.
    f = ConstantOblique((0.0, 1.0))
    bottom = np.array([[0.3, 0.0], [0.7, 0.0]])
    top = np.array([[0.3, 1.0], [0.0, 1.0], [1.0, 1.0]])
    side = np.array([[0.0, 0.5], [1.0, 0.5]])
    for rho in (0.1, 0.3, 0.9):
        assert exterior_cone_holds(square, f, rho, np.zeros(2), bottom).all()
        assert not exterior_cone_holds(square, f, rho, np.zeros(3), top).any()
        assert not exterior_cone_holds(square, f, rho, np.zeros(2), side).any()


def test_square_with_normal_field_passes_small_cone(square):
    rep = verify_assumptions(square, InwardNormalSmoothed(0.01), ConeCertificate(0.3, 0.9, 0.05, 1.0))
    assert rep.row("exterior_cone").passed


def test_sampler_budget_precondition(shrinking_disk):
    with pytest.raises(PreconditionError):
        verify_assumptions(shrinking_disk, InwardNormalSmoothed(), ConeCertificate(0.5, 0.5, 0.1, 1.0), Sampler(n_boundary=10))


def test_certificate_parameter_ranges():
    with pytest.raises(ParameterError):
        ConeCertificate(1.0, 0.5, 0.1, 1.0)
    with pytest.raises(ParameterError):
        ConeCertificate(0.5, 0.5, -0.1, 1.0)
