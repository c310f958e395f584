import numpy as np
import pytest

from dynamics.errors import BracketError, PreconditionError, TrappingError
from dynamics.skew import (
    DITHER,
    FiberBump,
    TangentState,
    VianaParams,
    build_system,
    certify_misiurewicz,
    check_trapping,
    count_escapes,
    find_misiurewicz,
    misiurewicz_equation,
    with_trap,
)


def test_misiurewicz_parameter():
    a0 = find_misiurewicz("crit_to_period2", tol=1e-10)
    assert abs(a0 - 1.8393) < 1e-3
    cert = certify_misiurewicz(a0)
    assert cert.multiplier == pytest.approx(4.0 * (1.0 - a0))
    assert abs(cert.multiplier) > 1.0
    assert cert.residual < 1e-8


def test_critical_orbit_lands_on_two_cycle():
    a0 = find_misiurewicz("crit_to_period2", tol=1e-12)

    def h(x):
        return a0 - x * x

    landing = h(h(h(0.0)))
    assert h(h(landing)) == pytest.approx(landing, abs=1e-9)
    assert abs(h(landing) - landing) > 1.0
    fixed = (-1.0 + np.sqrt(1.0 + 4.0 * a0)) / 2.0
    assert abs(landing - fixed) > 0.5
    assert abs(4.0 * landing * h(landing)) > 1.0


def test_misiurewicz_bracket_signs():
    assert misiurewicz_equation(1.80) > 0.0
    assert misiurewicz_equation(1.85) < 0.0


def test_periodic_critical_orbit_is_rejected():
    # h(0) = 1, h^2(0) = 0
    with pytest.raises(PreconditionError):
        certify_misiurewicz(1.0)


def test_misiurewicz_argument_checks():
    with pytest.raises(PreconditionError):
        find_misiurewicz("crit_to_period3")
    with pytest.raises(PreconditionError):
        find_misiurewicz(tol=1e-6)
    assert issubclass(BracketError, Exception)


def test_params_validation(uniform_base):
    with pytest.raises(PreconditionError):
        VianaParams(2.5, 0.01, uniform_base)
    with pytest.raises(PreconditionError):
        VianaParams(1.8, -0.01, uniform_base)


def test_chebyshev_trap_is_exact(chebyshev_system):
    assert chebyshev_system.trap == pytest.approx((-2.0, 2.0))
    report = check_trapping(chebyshev_system)
    assert report.passed
    assert report.slack == 0.0


def test_reference_trap_is_tight(reference_system, a0):
    alpha = reference_system.alpha
    lo, hi = reference_system.trap
    assert hi == pytest.approx(a0 + alpha, abs=1e-12)
    assert lo == pytest.approx(a0 - a0**2 - (1.0 + 2.0 * a0) * alpha - alpha**2, abs=1e-12)
    assert check_trapping(reference_system).passed


def test_large_alpha_fails_trapping(uniform_base, a0):
    with pytest.raises(TrappingError) as info:
        build_system(VianaParams(a0, 0.5, uniform_base))
    assert info.value.slack > 0.0


def test_shrunk_trap_fails(reference_system):
    lo, hi = reference_system.trap
    report = check_trapping(with_trap(reference_system, (0.5 * lo, 0.5 * hi)))
    assert not report.passed
    assert report.slack > 0.0


def test_step_and_fixed_point(chebyshev_system):
    theta, x = chebyshev_system.step(1.0 / 32.0, 0.0)
    assert theta == pytest.approx(0.5)
    assert x == pytest.approx(2.0)
    orbit = chebyshev_system.orbit(0.3, 1.0, 10)
    assert orbit.shape == (10, 2)
    assert np.all(orbit[:, 1] == 1.0)


def test_orbit_matches_direct_evaluation(reference_system, a0):
    rng = np.random.default_rng(0)
    theta0, x0 = 1.0 - rng.random(), reference_system.trap[0] + rng.random() * np.diff(reference_system.trap)[0]
    orbit = reference_system.orbit(theta0, x0, 10)
    theta, x = theta0, x0
    for k in range(10):
        theta, x = reference_system.base.eval(theta), a0 + 0.01 * np.sin(2.0 * np.pi * theta) - x * x
        assert orbit[k] == pytest.approx((theta, x), abs=1e-12)


def test_orbit_raises_on_escape(chebyshev_system):
    narrow = with_trap(chebyshev_system, (-1.0, 1.0))
    with pytest.raises(TrappingError):
        narrow.orbit(0.3, 0.0, 3)


def test_push_tangent_fiber_direction(chebyshev_system):
    ts = chebyshev_system.push_tangent(TangentState(0.3, 1.0, 0.0, 1.0))
    assert ts.log_norm == pytest.approx(np.log(2.0))
    assert abs(ts.v_x) == pytest.approx(1.0)
    assert ts.v_theta == 0.0


def test_push_tangent_base_direction(chebyshev_system):
    ts = chebyshev_system.push_tangent(TangentState(0.3, 0.5, 1.0, 0.0))
    assert ts.log_norm == pytest.approx(np.log(16.0))


def test_degenerate_tangent_is_flagged(chebyshev_system):
    ts = chebyshev_system.push_tangent(TangentState(0.3, 0.0, 0.0, 1.0))
    assert ts.degenerate


def test_fiber_ignores_theta_when_alpha_is_zero(uniform_base, a0):
    flat = build_system(VianaParams(a0, 0.0, uniform_base))
    left = flat.orbit(0.3, 0.5, 40)
    right = flat.orbit(0.71, 0.5, 40)
    np.testing.assert_array_equal(left[:, 1], right[:, 1])
    assert not np.array_equal(left[:, 0], right[:, 0])


def test_jacobian_determinant_along_orbit(reference_system):
    theta, x = 0.37, 0.41
    points = np.vstack([[theta, x], reference_system.orbit(theta, x, 30)[:-1]])
    for t, y in points:
        jac = reference_system.jacobian(t, y)
        partial = reference_system.fiber_partials(t, y)
        assert jac[0, 1] == 0.0
        assert float(partial["x"]) == -2.0 * y
        expected = np.log(abs(float(reference_system.base.derivative(t, 1)))) + np.log(abs(-2.0 * y))
        assert np.log(abs(np.linalg.det(jac))) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_vertical_direction_grows_by_fiber_derivative(reference_system):
    theta, x = 0.37, 0.41
    points = np.vstack([[theta, x], reference_system.orbit(theta, x, 30)[:-1]])
    ts = TangentState(theta, x, 0.0, 1.0)
    for _ in range(len(points)):
        ts = reference_system.push_tangent(ts)
        assert ts.v_theta == 0.0
    assert ts.log_norm == pytest.approx(np.log(np.abs(2.0 * points[:, 1])).sum(), rel=1e-12)


def test_mc_step_stays_in_trap(reference_system):
    rng = np.random.default_rng(1)
    theta = 1.0 - rng.random(500)
    x = np.full(500, reference_system.trap[1])
    for _ in range(50):
        theta, x = reference_system.mc_step(theta, x, rng.random((500, 2)))
    lo, hi = reference_system.trap
    assert np.all((x >= lo) & (x <= hi))
    assert np.all((theta > 0.0) & (theta <= 1.0))
    assert DITHER == 2.0**-40


def test_random_points_never_escape(reference_system):
    assert count_escapes(reference_system, np.random.default_rng(2), points=200, steps=200) == 0


def test_fiber_bump():
    bump = FiberBump(center=0.5, width=0.1, amplitude=0.2)
    assert bump.derivative(0.5) == pytest.approx(0.2)
    assert bump.derivative(0.7) == 0.0
    assert bump.c3_size() >= 0.2
    narrow = FiberBump(center=0.5, width=0.05, amplitude=0.2)
    assert narrow.c3_size() > bump.c3_size()
