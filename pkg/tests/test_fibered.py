import numpy as np
import pytest

from dynamics.errors import NonHyperbolicError, PreconditionError, RetuneError, TrappingError
from dynamics.fibered import (
    FiberedSystem,
    base_fixed_point,
    build_trap,
    coexistence_demo,
    critical_capture,
    fiber_exponent,
    find_attractors,
    srb_by_cycle,
    srb_pushforward,
    trap_escapes,
    tuned_bump,
)
from dynamics.skew import VianaParams

Y_STAR = (np.sqrt(3.0) - 1.0) / 2.0


@pytest.fixture(scope="module")
def decoupled(uniform_base):
    return FiberedSystem(uniform_base, c=0.5, epsilon=0.0)


@pytest.fixture(scope="module")
def coupled(uniform_base):
    return FiberedSystem(uniform_base, c=0.5, epsilon=0.01)


def test_fixed_point_attractor():
    (attractor,) = find_attractors(0.5)
    assert attractor.period == 1
    assert attractor.cycle[0] == pytest.approx(Y_STAR, abs=1e-12)
    assert attractor.multiplier == pytest.approx(-2.0 * Y_STAR, abs=1e-12)


def test_chebyshev_fiber_is_not_hyperbolic():
    with pytest.raises(NonHyperbolicError):
        find_attractors(2.0)


def test_period_three_window():
    (attractor,) = find_attractors(1.7548)
    assert attractor.period == 3
    assert abs(attractor.multiplier) < 1.0


def test_period_cap():
    with pytest.raises(PreconditionError):
        find_attractors(0.5, max_period=65)


def test_coupling_size(coupled, uniform_base):
    assert coupled.coupling_c3() == pytest.approx(0.01, abs=1e-12)
    bump = FiberedSystem(uniform_base, c=0.5, epsilon=0.01, coupling_kind="bump")
    assert bump.coupling_c3() == pytest.approx(0.01, rel=1e-2)
    with pytest.raises(PreconditionError):
        FiberedSystem(uniform_base, c=0.5, epsilon=0.01, coupling_kind="cosine")
    with pytest.raises(PreconditionError):
        FiberedSystem(uniform_base, c=0.5, epsilon=-0.01)


def test_trap_certification(decoupled, coupled, uniform_base):
    plain = build_trap(decoupled)
    assert plain.n == 1
    assert plain.lam == pytest.approx(0.74, abs=0.01)
    assert plain.margin > 0.0
    wide = build_trap(coupled)
    assert plain.lam < wide.lam < 1.0
    assert wide.contains(Y_STAR)
    with pytest.raises(TrappingError):
        build_trap(FiberedSystem(uniform_base, c=0.5, epsilon=0.5))


def test_trapped_points_stay_trapped(coupled):
    trap = build_trap(coupled)
    assert trap_escapes(coupled, trap, np.random.default_rng(0), points=100, blocks=50) == 0
    assert critical_capture(coupled, trap, radius=0.05).steps is not None


def test_decoupled_exponent_is_multiplier_log(decoupled):
    trap = build_trap(decoupled)
    result = fiber_exponent(decoupled, trap, 0.5, Y_STAR, 1000)
    assert result.applicable and result.trapped
    assert result.value == pytest.approx(np.log(2.0 * Y_STAR), abs=1e-6)
    assert result.value == pytest.approx(-0.3124, abs=0.02)


def test_start_that_escapes_is_not_applicable(decoupled):
    trap = build_trap(decoupled)
    result = fiber_exponent(decoupled, trap, 0.5, 10.0, 100, capture_cap=20)
    assert not result.applicable
    assert np.isnan(result.value)


def test_pushforward_averages(decoupled):
    trap = build_trap(decoupled)
    summary = srb_pushforward(decoupled, trap, Y_STAR, n=2000, base_samples=16, seed=7)
    assert summary.average_y == pytest.approx(Y_STAR, abs=1e-3)
    assert summary.pairing_gap <= 1e-6
    assert summary.fiber_exponent == pytest.approx(-0.3124, abs=0.02)
    assert summary.base_exponent == pytest.approx(np.log(16.0))
    with pytest.raises(PreconditionError):
        srb_pushforward(decoupled, trap, 1.5, n=10, base_samples=2)


def test_coupled_pushforward_contracts(coupled):
    trap = build_trap(coupled)
    attractors = find_attractors(0.5)
    (summary,) = srb_by_cycle(coupled, trap, attractors, n=2000, base_samples=16, seed=7)
    assert summary.pairing_gap <= 1e-6
    assert summary.worst_exponent <= np.log(trap.lam) + 0.05


def test_fixed_point_of_branch(uniform_base):
    assert base_fixed_point(uniform_base, 8) == pytest.approx(8.0 / 15.0)


def test_tuned_bump_hits_target(uniform_base, a0):
    params = VianaParams(a0, 0.01, uniform_base)
    p_star, bump = tuned_bump(params, 8, 1.7548, 1.0 / 64.0)
    assert bump.center == p_star
    assert a0 + 0.01 * np.sin(2.0 * np.pi * p_star) + bump.amplitude == pytest.approx(1.7548)
    with pytest.raises(PreconditionError):
        tuned_bump(params, 8, 1.7548, 0.1)


def test_target_outside_window_is_rejected(uniform_base, a0):
    with pytest.raises(RetuneError):
        coexistence_demo(VianaParams(a0, 0.01, uniform_base), target=1.80)


@pytest.mark.slow
def test_coexistence_of_exponent_signs(uniform_base, a0):
    report = coexistence_demo(VianaParams(a0, 0.01, uniform_base), n=500, samples=32, seed=7, central_steps=500)
    assert report.fixed_point == pytest.approx(8.0 / 15.0)
    assert report.attractor.period == 3
    assert report.central_exponent <= -0.1
    assert report.fraction_positive >= 0.85
    assert report.bump_c3 > 0.0
