import numpy as np
import pytest

from dynamics.base_map import (
    c3_distance,
    check_markov,
    cylinder_length,
    distortion_band,
    distortion_ratio,
    expansion_floor,
    gibbs_check,
    lebesgue_log_derivative,
    make_base_map,
    renyi_constant,
    renyi_distortion_bound,
)
from dynamics.errors import PreconditionError, StructureError, TruncationError
from dynamics.skew import VianaParams, build_system


def test_uniform_eval(uniform_base):
    assert uniform_base.eval(0.3) == pytest.approx(0.8, abs=1e-12)
    assert uniform_base.eval(1.0) == pytest.approx(1.0, abs=1e-15)


def test_perturbed_eval_close_to_linear(perturbed_base):
    assert abs(perturbed_base.eval(0.3) - 0.8) <= 1e-3


def test_branch_index_left_open_right_closed(uniform_base):
    assert uniform_base.branch_index(0.3) == 4
    assert uniform_base.branch_index(1.0 / 16.0) == 0
    assert uniform_base.branch_index(1.0) == 15
    with pytest.raises(TruncationError):
        uniform_base.branch_index(0.0)


def test_branch_index_custom_partition():
    base = make_base_map("custom_breakpoints", breakpoints=[0.0, 0.5, 0.75, 1.0])
    assert base.branch_index(0.6) == 1
    assert base.d == pytest.approx(2.0)


def test_countable_truncation_rejects_residual():
    base = make_base_map("countable_geometric", branch_count=32)
    assert base.partition.residual_mass == pytest.approx((15.0 / 16.0) ** 32)
    with pytest.raises(TruncationError):
        base.branch_index(0.5 * base.partition.lower)


def test_bad_partition_is_rejected():
    with pytest.raises(StructureError):
        make_base_map("custom_breakpoints", breakpoints=[0.0, 0.6, 0.5, 1.0])


def test_uniform_cylinders(uniform_base):
    lo, hi = uniform_base.cylinder((0, 0))
    assert lo == pytest.approx(0.0, abs=1e-15)
    assert hi == pytest.approx(1.0 / 256.0, abs=1e-15)
    lo, hi = uniform_base.cylinder((15,))
    assert (lo, hi) == pytest.approx((15.0 / 16.0, 1.0), abs=1e-15)
    assert cylinder_length(uniform_base, (3, 9, 1, 12)) == pytest.approx(16.0**-4, rel=1e-9)


def test_empty_itinerary_is_rejected(uniform_base):
    with pytest.raises(PreconditionError):
        uniform_base.cylinder(())


def test_uniform_gibbs_and_distortion_are_one(uniform_base):
    lo, hi = uniform_base.cylinder((4, 7, 2))
    mid = 0.5 * (lo + hi)
    assert gibbs_check(uniform_base, (4, 7, 2), mid) == pytest.approx(1.0, abs=1e-10)
    lo, hi = uniform_base.cylinder((1, 2, 3, 4, 5))
    assert distortion_ratio(uniform_base, (1, 2, 3, 4, 5), lo + 0.1 * (hi - lo), hi) == pytest.approx(1.0, abs=1e-12)


def test_gibbs_rejects_point_outside_cylinder(uniform_base):
    with pytest.raises(PreconditionError):
        gibbs_check(uniform_base, (0,), 0.5)


def test_perturbed_ratios_inside_band(perturbed_base):
    band = distortion_band(perturbed_base.d, renyi_constant(perturbed_base))
    itinerary = (4, 7, 2)
    lo, hi = perturbed_base.cylinder(itinerary)
    ratio = gibbs_check(perturbed_base, itinerary, 0.5 * (lo + hi))
    assert 1.0 / band - 1e-9 <= ratio <= band + 1e-9
    rng = np.random.default_rng(0)
    itinerary = tuple(int(s) for s in rng.integers(0, 16, size=6))
    lo, hi = perturbed_base.cylinder(itinerary)
    t1, t2 = lo + (hi - lo) * (1.0 - rng.random(2))
    assert 1.0 / band - 1e-9 <= distortion_ratio(perturbed_base, itinerary, t1, t2) <= band + 1e-9
    assert distortion_ratio(perturbed_base, itinerary, t1, t1) == 1.0


def test_renyi_constants(uniform_base, perturbed_base):
    assert renyi_constant(uniform_base) == 0.0
    bound = renyi_distortion_bound(1e-3, 16.0, 0.0)
    assert bound == pytest.approx(3.9e-6, rel=0.01)
    assert renyi_constant(perturbed_base) <= bound


def test_quadratic_branch_renyi_matches_analytic():
    base = make_base_map("quadratic_branch", d=16, kappa=0.2)
    assert renyi_constant(base) == pytest.approx(base.renyi, rel=0.01)
    assert expansion_floor(base) >= base.d - 1e-9
    assert check_markov(base)


def test_renyi_bound_with_curved_reference():
    curved = make_base_map("quadratic_branch", d=16, kappa=0.1)
    bent = make_base_map("quadratic_branch", d=16, kappa=0.1, amplitude=1e-3)
    k, k_tilde = renyi_constant(curved), renyi_constant(bent)
    assert k == pytest.approx(0.24683, abs=1e-5)
    assert k_tilde == pytest.approx(0.24683, abs=1e-5)
    eps = c3_distance(curved, bent)
    assert eps == pytest.approx(1e-3, rel=1e-3)
    bound = renyi_distortion_bound(eps, curved.d, k)
    assert bound == pytest.approx(0.24733, abs=1e-5)
    assert k_tilde <= bound
    assert renyi_constant(bent) <= bent.renyi
    assert check_markov(bent)
    assert expansion_floor(bent) >= bent.d - 1e-9


def test_renyi_grid_floor(uniform_base):
    with pytest.raises(PreconditionError):
        renyi_constant(uniform_base, grid_size=10)


def test_markov_and_expansion(uniform_base, perturbed_base):
    assert check_markov(uniform_base)
    assert check_markov(perturbed_base)
    assert expansion_floor(uniform_base) == pytest.approx(16.0)


def test_log_derivative_integral(uniform_base):
    assert lebesgue_log_derivative(uniform_base) == pytest.approx(np.log(16.0), rel=1e-12)
    geometric = make_base_map("countable_geometric", branch_count=32)
    widths = geometric.partition.widths
    assert lebesgue_log_derivative(geometric) == pytest.approx(float(np.sum(widths * np.log(1.0 / widths))), rel=1e-9)


def test_c3_distance(uniform_base, perturbed_base, a0):
    assert c3_distance(uniform_base, uniform_base) == 0.0
    assert c3_distance(uniform_base, perturbed_base) == pytest.approx(1e-3, rel=1e-3)
    reference = build_system(VianaParams(a0, 1e-2, uniform_base))
    shifted = build_system(VianaParams(a0, 1e-2, uniform_base, shift=1e-4))
    assert c3_distance(reference, shifted) == pytest.approx(1e-4, rel=1e-6)


def test_c3_distance_needs_matching_branches(uniform_base):
    with pytest.raises(StructureError):
        c3_distance(uniform_base, make_base_map("uniform_linear", d=8))
