import numpy as np
import pytest

from dynamics.curves import constant_curve, random_admissible
from dynamics.errors import PreconditionError
from dynamics.recurrence import (
    ETA_MAX,
    ReturnTimeEstimate,
    classify_returns,
    critical_order_check,
    critical_window,
    deep_return_tail,
    deep_segment_check,
    displacement_partitions,
    expansion_constants,
    expansion_time_tails,
    fit_return_ladder,
    heavy_depth_tail,
    m_of_alpha,
    n_of_alpha,
    return_depths,
    summarize_returns,
)
from dynamics.skew import VianaParams, build_system


def test_critical_window_arithmetic():
    assert critical_window(1e-4, 0) == pytest.approx((-0.01, 0.01))
    assert critical_window(1e-4, 3)[1] == pytest.approx(4.9787e-4, rel=1e-4)
    assert critical_window(1e-2, 2)[1] == pytest.approx(1.3534e-2, rel=1e-4)
    with pytest.raises(PreconditionError):
        critical_window(1e-2, -1)


def test_m_of_alpha():
    assert m_of_alpha(1e-4) == 2
    assert m_of_alpha(1e-2) == 1
    assert m_of_alpha(1.0 / 32.0) == 1
    assert m_of_alpha(0.1) == 0
    with pytest.raises(PreconditionError):
        m_of_alpha(0.0)


def test_return_depth_of_window_point():
    alpha = 1e-2
    depths = return_depths([np.sqrt(alpha) * np.exp(-2.5), 1.0, 0.0], alpha)
    assert depths[0] == 2
    assert depths[1] == -1
    assert depths[2] > 100


def test_orbit_outside_window_has_no_returns():
    summary = summarize_returns(np.full(100, 1.0), 1e-2, 100)
    assert summary.records == []
    assert summary.heavy_sum == 0
    assert summary.m == 10


def test_classify_returns(reference_system):
    summary = classify_returns(reference_system, 0.3, 0.5, 200)
    assert all(rec.depth >= 0 for rec in summary.records)
    assert all((rec.kind == "deep") == (rec.depth >= summary.m) for rec in summary.records)
    with pytest.raises(PreconditionError):
        classify_returns(reference_system, 0.3, 0.5, 0)


def test_n_of_alpha_rejects_zero_alpha(chebyshev_system):
    with pytest.raises(PreconditionError):
        n_of_alpha(chebyshev_system, samples=8)


def test_n_of_alpha_reference(reference_system):
    estimate = n_of_alpha(reference_system, samples=64, seed=7, cap=500)
    assert estimate.n_hat >= 2
    assert not estimate.lower_bound


def test_fit_return_ladder():
    estimates = [
        ReturnTimeEstimate(1e-3, 5, False, 0.1, 10),
        ReturnTimeEstimate(1e-2, 3, False, 0.1, 10),
        ReturnTimeEstimate(1e-4, 7, False, 0.1, 10),
    ]
    fit = fit_return_ladder(estimates)
    assert fit.alphas == (1e-2, 1e-3, 1e-4)
    assert fit.n_hats == (3, 5, 7)
    assert fit.monotone
    assert fit.k0 == pytest.approx(min(3 / np.log(100), 5 / np.log(1000), 7 / np.log(1e4)))
    assert fit.k1 == pytest.approx(max(3 / np.log(100), 5 / np.log(1000), 7 / np.log(1e4)))


def test_eta_range_is_asserted_on_small_rungs_only():
    coarse = ReturnTimeEstimate(1e-2, 3, False, 0.355, 1000)
    assert not coarse.eta_in_range
    fit = fit_return_ladder([coarse, ReturnTimeEstimate(1e-3, 7, False, 0.204, 1000), ReturnTimeEstimate(1e-4, 11, False, 0.141, 1000)])
    assert fit.etas == (0.355, 0.204, 0.141)
    assert fit.etas_in_range
    assert not fit_return_ladder([coarse, ReturnTimeEstimate(1e-3, 7, False, 0.4, 1000)]).etas_in_range
    assert not fit_return_ladder([ReturnTimeEstimate(1e-4, 7, False, 0.0, 1000)]).etas_in_range
    assert fit_return_ladder([coarse]).etas_in_range


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [1e-3, 1e-4])
def test_fitted_eta_in_range(uniform_base, a0, alpha):
    estimate = n_of_alpha(build_system(VianaParams(a0, alpha, uniform_base)), samples=1000, seed=7)
    assert not estimate.lower_bound
    assert 0.0 < estimate.eta <= ETA_MAX
    assert estimate.eta_in_range


def test_deep_return_tail_shape(reference_system):
    tail = deep_return_tail(reference_system, r_grid=range(2, 9))
    assert tail.iterate == 1
    assert all(row.measure > 0.0 for row in tail.rows)
    assert tail.rows[0].measure == pytest.approx(1.0)
    assert tail.decays
    assert tail.nonincreasing
    assert all(row.measure <= row.bound for row in tail.rows)


def test_deep_segments_stay_in_outer_window(reference_system, a0):
    curve = constant_curve(np.sqrt(a0), reference_system.alpha, 20_000)
    hits, escapes = deep_segment_check(reference_system, curve, 1, 2, np.random.default_rng(0))
    assert hits > 0
    assert escapes == 0
    with pytest.raises(PreconditionError):
        deep_segment_check(reference_system, curve, 1, 0)


def test_displacement_partitions(reference_system):
    part = displacement_partitions(reference_system, constant_curve(0.0, reference_system.alpha, 20_000))
    assert part.holds
    assert part.separation >= reference_system.alpha / 100.0
    for seed in range(10):
        curve = random_admissible(reference_system.alpha, reference_system.trap, np.random.default_rng(seed), 20_000)
        assert displacement_partitions(reference_system, curve).holds


def test_heavy_depth_tail_table(reference_system):
    table = heavy_depth_tail(reference_system, n_grid=(100, 1000), samples=64, seed=7)
    assert table.n_grid == (100, 1000)
    assert np.all((table.fraction >= 0.0) & (table.fraction <= 1.0))
    assert np.all((table.lower <= table.fraction) & (table.fraction <= table.upper))


def test_expansion_tails_chebyshev(chebyshev_system):
    tails = expansion_time_tails(chebyshev_system, 0.5, 0.1, n_grid=(0, 10, 100), samples=64, seed=7)
    assert tails.tail_e[0] == 1.0
    assert tails.tail_r[0] == 1.0
    assert np.all(np.diff(tails.tail_e) <= 0.0)
    assert np.all(np.diff(tails.tail_r) <= 0.0)


def test_halving_eps_never_shrinks_recurrence_tail(reference_system):
    options = dict(n_grid=(0, 10, 100), samples=64, seed=3)
    wide = expansion_time_tails(reference_system, 0.1, 0.2, **options)
    narrow = expansion_time_tails(reference_system, 0.1, 0.1, **options)
    assert np.all(narrow.tail_r >= wide.tail_r)
    with pytest.raises(PreconditionError):
        expansion_time_tails(reference_system, 0.1, 0.0, **options)


def test_expansion_constants_are_finite(reference_system):
    constants = expansion_constants(reference_system, samples=32, seed=7, horizon=50)
    assert constants.n_hat >= 2
    assert constants.sigma1 > 0.0
    assert np.isfinite(constants.c2) and constants.c2 > 0.0
    assert np.isfinite(constants.sigma2) and constants.sigma2 > 0.0


def test_critical_order_fit(reference_system):
    fit = critical_order_check(reference_system, np.random.default_rng(0), pairs=2000)
    assert fit.b >= 1.0
    assert fit.beta >= 0.0
    assert fit.pairs > 0
