import numpy as np
import pytest

from dynamics.errors import PreconditionError
from dynamics.statistics import (
    CorrelationTable,
    chebyshev_bin_masses,
    clt_check,
    correlation_decay,
    invariant_density,
    large_deviations,
    lebesgue_bin_masses,
    lyapunov_mc,
    mixing_check,
    observable,
    transfer_consistency,
    transfer_matrix,
)
from experiments.statistics import ks_tolerance
from utils.fitting import l1_distance

LOG2 = np.log(2.0)


@pytest.fixture(scope="module")
def chebyshev_density(chebyshev_system):
    return invariant_density(chebyshev_system, burn_in=100, n=2000, bins=(16, 40), samples=64, seed=7)


def test_unknown_observable():
    with pytest.raises(PreconditionError):
        observable("y")


def test_chebyshev_exponent_is_log2(chebyshev_system):
    summary = lyapunov_mc(chebyshev_system, n=2000, samples=64, seed=7)
    assert float(summary.fiber.mean()) == pytest.approx(LOG2, abs=0.03)
    assert summary.fraction_positive == 1.0
    assert summary.base == pytest.approx(np.full(summary.samples, np.log(16.0)), abs=1e-9)


@pytest.mark.slow
def test_reference_exponents_positive(reference_system):
    summary = lyapunov_mc(reference_system, n=2000, samples=64, seed=7)
    assert summary.fraction_positive >= 0.9
    assert summary.additivity_gap <= 1e-2
    q = summary.quantiles("fiber")
    assert q[0] <= q[1] <= q[2]


def test_lyapunov_is_worker_independent(chebyshev_system):
    one = lyapunov_mc(chebyshev_system, n=200, samples=40, seed=3, workers=1, chunk_size=16)
    two = lyapunov_mc(chebyshev_system, n=200, samples=40, seed=3, workers=2, chunk_size=16)
    assert np.array_equal(one.fiber, two.fiber)
    assert np.array_equal(one.generic, two.generic)


def test_lyapunov_rejects_empty_orbit(chebyshev_system):
    with pytest.raises(PreconditionError):
        lyapunov_mc(chebyshev_system, n=0, samples=4)


def test_oracle_masses():
    edges = np.linspace(-2.0, 2.0, 41)
    assert chebyshev_bin_masses(edges).sum() == pytest.approx(1.0)
    assert chebyshev_bin_masses(edges)[0] > chebyshev_bin_masses(edges)[20]
    assert lebesgue_bin_masses(np.linspace(0.0, 1.0, 5)) == pytest.approx([0.25] * 4)


def test_chebyshev_density_marginals(chebyshev_density):
    x_gap = l1_distance(chebyshev_density.x_marginal, chebyshev_bin_masses(chebyshev_density.x_edges))
    theta_gap = l1_distance(chebyshev_density.theta_marginal, lebesgue_bin_masses(chebyshev_density.theta_edges))
    assert x_gap <= 0.05
    assert theta_gap <= 0.02
    assert chebyshev_density.counts.sum() == 64 * 2000


def test_empty_histogram_rejected(chebyshev_system):
    with pytest.raises(PreconditionError):
        invariant_density(chebyshev_system, burn_in=0, n=0, samples=4)


def test_transfer_matrix_is_stochastic(chebyshev_system, chebyshev_density):
    p = transfer_matrix(chebyshev_system, chebyshev_density, points_per_bin=4, seed=0)
    assert np.asarray(p.sum(axis=1)).ravel() == pytest.approx(1.0)
    check = transfer_consistency(chebyshev_system, chebyshev_density, points_per_bin=4, seed=0)
    assert check.tolerance >= 0.05
    assert 0.0 <= check.distance <= 1.0


def test_constant_observable_has_no_correlation(reference_system):
    table = correlation_decay(reference_system, "constant", "constant", max_lag=10, n=200, samples=16, burn_in=50)
    assert np.all(table.correlation == 0.0)
    assert np.all(table.covariance == 0.0)


def test_coordinate_variance_is_positive(reference_system):
    table = correlation_decay(reference_system, "x", "x", max_lag=20, n=500, samples=32, seed=7, burn_in=100)
    assert table.covariance[0] > 0.0
    assert table.correlation[0] == pytest.approx(1.0, abs=0.05)
    with pytest.raises(PreconditionError):
        correlation_decay(reference_system, max_lag=100, n=100, samples=4)


def _table(correlation):
    lags = np.arange(len(correlation))
    corr = np.asarray(correlation, dtype=float)
    return CorrelationTable(lags, corr, corr, 1.0, 0.1, 0.01)


def test_mixing_and_crossing_on_synthetic_tables():
    decaying = _table([1.0, 0.5, 0.2, 0.1, 0.04, 0.03, 0.02, 0.01])
    assert mixing_check(decaying)
    assert decaying.crossing_lag() == 4
    growing = _table([1.0, 0.5, 0.2, 0.1, 0.04, 0.1, 0.2, 0.3])
    assert not mixing_check(growing)
    assert growing.crossing_lag() is None


def test_oversized_delta_gives_zero_tail(reference_system):
    table = large_deviations(reference_system, "x", delta=10.0, n_grid=(1, 10, 100), samples=16, burn_in=50)
    assert np.all(table.tail == 0.0)
    assert np.all(table.censored)
    assert table.strictly_decreasing


def test_constant_observable_rejects_relative_delta(reference_system):
    with pytest.raises(PreconditionError):
        large_deviations(reference_system, "constant", n_grid=(1, 10), samples=8, burn_in=10)


@pytest.mark.slow
def test_deviation_tail_decreases(reference_system):
    table = large_deviations(reference_system, "x", n_grid=(10, 100, 1000), samples=256, seed=7, burn_in=100)
    assert table.strictly_decreasing
    assert table.nonincreasing


def test_constant_observable_is_degenerate(reference_system):
    result = clt_check(reference_system, "constant", n=100, samples=16, burn_in=10)
    assert result.degenerate
    assert np.isnan(result.ks)


@pytest.mark.slow
def test_clt_reference_and_base_control(reference_system):
    for h in ("x", "theta"):
        result = clt_check(reference_system, h, n=1000, samples=256, seed=7, burn_in=100)
        assert not result.degenerate
        assert result.ks <= ks_tolerance(256)


def test_ks_tolerance_floor():
    assert ks_tolerance(10_000) == 0.05
    assert ks_tolerance(100) == pytest.approx(0.136)


def test_density_band_compares_two_streams(chebyshev_system):
    options = dict(burn_in=50, n=400, bins=(8, 20), samples=24, seed=5)
    loose = invariant_density(chebyshev_system, tv_floor=1.0, **options)
    strict = invariant_density(chebyshev_system, tv_floor=0.0, **options)
    assert 0.0 < loose.band < 1.0
    assert strict.band == loose.band
    assert not loose.nonconvergent
    assert strict.nonconvergent
    assert loose.counts.sum() == 24 * 400


def test_single_sample_density_has_no_band(chebyshev_system):
    hist = invariant_density(chebyshev_system, burn_in=10, n=300, bins=(4, 10), samples=1, seed=5, tv_floor=0.0)
    assert hist.band == 0.0
    assert not hist.nonconvergent
    assert hist.counts.sum() == 300


def test_density_is_worker_independent(chebyshev_system):
    options = dict(burn_in=20, n=200, bins=(8, 20), samples=40, seed=3, chunk_size=8)
    one = invariant_density(chebyshev_system, workers=1, **options)
    two = invariant_density(chebyshev_system, workers=2, **options)
    assert np.array_equal(one.counts, two.counts)
    assert one.band == two.band
