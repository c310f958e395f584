"""
Empirical SRB statistics from Lebesgue-random starts: Lyapunov exponents,
invariant density, correlations, large deviations and the CLT.

All estimators are sample-parallel. Each kernel returns per-chunk arrays or
sums that merge by concatenation or addition, so results do not depend on
the worker count.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse, stats

from utils.fitting import l1_distance, nonincreasing_within, stretched_exp_fit, wilson_interval
from utils.parallel import DEFAULT_CHUNK, concat, map_chunks, noise_block, sample_rng, sample_rngs

from .errors import PreconditionError
from .skew import SkewSystem, dithered_orbit, tangent_orbit

logger = logging.getLogger(__name__)

OBSERVABLES_VERSION = "1"

# Holder observables h(theta, x); the set is versioned so reports stay comparable
OBSERVABLES: dict[str, Callable] = {
    "x": lambda theta, x: x,
    "theta": lambda theta, x: theta,
    "x_squared": lambda theta, x: x * x,
    "cos_theta": lambda theta, x: np.cos(2.0 * np.pi * theta),
    "tent_x": lambda theta, x: np.maximum(0.0, 1.0 - np.abs(x) / 0.5),
    "constant": lambda theta, x: np.ones_like(np.asarray(x, dtype=float)),
}

CORRELATION_THRESHOLD = 0.05
CORRELATION_LAG = 50


def observable(name: str) -> Callable:
    try:
        return OBSERVABLES[name]
    except KeyError as e:
        raise PreconditionError(f"unknown observable {name!r}; choose from {sorted(OBSERVABLES)}") from e


def _starts(sys: SkewSystem, rngs):
    lo, hi = sys.trap
    theta = np.array([sys.base.sample(g) for g in rngs])
    x = np.array([lo + (hi - lo) * g.random() for g in rngs])
    return theta, x


# -- Lyapunov exponents --------------------------------------------------------


@dataclass(frozen=True)
class ExponentSummary:
    n: int
    base: np.ndarray
    fiber: np.ndarray
    generic: np.ndarray
    resampled: int
    threshold: float

    @property
    def samples(self) -> int:
        return int(self.fiber.size)

    @property
    def fraction_positive(self) -> float:
        return float(np.mean(self.fiber > self.threshold))

    def quantiles(self, which: str = "fiber", q=(0.01, 0.5, 0.99)) -> np.ndarray:
        return np.quantile(getattr(self, which), q)

    @property
    def additivity_gap(self) -> float:
        """|generic - max(base, fiber)| averaged over samples."""
        return float(np.mean(np.abs(self.generic - np.maximum(self.base, self.fiber))))


def _lyapunov_kernel(indices, sys: SkewSystem, seed: int, n: int, offset: int):
    rngs = sample_rngs(seed, "lyapunov", indices + offset)
    theta, x = _starts(sys, rngs)
    out = tangent_orbit(sys, theta, x, noise_block(rngs, n))
    return {
        "base": out["base"] / n,
        "fiber": out["fiber"] / n,
        "generic": out["generic"] / n,
        "degenerate": out["degenerate"],
    }


def lyapunov_mc(
    sys: SkewSystem,
    n: int,
    samples: int,
    seed: int = 0,
    threshold: float = 0.05,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    progress: bool = False,
    max_attempts: int = 3,
) -> ExponentSummary:
    """Finite-time base, fiber (v = d/dx) and generic-vector exponents at Lebesgue-random points."""
    if n < 1:
        raise PreconditionError("lyapunov_mc needs n >= 1")
    results = map_chunks(
        _lyapunov_kernel, samples, sys, seed, n, 0,
        workers=workers, chunk_size=chunk_size, progress=progress, desc="lyapunov",
    )
    merged = {key: concat(results, key) for key in ("base", "fiber", "generic", "degenerate")}
    resampled = 0
    for attempt in range(1, max_attempts + 1):
        bad = np.flatnonzero(merged["degenerate"])
        if bad.size == 0:
            break
        resampled += bad.size
        logger.warning("resampling %d degenerate exponent sample(s)", bad.size)
        redo = _lyapunov_kernel(bad, sys, seed, n, attempt * samples)
        for key in merged:
            merged[key][bad] = redo[key]
    keep = ~merged["degenerate"]
    return ExponentSummary(
        n=n,
        base=merged["base"][keep],
        fiber=merged["fiber"][keep],
        generic=merged["generic"][keep],
        resampled=resampled,
        threshold=threshold,
    )


# -- invariant density ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityHistogram:
    theta_edges: np.ndarray
    x_edges: np.ndarray
    counts: np.ndarray
    band: float = 0.0
    nonconvergent: bool = False

    @property
    def mass(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total > 0 else self.counts.astype(float)

    @property
    def x_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    @property
    def theta_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)


def _density_kernel(indices, sys: SkewSystem, seed: int, stream: str, burn_in: int, n: int, theta_edges, x_edges):
    rngs = sample_rngs(seed, stream, indices)
    theta, x = _starts(sys, rngs)
    noise = noise_block(rngs, burn_in + n)
    thetas, xs = dithered_orbit(sys, theta, x, noise)
    counts = np.zeros((len(theta_edges) - 1, len(x_edges) - 1))
    for column in range(len(rngs)):
        hist, _, _ = np.histogram2d(thetas[burn_in:, column], xs[burn_in:, column], bins=(theta_edges, x_edges))
        counts += hist
    return {"counts": counts}


def invariant_density(
    sys: SkewSystem,
    burn_in: int,
    n: int,
    bins: tuple[int, int] = (64, 200),
    samples: int = 1000,
    seed: int = 0,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    progress: bool = False,
    tv_floor: float = 0.05,
) -> DensityHistogram:
    """Birkhoff histogram over (0,1] x I0 pooled from two independent sample streams.

    ``band`` is the total-variation gap between the two streams' histograms;
    a gap above ``tv_floor`` marks the estimate ``nonconvergent``.
    """
    if n <= 0:
        raise PreconditionError("an empty histogram (n=0) is not a density estimate")
    if burn_in < 0:
        raise PreconditionError("burn_in must be non-negative")
    lo, hi = sys.trap
    theta_edges = np.linspace(sys.base.partition.lower, sys.base.partition.upper, bins[0] + 1)
    x_edges = np.linspace(lo, hi, bins[1] + 1)
    halves = []
    for stream, count in (("density", samples - samples // 2), ("density_replica", samples // 2)):
        results = map_chunks(
            _density_kernel, count, sys, seed, stream, burn_in, n, theta_edges, x_edges,
            workers=workers, chunk_size=chunk_size, progress=progress, desc=stream,
        )
        halves.append(sum((r["counts"] for r in results), np.zeros((bins[0], bins[1]))))
    first, second = halves
    band = 0.5 * l1_distance(first / first.sum(), second / second.sum()) if second.sum() > 0 else 0.0
    nonconvergent = band > tv_floor
    if nonconvergent:
        logger.warning("density streams disagree: TV gap %.3g above %.3g", band, tv_floor)
    return DensityHistogram(theta_edges, x_edges, first + second, band, nonconvergent)


def chebyshev_bin_masses(edges: np.ndarray) -> np.ndarray:
    """Bin masses of the density 1/(pi sqrt(4 - x^2)) on [-2, 2]."""
    cdf = 0.5 + np.arcsin(np.clip(edges / 2.0, -1.0, 1.0)) / np.pi
    return np.diff(cdf)


def lebesgue_bin_masses(edges: np.ndarray) -> np.ndarray:
    widths = np.diff(edges)
    return widths / widths.sum()


@dataclass(frozen=True)
class TransferCheck:
    distance: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.distance <= self.tolerance


def transfer_matrix(sys: SkewSystem, hist: DensityHistogram, points_per_bin: int, seed: int) -> sparse.csr_matrix:
    """Ulam matrix P[i, j] = fraction of bin i mapped into bin j by one exact step."""
    nt, nx = hist.counts.shape
    rng = sample_rng(seed, "ulam", 0)
    cells = np.repeat(np.arange(nt * nx), points_per_bin)
    ti, xi = np.divmod(cells, nx)
    te, xe = hist.theta_edges, hist.x_edges
    theta = te[ti] + (te[ti + 1] - te[ti]) * (1.0 - rng.random(cells.size))
    x = xe[xi] + (xe[xi + 1] - xe[xi]) * rng.random(cells.size)
    theta1, x1 = sys.step(theta, x)
    tj = np.clip(np.searchsorted(te, theta1, side="left") - 1, 0, nt - 1)
    xj = np.clip(np.searchsorted(xe, x1, side="right") - 1, 0, nx - 1)
    weights = np.full(cells.size, 1.0 / points_per_bin)
    return sparse.coo_matrix((weights, (cells, tj * nx + xj)), shape=(nt * nx, nt * nx)).tocsr()


def transfer_consistency(
    sys: SkewSystem, hist: DensityHistogram, points_per_bin: int = 16, seed: int = 0, floor: float = 0.05
) -> TransferCheck:
    """TV distance between the histogram and its one-step Ulam push."""
    p = transfer_matrix(sys, hist, points_per_bin, seed)
    mass = hist.mass.ravel()
    pushed = p.T @ mass
    return TransferCheck(0.5 * l1_distance(mass, pushed), max(2.0 * hist.band, floor))


# -- correlations ---------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationTable:
    lags: np.ndarray
    covariance: np.ndarray
    correlation: np.ndarray
    fit_c: float
    fit_tau: float
    noise_floor: float

    def crossing_lag(self, threshold: float = CORRELATION_THRESHOLD) -> int | None:
        """Smallest lag from which |corr| stays below ``threshold``."""
        above = np.flatnonzero(np.abs(self.correlation) >= threshold)
        if above.size == 0:
            return int(self.lags[0])
        last = above[-1]
        return int(self.lags[last + 1]) if last + 1 < self.lags.size else None

    def decays_by(self, lag: int = CORRELATION_LAG, threshold: float = CORRELATION_THRESHOLD) -> bool:
        tail = np.abs(self.correlation[self.lags >= lag])
        return bool(np.all(tail < threshold))


def _correlation_kernel(indices, sys: SkewSystem, seed: int, burn_in: int, n: int, max_lag: int, h1: str, h2: str):
    rngs = sample_rngs(seed, "correlations", indices)
    theta, x = _starts(sys, rngs)
    thetas, xs = dithered_orbit(sys, theta, x, noise_block(rngs, burn_in + n))
    a = observable(h1)(thetas[burn_in:], xs[burn_in:])
    b = observable(h2)(thetas[burn_in:], xs[burn_in:])
    lags = np.arange(max_lag + 1)
    s12 = np.array([np.sum(a[: n - k] * b[k:]) for k in lags])
    s1 = np.array([np.sum(a[: n - k]) for k in lags])
    s2 = np.array([np.sum(b[k:]) for k in lags])
    count = np.array([(n - k) * a.shape[1] for k in lags], dtype=float)
    return {
        "s12": s12[None], "s1": s1[None], "s2": s2[None], "count": count[None],
        "aa": np.array([np.sum(a * a)]), "bb": np.array([np.sum(b * b)]),
        "a": np.array([np.sum(a)]), "b": np.array([np.sum(b)]),
    }


def correlation_decay(
    sys: SkewSystem,
    h1: str = "x",
    h2: str = "x",
    max_lag: int = 100,
    n: int = 2000,
    samples: int = 1000,
    seed: int = 0,
    burn_in: int = 1000,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> CorrelationTable:
    """Pooled stationary correlations of (h1, h2) with a diagnostic C exp(-tau sqrt(lag)) fit."""
    if max_lag >= n:
        raise PreconditionError("max_lag must be shorter than the orbit length")
    results = map_chunks(
        _correlation_kernel, samples, sys, seed, burn_in, n, max_lag, h1, h2, workers=workers, chunk_size=chunk_size
    )
    total = {key: np.sum([r[key] for r in results], axis=0) for key in results[0]}
    count = total["count"][0]
    covariance = total["s12"][0] / count - (total["s1"][0] / count) * (total["s2"][0] / count)
    points = n * samples
    var1 = total["aa"][0] / points - (total["a"][0] / points) ** 2
    var2 = total["bb"][0] / points - (total["b"][0] / points) ** 2
    scale = np.sqrt(max(var1, 0.0) * max(var2, 0.0))
    lags = np.arange(max_lag + 1)
    if scale <= 1e-14:
        correlation = np.zeros_like(covariance)
        covariance = np.zeros_like(covariance)
    else:
        correlation = covariance / scale
    floor = 3.0 / np.sqrt(points)
    fit_c, fit_tau = stretched_exp_fit(lags, correlation, floor)
    return CorrelationTable(lags, covariance, correlation, fit_c, fit_tau, floor)


def mixing_check(table: CorrelationTable, start_lag: int = 5) -> bool:
    """False iff |corr| grows monotonically past ``start_lag`` by more than the noise floor."""
    tail = np.abs(table.correlation[table.lags >= start_lag])
    if tail.size < 2:
        return True
    monotone_growth = np.all(np.diff(tail) >= 0.0) and tail[-1] > tail[0] + table.noise_floor
    return not bool(monotone_growth)


# -- large deviations and CLT -----------------------------------------------------


def _birkhoff_kernel(indices, sys: SkewSystem, seed: int, stream: str, burn_in: int, checkpoints, h: str):
    rngs = sample_rngs(seed, stream, indices)
    theta, x = _starts(sys, rngs)
    horizon = int(checkpoints[-1])
    thetas, xs = dithered_orbit(sys, theta, x, noise_block(rngs, burn_in + horizon))
    values = observable(h)(thetas[burn_in:], xs[burn_in:])
    prefix = np.cumsum(values, axis=0)
    return {"sums": prefix[np.asarray(checkpoints) - 1].T}


@dataclass(frozen=True)
class DeviationTable:
    n_grid: tuple[int, ...]
    delta: float
    mean: float
    tail: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    censored: np.ndarray

    @property
    def strictly_decreasing(self) -> bool:
        """Strict decrease until the tail first hits zero; zero afterwards."""
        live = ~self.censored
        if not live.any():
            return True
        last = np.flatnonzero(live)[-1]
        head = self.tail[: last + 1]
        return bool(np.all(np.diff(head) < 0) and np.all(live[: last + 1]) and np.all(self.censored[last + 1 :]))

    @property
    def nonincreasing(self) -> bool:
        return nonincreasing_within(self.lower, self.upper)


def large_deviations(
    sys: SkewSystem,
    h: str = "x",
    delta: float | None = None,
    delta_std: float = 0.1,
    n_grid=(100, 1000, 10_000),
    samples: int = 1000,
    seed: int = 0,
    burn_in: int = 1000,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> DeviationTable:
    """P(|S_n/n - mean| > delta) per n; zero rows carry the Wilson upper bound."""
    grid = np.asarray(sorted(n_grid), dtype=np.int64)
    if grid[0] < 1:
        raise PreconditionError("Birkhoff sums need n >= 1")
    checkpoints = np.unique(np.concatenate([[1], grid]))
    results = map_chunks(
        _birkhoff_kernel, samples, sys, seed, "ldp", burn_in, checkpoints, h, workers=workers, chunk_size=chunk_size
    )
    sums = np.concatenate([r["sums"] for r in results], axis=0)
    means = sums / checkpoints[None, :]
    mean = float(means[:, -1].mean())
    if delta is None:
        delta = delta_std * float(np.std(means[:, 0]))
    if delta <= 0.0:
        raise PreconditionError("delta must be positive (constant observable?)")
    columns = np.searchsorted(checkpoints, grid)
    hits = (np.abs(means[:, columns] - mean) > delta).sum(axis=0)
    bands = np.array([wilson_interval(int(k), samples) for k in hits])
    return DeviationTable(
        n_grid=tuple(int(n) for n in grid),
        delta=float(delta),
        mean=mean,
        tail=hits / samples,
        lower=bands[:, 0],
        upper=bands[:, 1],
        censored=hits == 0,
    )


@dataclass(frozen=True)
class CltResult:
    n: int
    samples: int
    ks: float
    pvalue: float
    mean: float
    sigma: float
    degenerate: bool


def clt_check(
    sys: SkewSystem,
    h: str = "x",
    n: int = 10_000,
    samples: int = 1000,
    seed: int = 0,
    burn_in: int = 1000,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> CltResult:
    """Kolmogorov-Smirnov distance of studentized Birkhoff sums from N(0, 1)."""
    checkpoints = np.array([n])
    results = map_chunks(
        _birkhoff_kernel, samples, sys, seed, "clt", burn_in, checkpoints, h, workers=workers, chunk_size=chunk_size
    )
    sums = np.concatenate([r["sums"] for r in results], axis=0)[:, 0]
    mean = float(sums.mean() / n)
    centered = (sums - n * mean) / np.sqrt(n)
    sigma = float(centered.std(ddof=1)) if samples > 1 else 0.0
    if sigma <= 1e-12:
        logger.warning("observable %r has zero Birkhoff variance; CLT check is degenerate", h)
        return CltResult(n, samples, float("nan"), float("nan"), mean, sigma, True)
    test = stats.kstest(centered / sigma, "norm")
    return CltResult(n, samples, float(test.statistic), float(test.pvalue), mean, sigma, False)
