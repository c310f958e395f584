"""
Recurrence to the critical line x = 0.

Windows J(r) = [-sqrt(alpha) e^-r, sqrt(alpha) e^-r] are nested; an orbit
point at |x| <= sqrt(alpha) has return depth floor(log(sqrt(alpha)/|x|)).
Constants the theory only asserts to exist (N(alpha), eta, sigma_1, ...) are
fitted here from simulation and reported, never assumed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from utils.fitting import line_fit, log_tail_slope, nonincreasing_within, wilson_interval
from utils.parallel import DEFAULT_CHUNK, concat, map_chunks, noise_block, sample_rngs

from .curves import AdmissibleCurve, constant_curve, pushed_pieces, strip_constant
from .errors import PreconditionError
from .skew import SkewSystem, dithered_orbit

logger = logging.getLogger(__name__)

TINY = np.finfo(float).tiny
MIN_TAIL_SLOPE = -0.2
# fitted eta must land in (0, ETA_MAX] once alpha <= ETA_RUNG_ALPHA
ETA_MAX = 1.0 / 3.0
ETA_RUNG_ALPHA = 1e-3


def critical_window(alpha: float, r: float) -> tuple[float, float]:
    if r < 0:
        raise PreconditionError(f"window depth must be non-negative, got {r}")
    half = np.sqrt(alpha) * np.exp(-r)
    return float(-half), float(half)


def m_of_alpha(alpha: float) -> int:
    """Maximal M with 32^M alpha <= 1."""
    if not 0.0 < alpha < 1.0:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")
    m = int(np.floor(np.log(1.0 / alpha) / np.log(32.0)))
    while 32.0 ** (m + 1) * alpha <= 1.0:
        m += 1
    while m > 0 and 32.0**m * alpha > 1.0:
        m -= 1
    return m


def return_depths(x, alpha: float) -> np.ndarray:
    """floor(log(sqrt(alpha)/|x|)) inside J(0), -1 outside."""
    ax = np.maximum(np.abs(np.asarray(x, dtype=float)), TINY)
    depth = np.floor(np.log(np.sqrt(alpha) / ax))
    return np.where(ax <= np.sqrt(alpha), depth, -1).astype(np.int64)


def heavy_threshold(alpha: float, eta: float) -> float:
    return (0.5 - eta) * np.log(1.0 / alpha)


# -- N(alpha) -----------------------------------------------------------------


@dataclass(frozen=True)
class ReturnTimeEstimate:
    alpha: float
    n_hat: int
    lower_bound: bool
    eta: float
    samples: int

    @property
    def eta_in_range(self) -> bool:
        return 0.0 < self.eta <= ETA_MAX


def _first_return_kernel(indices, sys: SkewSystem, seed: int, cap: int):
    rngs = sample_rngs(seed, "recurrence", indices)
    root = np.sqrt(sys.alpha)
    theta = np.array([sys.base.sample(g) for g in rngs])
    x = np.array([(2.0 * g.random() - 1.0) * 2.0 * root for g in rngs])
    x0 = x.copy()
    noise = noise_block(rngs, cap)
    cum = np.zeros((cap, len(rngs)))
    total = np.zeros(len(rngs))
    first = cap + 1
    for j in range(cap):
        total = total + np.log(np.maximum(2.0 * np.abs(x), TINY))
        cum[j] = total
        theta, x = sys.mc_step(theta, x, noise[j])
        if np.any(np.abs(x) < root):
            first = j + 1
            break
    return {"first": np.array([first]), "cum": cum[: min(first, cap)], "x0": x0}


def n_of_alpha(
    sys: SkewSystem,
    samples: int = 1000,
    seed: int = 0,
    cap: int = 2000,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> ReturnTimeEstimate:
    """Shortest first return to J(0) over starts with |x| < 2 sqrt(alpha), plus the fitted eta."""
    alpha = sys.alpha
    if alpha <= 0.0:
        raise PreconditionError("n_of_alpha needs alpha > 0")
    results = map_chunks(_first_return_kernel, samples, sys, seed, cap, workers=workers, chunk_size=chunk_size)
    n_hat = int(concat(results, "first").min())
    lower_bound = n_hat > cap
    if lower_bound:
        logger.warning("no return to J(0) within %d steps at alpha=%.3g; N is a lower bound", cap, alpha)
        n_hat = cap
    gain = np.concatenate([r["cum"][n_hat - 1] for r in results]) - np.log(
        np.maximum(np.abs(concat(results, "x0")), TINY)
    )
    eta = float(np.max(1.0 - gain / np.log(1.0 / alpha)))
    return ReturnTimeEstimate(alpha, n_hat, lower_bound, eta, samples)


@dataclass(frozen=True)
class LadderFit:
    alphas: tuple[float, ...]
    n_hats: tuple[int, ...]
    k0: float
    k1: float
    monotone: bool
    etas: tuple[float, ...] = ()

    @property
    def etas_in_range(self) -> bool:
        """eta in (0, 1/3] on every rung with alpha <= ETA_RUNG_ALPHA (vacuous without such rungs)."""
        return all(0.0 < eta <= ETA_MAX for alpha, eta in zip(self.alphas, self.etas) if alpha <= ETA_RUNG_ALPHA)


def fit_return_ladder(estimates: list[ReturnTimeEstimate]) -> LadderFit:
    """(K0, K1) bracketing N(alpha) / log(1/alpha) over an alpha ladder."""
    ordered = sorted(estimates, key=lambda e: -e.alpha)
    logs = np.array([np.log(1.0 / e.alpha) for e in ordered])
    n_hats = np.array([e.n_hat for e in ordered], dtype=float)
    ratios = n_hats / logs
    return LadderFit(
        alphas=tuple(e.alpha for e in ordered),
        n_hats=tuple(int(n) for n in n_hats),
        k0=float(ratios.min()),
        k1=float(ratios.max()),
        monotone=bool(np.all(np.diff(n_hats) >= 0)),
        etas=tuple(e.eta for e in ordered),
    )


# -- deep-return tail over a curve --------------------------------------------


@dataclass(frozen=True)
class TailRow:
    r: int
    measure: float
    lower: float
    upper: float
    bound: float
    valid: bool
    censored: bool


@dataclass(frozen=True)
class DeepReturnTable:
    alpha: float
    iterate: int
    eta: float
    rows: list[TailRow]
    slope: float

    @property
    def decays(self) -> bool:
        return bool(np.isfinite(self.slope) and self.slope <= MIN_TAIL_SLOPE)

    @property
    def nonincreasing(self) -> bool:
        return nonincreasing_within([row.lower for row in self.rows], [row.upper for row in self.rows])


def deep_return_tail(
    sys: SkewSystem,
    curve: AdmissibleCurve | None = None,
    r_grid=range(2, 9),
    eta: float = 0.1,
    rng: np.random.Generator | None = None,
    **cylinder_options,
) -> DeepReturnTable:
    """Leb{theta : x_M(theta) in J(r-2)} along the curve for each r, M = m_of_alpha(alpha)."""
    alpha = sys.alpha
    iterate = m_of_alpha(alpha)
    if iterate < 1:
        raise PreconditionError(f"alpha={alpha} gives M=0; the tail needs 32 alpha <= 1")
    if curve is None:
        curve = constant_curve(np.sqrt(sys.a0), alpha)
    pieces = pushed_pieces(sys, curve, iterate, rng, **cylinder_options)
    trials = pieces.theta.size
    start = heavy_threshold(alpha, 2.0 * eta)
    constant = strip_constant(sys)
    rows = []
    for r in r_grid:
        lo, hi = critical_window(alpha, r - 2)
        measure = pieces.measure(lo, hi)
        low, up = wilson_interval(int(round(measure * trials)), trials)
        rows.append(
            TailRow(
                r=int(r),
                measure=measure,
                lower=low,
                upper=up,
                bound=float(constant * np.sqrt((hi - lo) / alpha)),
                valid=r >= start,
                censored=measure <= 0.0,
            )
        )
    fit = [row for row in rows if row.valid and not row.censored]
    slope = log_tail_slope([row.r for row in fit], [row.measure for row in fit], against="n") if len(fit) >= 2 else float("nan")
    logger.debug("deep-return tail at alpha=%.3g, M=%d: slope %.3f over %d rows", alpha, iterate, slope, len(fit))
    return DeepReturnTable(alpha, iterate, eta, rows, slope)


def deep_segment_check(
    sys: SkewSystem, curve: AdmissibleCurve, nu: int, m: int, rng: np.random.Generator | None = None, **cylinder_options
) -> tuple[int, int]:
    """Cylinders of depth nu whose curve image meets J(m), and how many of them leave J(m-1)."""
    if m < 1:
        raise PreconditionError("deep segments need m >= 1")
    pieces = pushed_pieces(sys, curve, nu, rng, depth=nu, **cylinder_options)
    _, deep = critical_window(sys.alpha, m)
    _, outer = critical_window(sys.alpha, m - 1)
    hits = np.any(np.abs(pieces.values) <= deep, axis=1)
    escapes = hits & np.any(np.abs(pieces.values) > outer, axis=1)
    return int(hits.sum()), int(escapes.sum())


# -- displacement partitions ---------------------------------------------------


@dataclass(frozen=True)
class DisplacementPartition:
    first: tuple[int, ...]
    second: tuple[int, ...]
    separation: float
    masses: tuple[float, float]
    alpha: float

    @property
    def holds(self) -> bool:
        zeta = 1.0 / 16.0
        small, large = self.masses
        return (
            bool(self.second)
            and self.separation >= self.alpha / 100.0
            and zeta <= small <= large <= 1.0 - zeta
            and not set(self.first) & set(self.second)
        )


def displacement_partitions(sys: SkewSystem, curve: AdmissibleCurve) -> DisplacementPartition:
    """Two branch collections whose pushed segments are vertically apart by at least alpha/100."""
    if sys.params.bump is not None:
        raise PreconditionError("the displacement claim is stated for the pure sine fiber family")
    widths = sys.base.partition.widths
    if widths.max() > 1.0 / 16.0 + 1e-15:
        raise PreconditionError("the displacement claim needs branches of length <= 1/16")
    z = sys.fiber(curve.theta, curve.y)
    symbols = sys.base.branch_index(curve.theta)
    count = sys.base.branch_count
    lows = np.full(count, np.inf)
    highs = np.full(count, -np.inf)
    np.minimum.at(lows, symbols, z)
    np.maximum.at(highs, symbols, z)
    top = int(symbols[np.argmax(z)])
    first = [top]
    floor = lows[top]
    second = [s for s in range(count) if s != top and highs[s] <= floor - curve.alpha / 100.0]
    separation = float(floor - highs[second].max()) if second else float("-inf")
    mass_first = float(widths[first].sum())
    mass_second = float(widths[second].sum()) if second else 0.0
    if mass_first > mass_second:
        first, second = second, first
        mass_first, mass_second = mass_second, mass_first
    return DisplacementPartition(tuple(first), tuple(second), separation, (mass_first, mass_second), curve.alpha)


# -- classified returns along orbits -------------------------------------------


@dataclass(frozen=True)
class ReturnRecord:
    time: int
    depth: int
    kind: str


@dataclass(frozen=True)
class ReturnSummary:
    records: list[ReturnRecord] = field(default_factory=list)
    heavy_sum: int = 0
    m: int = 0
    threshold: float = 0.0


def classify_returns(
    sys: SkewSystem, theta: float, x: float, n: int, eta: float = 0.1, noise: np.ndarray | None = None
) -> ReturnSummary:
    """Deep/regular returns of x_1..x_n and the depth sum over returns at least (1/2 - eta) log(1/alpha) deep."""
    if n < 1:
        raise PreconditionError("classify_returns needs n >= 1")
    if noise is None:
        xs = sys.orbit(theta, x, n)[:, 1]
    else:
        _, path = dithered_orbit(sys, theta, x, noise[: n + 1])
        xs = path[1:]
    return summarize_returns(xs, sys.alpha, n, eta)


def summarize_returns(xs, alpha: float, n: int, eta: float = 0.1) -> ReturnSummary:
    m = int(np.floor(np.sqrt(n)))
    depths = return_depths(xs, alpha)
    threshold = heavy_threshold(alpha, eta)
    records = [
        ReturnRecord(time=int(t) + 1, depth=int(depths[t]), kind="deep" if depths[t] >= m else "regular")
        for t in np.flatnonzero(depths >= 0)
    ]
    heavy = int(sum(rec.depth for rec in records if rec.depth >= threshold))
    return ReturnSummary(records, heavy, m, float(threshold))


def _heavy_sum_kernel(indices, sys: SkewSystem, seed: int, horizon: int, checkpoints: np.ndarray, eta: float):
    rngs = sample_rngs(seed, "recurrence", indices)
    theta = np.array([sys.base.sample(g) for g in rngs])
    lo, hi = sys.trap
    x = np.array([lo + (hi - lo) * g.random() for g in rngs])
    noise = noise_block(rngs, horizon + 1)
    _, xs = dithered_orbit(sys, theta, x, noise)
    depths = return_depths(xs[1:], sys.alpha)
    heavy = np.where(depths >= heavy_threshold(sys.alpha, eta), depths, 0)
    prefix = np.cumsum(heavy, axis=0)
    return {"heavy": prefix[checkpoints - 1].T}


@dataclass(frozen=True)
class HeavyTailTable:
    n_grid: tuple[int, ...]
    fraction: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rate: float

    @property
    def decays(self) -> bool:
        return bool(self.fraction[-1] <= self.fraction[0] and nonincreasing_within(self.lower, self.upper))


def heavy_depth_tail(
    sys: SkewSystem,
    n_grid=(100, 1000, 10_000),
    samples: int = 1000,
    seed: int = 0,
    rate: float = 0.05,
    eta: float = 0.1,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> HeavyTailTable:
    """Fraction of Lebesgue samples whose heavy depth sum up to n exceeds rate * n."""
    checkpoints = np.asarray(sorted(n_grid), dtype=np.int64)
    results = map_chunks(
        _heavy_sum_kernel, samples, sys, seed, int(checkpoints[-1]), checkpoints, eta,
        workers=workers, chunk_size=chunk_size,
    )
    heavy = np.concatenate([r["heavy"] for r in results], axis=0)
    hits = (heavy >= rate * checkpoints[None, :]).sum(axis=0)
    bands = np.array([wilson_interval(int(k), samples) for k in hits])
    return HeavyTailTable(tuple(int(n) for n in checkpoints), hits / samples, bands[:, 0], bands[:, 1], rate)


# -- first-time functions E_v and R -------------------------------------------


@dataclass(frozen=True)
class ExpansionTails:
    n_grid: tuple[int, ...]
    tail_e: np.ndarray
    tail_r: np.ndarray
    bands_e: np.ndarray
    bands_r: np.ndarray
    slope_e: float
    slope_r: float
    horizon: int

    @staticmethod
    def _shape_ok(tail, bands, slope) -> bool:
        if not nonincreasing_within(bands[:, 0], bands[:, 1]):
            return False
        return bool(tail[-1] == 0.0 or (np.isfinite(slope) and slope < 0.0))

    @property
    def passes(self) -> bool:
        return self._shape_ok(self.tail_e, self.bands_e, self.slope_e) and self._shape_ok(
            self.tail_r, self.bands_r, self.slope_r
        )


def _last_violation(violations: np.ndarray) -> np.ndarray:
    """1 + last index n (1-based) flagged along axis 0, or 1 when none is flagged."""
    steps = violations.shape[0]
    flipped = violations[::-1]
    any_hit = flipped.any(axis=0)
    last = steps - np.argmax(flipped, axis=0)
    return np.where(any_hit, last + 1, 1)


def _first_time_kernel(indices, sys: SkewSystem, seed: int, horizon: int, c_target: float, eps: float, delta: float):
    rngs = sample_rngs(seed, "tails", indices)
    theta = np.array([sys.base.sample(g) for g in rngs])
    lo, hi = sys.trap
    x = np.array([lo + (hi - lo) * g.random() for g in rngs])
    noise = noise_block(rngs, horizon)
    _, xs = dithered_orbit(sys, theta, x, noise)
    ax = np.maximum(np.abs(xs), TINY)
    steps = np.arange(1, horizon + 1)[:, None]
    growth = np.cumsum(np.log(2.0 * ax), axis=0)
    closeness = np.cumsum(np.where(ax < delta, -np.log(ax), 0.0), axis=0)
    e_time = _last_violation(growth < c_target * steps)
    r_time = _last_violation(closeness > eps * steps)
    return {"e": e_time, "r": r_time}


def expansion_time_tails(
    sys: SkewSystem,
    c_target: float,
    eps: float,
    delta: float | None = None,
    n_grid=(0, 100, 1000, 10_000),
    samples: int = 1000,
    seed: int = 0,
    horizon: int | None = None,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> ExpansionTails:
    """Empirical Leb{E_v > n} and Leb{R > n} for the fiber direction v = d/dx."""
    if eps <= 0.0:
        raise PreconditionError("the slow-recurrence rate eps must be positive")
    if delta is None:
        delta = np.sqrt(sys.alpha) if sys.alpha > 0 else 0.1
    grid = np.asarray(sorted(n_grid), dtype=np.int64)
    horizon = int(horizon or max(2 * int(grid[-1]), 1))
    results = map_chunks(
        _first_time_kernel, samples, sys, seed, horizon, c_target, eps, delta, workers=workers, chunk_size=chunk_size
    )
    e_time, r_time = concat(results, "e"), concat(results, "r")
    tail_e = np.array([(e_time > n).mean() for n in grid])
    tail_r = np.array([(r_time > n).mean() for n in grid])
    bands_e = np.array([wilson_interval(int((e_time > n).sum()), samples) for n in grid])
    bands_r = np.array([wilson_interval(int((r_time > n).sum()), samples) for n in grid])
    positive = grid > 0
    return ExpansionTails(
        n_grid=tuple(int(n) for n in grid),
        tail_e=tail_e,
        tail_r=tail_r,
        bands_e=bands_e,
        bands_r=bands_r,
        slope_e=log_tail_slope(grid[positive], tail_e[positive]),
        slope_r=log_tail_slope(grid[positive], tail_r[positive]),
        horizon=horizon,
    )


# -- fitted expansion constants -------------------------------------------------


@dataclass(frozen=True)
class ExpansionConstants:
    n_hat: int
    eta: float
    kappa: float
    delta1: float
    sigma1: float
    c2: float
    sigma2: float


def _segment_kernel(indices, sys: SkewSystem, seed: int, horizon: int, delta1: float, n_cap: int, kappa: float):
    rngs = sample_rngs(seed, "expansion", indices)
    root = np.sqrt(sys.alpha)
    theta = np.array([sys.base.sample(g) for g in rngs])
    # log-uniform |x| in [sqrt(alpha), delta1) with a random sign
    u = np.array([g.random((2,)) for g in rngs])
    start = np.exp(np.log(root) + u[:, 0] * (np.log(delta1) - np.log(root)))
    x = np.where(u[:, 1] < 0.5, -start, start)
    noise = noise_block(rngs, horizon)
    _, xs = dithered_orbit(sys, theta, x, noise)
    logs = np.cumsum(np.log(np.maximum(2.0 * np.abs(xs), TINY)), axis=0)
    steps = np.arange(1, horizon + 1)[:, None]
    window = min(n_cap, horizon)
    sigma1 = np.max((logs[:window] - np.log(1.0 / kappa)) / steps[:window], axis=0)
    # segments stay outside J(0) up to, not including, the first return
    inside = np.abs(xs[1:]) < root
    first = np.where(inside.any(axis=0), np.argmax(inside, axis=0) + 1, horizon)
    envelope = np.full(horizon, np.inf)
    for k in range(horizon):
        alive = first > k
        if alive.any():
            envelope[k] = logs[k, alive].min()
    return {"sigma1": sigma1, "envelope": envelope[None, :]}


def expansion_constants(
    sys: SkewSystem,
    samples: int = 1000,
    seed: int = 0,
    kappa: float = 0.5,
    delta1: float = 0.2,
    horizon: int = 200,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> ExpansionConstants:
    """Fit sigma_1 (with fixed kappa) and the lower envelope (C_2, sigma_2) of fiber derivative growth."""
    estimate = n_of_alpha(sys, samples, seed, workers=workers, chunk_size=chunk_size)
    results = map_chunks(
        _segment_kernel, samples, sys, seed, horizon, delta1, estimate.n_hat, kappa,
        workers=workers, chunk_size=chunk_size,
    )
    sigma1 = float(np.exp(concat(results, "sigma1").min()))
    envelope = np.min(np.concatenate([r["envelope"] for r in results], axis=0), axis=0)
    envelope = envelope - 0.5 * np.log(sys.alpha)
    steps = np.arange(1, horizon + 1)
    finite = np.isfinite(envelope)
    log_sigma2, _ = line_fit(steps[finite], envelope[finite])
    log_c2 = float(np.min(envelope[finite] - log_sigma2 * steps[finite]))
    return ExpansionConstants(
        n_hat=estimate.n_hat,
        eta=estimate.eta,
        kappa=kappa,
        delta1=delta1,
        sigma1=sigma1,
        c2=float(np.exp(log_c2)),
        sigma2=float(np.exp(log_sigma2)),
    )


# -- non-degeneracy of the critical set -----------------------------------------


@dataclass(frozen=True)
class CriticalOrderFit:
    b: float
    beta: float
    c1_ratio: float
    pairs: int


def _derivative_matrices(sys: SkewSystem, theta, x) -> np.ndarray:
    p = sys.fiber_partials(theta, x)
    mats = np.zeros(np.shape(theta) + (2, 2))
    mats[..., 0, 0] = sys.base.d1(theta)
    mats[..., 1, 0] = p["t"]
    mats[..., 1, 1] = p["x"]
    return mats


def critical_order_check(sys: SkewSystem, rng: np.random.Generator, pairs: int = 20_000) -> CriticalOrderFit:
    """Fit B, beta so that the derivative behaves like a power of the distance to x = 0."""
    lo, hi = sys.trap
    theta = sys.base.sample(rng, pairs)
    span = max(abs(lo), abs(hi))
    dist = np.exp(rng.uniform(np.log(1e-8), np.log(span), pairs))
    x = np.where(rng.random(pairs) < 0.5, -dist, dist)
    x = np.clip(x, lo, hi)
    dist = np.maximum(np.abs(x), TINY)

    smallest = np.linalg.svd(_derivative_matrices(sys, theta, x), compute_uv=False)[..., -1]
    c1_ratio = float(np.max(dist / smallest))

    step = 0.5 * dist * rng.random(pairs)
    angle = rng.uniform(0.0, 2.0 * np.pi, pairs)
    theta2 = theta + step * np.cos(angle)
    x2 = x + step * np.sin(angle)
    keep = (theta2 > sys.base.partition.lower) & (theta2 <= sys.base.partition.upper)
    keep &= sys.base.branch_index(np.where(keep, theta2, theta)) == sys.base.branch_index(theta)
    theta, x, theta2, x2, step, dist = (a[keep] for a in (theta, x, theta2, x2, step, dist))

    def log_inverse_norm(t, y):
        return -np.log(np.linalg.svd(_derivative_matrices(sys, t, y), compute_uv=False)[..., -1])

    def log_det(t, y):
        return np.log(np.abs(sys.base.d1(t) * 2.0 * y))

    ratio = np.maximum(
        np.abs(log_inverse_norm(theta, x) - log_inverse_norm(theta2, x2)),
        np.abs(log_det(theta, x) - log_det(theta2, x2)),
    ) / np.maximum(step, TINY)
    positive = ratio > 0
    beta, _ = line_fit(-np.log(dist[positive]), np.log(ratio[positive]))
    beta = max(beta, 0.0)
    b = float(max(np.max(ratio * dist**beta), c1_ratio, 1.0))
    return CriticalOrderFit(b=b, beta=float(beta), c1_ratio=c1_ratio, pairs=int(keep.sum()))
