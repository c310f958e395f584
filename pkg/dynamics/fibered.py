"""
Fibered hyperbolic interval maps psi(x, y) = (S(x), T(y) + a(x)) with
T(y) = c - y^2 hyperbolic, and the coexistence construction for Viana maps.
"""

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from utils.fitting import l1_distance
from utils.parallel import DEFAULT_CHUNK, concat, map_chunks, sample_rngs

from .base_map import BaseMap, c3_distance
from .errors import NonHyperbolicError, PreconditionError, RetuneError, TrappingError
from .skew import DITHER, FiberBump, SkewSystem, VianaParams, build_system
from .statistics import lebesgue_bin_masses, lyapunov_mc

logger = logging.getLogger(__name__)

LOG_FLOOR = -700.0
PERIOD_TOL = 1e-9
COUPLING_KINDS = ("sine", "bump")
PERIOD3_WINDOW = (1.75, 1.7685)


@dataclass(frozen=True, eq=False)
class FiberedSystem:
    """psi(x, y) = (S(x), c - y^2 + a(x)) with a of C^3 size ``epsilon``."""

    base: BaseMap
    c: float
    epsilon: float
    coupling_kind: str = "sine"
    bump_center: float = 0.5
    bump_width: float = 0.25

    def __post_init__(self):
        if self.coupling_kind not in COUPLING_KINDS:
            raise PreconditionError(f"coupling kind must be one of {COUPLING_KINDS}")
        if self.epsilon < 0.0:
            raise PreconditionError("epsilon must be non-negative")

    def _unit_coupling(self, x, order: int):
        x = np.asarray(x, dtype=float)
        if self.coupling_kind == "sine":
            w = 2.0 * np.pi
            trig = (np.sin, np.cos, lambda p: -np.sin(p), lambda p: -np.cos(p))[order]
            return trig(w * x) * w ** (order - 3)
        return FiberBump(self.bump_center, self.bump_width, 1.0).derivative(x, order)

    def _unit_size(self) -> float:
        if self.coupling_kind == "sine":
            return 1.0
        return FiberBump(self.bump_center, self.bump_width, 1.0).c3_size()

    def coupling(self, x, order: int = 0):
        """a(x), scaled so its measured C^3 size equals epsilon."""
        return self.epsilon * self._unit_coupling(x, order) / self._unit_size()

    def coupling_c3(self, nodes: int = 4001) -> float:
        x = np.linspace(0.0, 1.0, nodes)
        return max(float(np.abs(self.coupling(x, k)).max()) for k in range(4))

    def fiber(self, x, y):
        return self.c - np.asarray(y, dtype=float) ** 2 + self.coupling(x)

    def step(self, x, y):
        return self.base.eval(x), self.fiber(x, y)

    def mc_step(self, x, y, noise):
        return self.base.advance(x, (noise - 0.5) * DITHER), self.fiber(x, y)


# -- attracting cycles ------------------------------------------------------------


@dataclass(frozen=True)
class Attractor:
    cycle: tuple[float, ...]
    period: int
    multiplier: float


def _quadratic_iterate(c: float, y, times: int):
    for _ in range(times):
        y = c - y * y
    return y


def find_attractors(c: float, max_period: int = 64, tol: float = 1e-12, max_iter: int = 20_000) -> list[Attractor]:
    """Attracting cycle of T(y) = c - y^2 found along the critical orbit and polished by Newton."""
    if max_period > 64:
        raise PreconditionError("max_period must be at most 64")
    y = 0.0
    for _ in range(max_iter):
        y = c - y * y
        if abs(y) > 1e6:
            raise NonHyperbolicError(f"critical orbit of c={c} escapes to infinity")
    orbit = [y]
    for _ in range(2 * max_period):
        orbit.append(c - orbit[-1] ** 2)
    period = next(
        (p for p in range(1, max_period + 1) if all(abs(orbit[k + p] - orbit[k]) < PERIOD_TOL for k in range(p))),
        None,
    )
    if period is None:
        raise NonHyperbolicError(f"critical orbit of c={c} does not settle on a cycle of period <= {max_period}")

    def residual(z):
        return _quadratic_iterate(c, z, period) - z

    def slope(z):
        product, w = 1.0, z
        for _ in range(period):
            product *= -2.0 * w
            w = c - w * w
        return product - 1.0

    start = optimize.newton(residual, orbit[0], fprime=slope, tol=tol, maxiter=100)
    cycle = [float(start)]
    for _ in range(period - 1):
        cycle.append(c - cycle[-1] ** 2)
    multiplier = float(np.prod([-2.0 * p for p in cycle]))
    if abs(multiplier) >= 1.0:
        raise NonHyperbolicError(f"cycle of period {period} at c={c} has multiplier {multiplier:.4f}")
    logger.debug("c=%.6f: period-%d cycle, multiplier %.4g", c, period, multiplier)
    return [Attractor(tuple(cycle), period, multiplier)]


# -- trapping region ---------------------------------------------------------------


@dataclass(frozen=True)
class TrapRegion:
    centers: tuple[float, ...]
    radius: float
    n: int
    lam: float
    margin: float

    @property
    def components(self) -> list[tuple[float, float]]:
        return [(p - self.radius, p + self.radius) for p in self.centers]

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        inside = np.zeros(y.shape, dtype=bool)
        for lo, hi in self.components:
            inside |= (y > lo) & (y < hi)
        return inside


def _coupling_sequences(epsilon: float, n: int) -> list[tuple[float, ...]]:
    levels = (-epsilon, 0.0, epsilon)
    if 3**n <= 729:
        return list(itertools.product(levels, repeat=n))
    return [(s,) * n for s in levels]


def _certify_radius(c: float, centers, n: int, radius: float, sequences, nodes: int):
    """(margin, lambda) of T^N over every component and coupling sequence."""
    margin, log_rate = np.inf, -np.inf
    for p in centers:
        y0 = np.linspace(p - radius, p + radius, nodes)
        for seq in sequences:
            y = y0
            log_deriv = np.zeros_like(y0)
            for s in seq:
                log_deriv += np.log(np.maximum(np.abs(2.0 * y), np.exp(LOG_FLOOR)))
                y = c - y * y + s
            margin = min(margin, float(np.min(radius - np.abs(y - p))))
            log_rate = max(log_rate, float(log_deriv.max()) / n)
    return margin, float(np.exp(log_rate))


def build_trap(
    fs: FiberedSystem,
    attractors: list[Attractor] | None = None,
    radii=None,
    nodes: int = 401,
) -> TrapRegion:
    """Smallest radius whose neighborhoods are mapped strictly inside themselves by T_x^N, contracting."""
    if attractors is None:
        attractors = find_attractors(fs.c)
    centers = tuple(p for a in attractors for p in a.cycle)
    n = int(np.prod([a.period for a in attractors]))
    sequences = _coupling_sequences(fs.epsilon, n)
    if radii is None:
        gaps = [abs(p - q) for p, q in itertools.combinations(centers, 2)] + [2.0 * min(abs(p) for p in centers)]
        radii = np.linspace(1e-3, 0.5 * min(gaps + [0.5]), 200)
    for radius in radii:
        margin, lam = _certify_radius(fs.c, centers, n, float(radius), sequences, nodes)
        if margin > 0.0 and lam < 1.0:
            logger.info("trap certified: radius %.4f, N=%d, lambda %.4f, margin %.2e", radius, n, lam, margin)
            return TrapRegion(centers, float(radius), n, lam, margin)
    raise TrappingError(f"no radius traps T(y)={fs.c}-y^2 under couplings of size {fs.epsilon}; epsilon too large")


def trap_escapes(fs: FiberedSystem, trap: TrapRegion, rng: np.random.Generator, points: int = 1000, blocks: int = 1000) -> int:
    """Blocks of N steps from random points of X x U that end outside U."""
    component = rng.integers(0, len(trap.centers), points)
    y = np.asarray(trap.centers)[component] + trap.radius * (2.0 * rng.random(points) - 1.0)
    x = fs.base.sample(rng, points)
    escapes = 0
    for _ in range(blocks):
        for _ in range(trap.n):
            x, y = fs.mc_step(x, y, rng.random(points))
        inside = trap.contains(y)
        escapes += int(np.count_nonzero(~inside))
    return escapes


@dataclass(frozen=True)
class CaptureResult:
    steps: int | None
    radius: float


def critical_capture(fs: FiberedSystem, trap: TrapRegion, radius: float = 0.05, max_steps: int = 500, nodes: int = 257) -> CaptureResult:
    """Smallest K with psi^K(X x V) inside the trap, V = (-radius, radius)."""
    x = np.linspace(fs.base.partition.lower, fs.base.partition.upper, nodes + 1)[1:]
    y = np.linspace(-radius, radius, nodes)
    xs, ys = np.meshgrid(x, y, indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()
    for k in range(1, max_steps + 1):
        xs, ys = fs.step(xs, ys)
        if trap.contains(ys).all():
            return CaptureResult(k, radius)
    return CaptureResult(None, radius)


# -- fiber exponents and the pushforward measure ---------------------------------


@dataclass(frozen=True)
class FiberExponent:
    value: float
    trapped: bool
    degenerate: bool
    applicable: bool


def fiber_exponent(
    fs: FiberedSystem, trap: TrapRegion, x: float, y: float, n: int, noise=None, capture_cap: int = 1000
) -> FiberExponent:
    """(1/n) sum log|T'(y_j)| once the orbit is inside the trap."""
    trapped = bool(trap.contains(y))
    if not trapped:
        for _ in range(capture_cap):
            x, y = fs.step(x, y)
            if trap.contains(y):
                break
        else:
            return FiberExponent(float("nan"), False, False, False)
    total, degenerate = 0.0, False
    for k in range(n):
        if y == 0.0:
            degenerate = True
            total += LOG_FLOOR
        else:
            total += float(np.log(abs(2.0 * y)))
        if noise is None:
            x, y = fs.step(x, y)
        else:
            x, y = fs.mc_step(x, y, noise[k])
    return FiberExponent(total / n, trapped, degenerate, True)


@dataclass(frozen=True)
class SrbSummary:
    y0: float
    n: int
    average_y: float
    average_x: float
    pairing_gap: float
    x_marginal_l1: float
    fiber_exponent: float
    base_exponent: float
    trapped_exponents: np.ndarray

    @property
    def worst_exponent(self) -> float:
        return float(self.trapped_exponents.max())


def _srb_kernel(indices, fs: FiberedSystem, seed: int, y_starts, burn_in: int, n: int, bins: int):
    rngs = sample_rngs(seed, "fibered", indices)
    x = np.array([fs.base.sample(g) for g in rngs])
    noise = np.stack([g.random(burn_in + n) for g in rngs], axis=1)
    ys = [np.full(x.shape, y0) for y0 in y_starts]
    sums = [np.zeros(x.shape) for _ in y_starts]
    sum_x = np.zeros(x.shape)
    log_fiber = np.zeros(x.shape)
    log_base = np.zeros(x.shape)
    hist = np.zeros(bins)
    edges = np.linspace(fs.base.partition.lower, fs.base.partition.upper, bins + 1)
    for k in range(burn_in + n):
        if k >= burn_in:
            for total, y in zip(sums, ys):
                total += y
            sum_x += x
            log_fiber += np.log(np.maximum(np.abs(2.0 * ys[0]), np.exp(LOG_FLOOR)))
            log_base += np.log(np.abs(fs.base.d1(x)))
            hist += np.histogram(x, bins=edges)[0]
        coupling = fs.coupling(x)
        ys = [fs.c - y * y + coupling for y in ys]
        x = fs.base.advance(x, (noise[k] - 0.5) * DITHER)
    return {
        "averages": np.stack([s / n for s in sums], axis=1),
        "x": sum_x / n,
        "fiber": log_fiber / n,
        "base": log_base / n,
        "hist": hist[None, :],
    }


def srb_pushforward(
    fs: FiberedSystem,
    trap: TrapRegion,
    y0: float,
    n: int = 10_000,
    base_samples: int = 1000,
    seed: int = 0,
    burn_in: int = 256,
    pair_offset: float | None = None,
    bins: int = 50,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> SrbSummary:
    """Time averages of (1/n) sum psi^j_*(mu_S x delta_y0) and the two-start pairing gap."""
    if not trap.contains(y0):
        raise PreconditionError(f"y0={y0} is outside the trapping region")
    if pair_offset is None:
        pair_offset = 0.5 * trap.radius
    center = min(trap.centers, key=lambda p: abs(p - y0))
    y1 = center + np.sign(center - y0 or 1.0) * pair_offset
    results = map_chunks(
        _srb_kernel, base_samples, fs, seed, (y0, float(y1)), burn_in, n, bins, workers=workers, chunk_size=chunk_size
    )
    averages = np.concatenate([r["averages"] for r in results], axis=0)
    fiber = concat(results, "fiber")
    hist = np.sum([r["hist"][0] for r in results], axis=0)
    edges = np.linspace(fs.base.partition.lower, fs.base.partition.upper, bins + 1)
    return SrbSummary(
        y0=float(y0),
        n=n,
        average_y=float(averages[:, 0].mean()),
        average_x=float(concat(results, "x").mean()),
        pairing_gap=float(np.abs(averages[:, 0] - averages[:, 1]).max()),
        x_marginal_l1=l1_distance(hist / hist.sum(), lebesgue_bin_masses(edges)),
        fiber_exponent=float(fiber.mean()),
        base_exponent=float(concat(results, "base").mean()),
        trapped_exponents=fiber,
    )


def srb_by_cycle(fs: FiberedSystem, trap: TrapRegion, attractors: list[Attractor], **options) -> list[SrbSummary]:
    """One pushforward summary per attracting cycle, started at its first trap component."""
    return [srb_pushforward(fs, trap, attractor.cycle[0], **options) for attractor in attractors]


# -- coexistence of exponent signs --------------------------------------------------


@dataclass(frozen=True)
class CoexistenceReport:
    branch: int
    fixed_point: float
    bump: FiberBump
    tuned_parameter: float
    attractor: Attractor
    central_exponent: float
    fraction_positive: float
    samples: int
    bump_c3: float
    c3_distance: float


def base_fixed_point(base: BaseMap, branch: int) -> float:
    """The fixed point of the branch, i/(d-1) for the uniform linear branch i."""
    if base.kind == "uniform_linear":
        return branch / (base.branch_count - 1.0)
    # the inverse branch contracts by at least 1/d
    p = 0.5 * sum(float(v) for v in base.partition.bounds(branch))
    for _ in range(64):
        p = float(base.inverse(branch, p))
    return p


def tuned_bump(params: VianaParams, branch: int, target: float, width: float) -> tuple[float, FiberBump]:
    """Bump at the branch fixed point p* moving a0 + alpha sin(2 pi p*) + shift to ``target``."""
    p_star = base_fixed_point(params.base, branch)
    lo, hi = (float(v) for v in params.base.partition.bounds(branch))
    if not (lo < p_star - width and p_star + width < hi):
        raise PreconditionError(f"bump of width {width} around {p_star:.6f} leaves branch {branch}")
    current = params.a0 + params.alpha * np.sin(2.0 * np.pi * p_star) + params.shift
    return p_star, FiberBump(center=p_star, width=width, amplitude=float(target - current))


def _central_exponent(sys: SkewSystem, p_star: float, x0: float, n: int) -> float:
    forcing = float(sys.forcing(p_star))
    x, total = x0, 0.0
    for _ in range(n):
        total += np.log(max(abs(2.0 * x), np.exp(LOG_FLOOR)))
        x = forcing - x * x
    return total / n


def coexistence_demo(
    params: VianaParams,
    branch: int = 8,
    target: float = 1.7548,
    window: tuple[float, float] = PERIOD3_WINDOW,
    width: float = 1.0 / 64.0,
    n: int = 10_000,
    samples: int = 1000,
    seed: int = 0,
    central_steps: int = 1000,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> CoexistenceReport:
    """Negative central exponent over the fixed fiber p* next to positive exponents Lebesgue-almost everywhere."""
    if not window[0] <= target <= window[1]:
        raise RetuneError(f"target {target} lies outside the hyperbolic window {window}; pick a parameter inside it")
    p_star, bump = tuned_bump(params, branch, target, width)
    bumped = replace(params, bump=bump)
    sys = build_system(bumped)
    tuned = float(sys.forcing(p_star))
    try:
        attractor = find_attractors(tuned)[0]
    except NonHyperbolicError as e:
        raise RetuneError(f"a'={tuned:.6f} is not hyperbolic ({e}); retune the bump amplitude") from e
    central = _central_exponent(sys, p_star, attractor.cycle[0] + 1e-6, central_steps)
    exponents = lyapunov_mc(sys, n, samples, seed, threshold=0.0, workers=workers, chunk_size=chunk_size)
    reference = build_system(params)
    distance = c3_distance(reference, sys)
    logger.info(
        "coexistence: a'=%.6f period %d, central exponent %.4f, %.1f%% positive",
        tuned, attractor.period, central, 100.0 * exponents.fraction_positive,
    )
    return CoexistenceReport(
        branch=branch,
        fixed_point=p_star,
        bump=bump,
        tuned_parameter=tuned,
        attractor=attractor,
        central_exponent=float(central),
        fraction_positive=exponents.fraction_positive,
        samples=exponents.samples,
        bump_c3=bump.c3_size(),
        c3_distance=distance,
    )
