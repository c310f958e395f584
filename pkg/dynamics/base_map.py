"""
Countable-branch Markov expanding maps of (0,1].

A base map is a finite truncation of a full-branch Markov partition together
with closed-form branch maps and their first three derivatives. Branches are
left-open right-closed: omega_i = (left_i, right_i].
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import PreconditionError, StructureError, TruncationError

logger = logging.getLogger(__name__)

Itinerary = tuple[int, ...]

BASE_KINDS = (
    "uniform_linear",
    "perturbed_linear",
    "quadratic_branch",
    "custom_breakpoints",
    "countable_geometric",
)

INVERSE_TOL = 1e-14
_BISECTION_STEPS = 8


@dataclass(frozen=True, eq=False)
class MarkovPartition:
    """Retained intervals of a (possibly countable) Markov partition.

    ``breakpoints`` is strictly increasing; position ``j`` is the interval
    ``(breakpoints[j], breakpoints[j+1]]`` and carries symbol ``symbols[j]``.
    Whatever part of (0,1] is not covered is the declared residual mass.
    """

    breakpoints: np.ndarray
    symbols: np.ndarray
    tail_rule: str = "none"

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise StructureError("a partition needs at least one interval")
        if np.any(np.diff(bp) <= 0):
            raise StructureError("breakpoints must be strictly increasing")
        if bp[0] < 0.0 or bp[-1] > 1.0:
            raise StructureError("breakpoints must lie in [0, 1]")
        symbols = np.asarray(self.symbols, dtype=np.int64)
        if symbols.shape != (bp.size - 1,):
            raise StructureError("one symbol per interval is required")
        if sorted(symbols.tolist()) != list(range(symbols.size)):
            raise StructureError("symbols must be a permutation of 0..T-1")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "symbols", symbols)
        positions = np.empty_like(symbols)
        positions[symbols] = np.arange(symbols.size)
        object.__setattr__(self, "_positions", positions)

    @property
    def size(self) -> int:
        return int(self.symbols.size)

    @property
    def lower(self) -> float:
        return float(self.breakpoints[0])

    @property
    def upper(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def residual_mass(self) -> float:
        return 1.0 - (self.upper - self.lower)

    @property
    def widths(self) -> np.ndarray:
        """Interval lengths indexed by symbol."""
        w = np.diff(self.breakpoints)
        return w[self._positions]

    def bounds(self, symbol) -> tuple[np.ndarray, np.ndarray]:
        pos = self._positions[np.asarray(symbol, dtype=np.int64)]
        return self.breakpoints[pos], self.breakpoints[pos + 1]

    def branch_index(self, theta):
        """Symbol of the interval containing ``theta``."""
        theta = np.asarray(theta, dtype=float)
        pos = np.searchsorted(self.breakpoints, theta, side="left") - 1
        outside = (pos < 0) | (pos >= self.size)
        if np.any(outside):
            bad = theta[outside] if theta.ndim else theta
            raise TruncationError(f"point(s) outside retained branches: {np.ravel(bad)[:5]}")
        symbols = self.symbols[pos]
        return int(symbols) if symbols.ndim == 0 else symbols


@dataclass(frozen=True, eq=False)
class BaseMap:
    """Full-branch Markov expanding map with closed-form derivatives.

    Each branch is ``g(theta) = shape(t) + amplitude * P(theta)`` where
    ``t = (theta - left) / width``, ``shape(t) = t + kappa * t * (1 - t)`` and
    ``P(theta) = sin(2 pi f theta) / (2 pi f)**3`` has unit C^3 size and
    vanishes on a uniform partition's breakpoints.
    """

    partition: MarkovPartition
    kind: str
    d: float
    renyi: float
    kappa: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise StructureError(f"unknown base kind {self.kind!r}")
        if not 0.0 <= self.kappa < 1.0:
            raise StructureError("branch shape parameter kappa must lie in [0, 1)")

    # -- evaluation ---------------------------------------------------------

    @property
    def branch_count(self) -> int:
        return self.partition.size

    @property
    def is_linear(self) -> bool:
        return self.kappa == 0.0 and self.amplitude == 0.0

    def branch_index(self, theta):
        return self.partition.branch_index(theta)

    def _perturbation(self, theta, order: int):
        if self.amplitude == 0.0:
            return np.zeros_like(theta)
        w = 2.0 * np.pi * self.frequency
        phase = w * theta
        # derivatives of sin cycle through cos, -sin, -cos
        trig = (np.sin, np.cos, lambda p: -np.sin(p), lambda p: -np.cos(p))[order]
        return self.amplitude * trig(phase) * w ** (order - 3)

    def _branch(self, symbol, theta, order: int):
        left, right = self.partition.bounds(symbol)
        width = right - left
        t = (theta - left) / width
        k = self.kappa
        if order == 0:
            value = t + k * t * (1.0 - t)
        elif order == 1:
            value = (1.0 + k - 2.0 * k * t) / width
        elif order == 2:
            value = np.full_like(t, -2.0 * k) / width**2
        else:
            value = np.zeros_like(t)
        return value + self._perturbation(theta, order)

    def derivative(self, theta, order: int = 0):
        """``order``-th derivative of g at ``theta`` (order 0 is g itself)."""
        theta = np.asarray(theta, dtype=float)
        symbol = self.branch_index(theta)
        return self._branch(symbol, theta, order)

    def eval(self, theta):
        return self.derivative(theta, 0)

    def d1(self, theta):
        return self.derivative(theta, 1)

    def d2(self, theta):
        return self.derivative(theta, 2)

    def d3(self, theta):
        return self.derivative(theta, 3)

    def advance(self, theta, noise):
        """One Monte Carlo step: g(theta) plus a low-order dither, wrapped into the retained range."""
        lo, hi = self.partition.lower, self.partition.upper
        span = hi - lo
        out = self.eval(theta) + noise
        out = np.where(out <= lo, out + span, out)
        return np.where(out > hi, out - span, out)

    def sample(self, rng: np.random.Generator, size=None):
        """Lebesgue-uniform points of the retained region, never the open end."""
        lo, hi = self.partition.lower, self.partition.upper
        return lo + (hi - lo) * (1.0 - rng.random(size))

    # -- inverse branches ---------------------------------------------------

    def inverse(self, symbol, y):
        """Preimage of ``y`` in (0,1] under the branch ``symbol``."""
        y = np.asarray(y, dtype=float)
        symbol = np.broadcast_to(np.asarray(symbol, dtype=np.int64), y.shape)
        left, right = self.partition.bounds(symbol)
        width = right - left
        k = self.kappa
        if k == 0.0:
            t = y
        else:
            t = ((1.0 + k) - np.sqrt((1.0 + k) ** 2 - 4.0 * k * y)) / (2.0 * k)
        guess = left + width * t
        if self.amplitude == 0.0:
            return guess

        lo, hi = left.astype(float).copy(), right.astype(float).copy()
        for _ in range(_BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            above = self._branch(symbol, mid, 0) > y
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        start = np.clip(guess, lo, hi)
        root = optimize.newton(
            lambda th: self._branch(symbol, th, 0) - y,
            start,
            fprime=lambda th: self._branch(symbol, th, 1),
            tol=INVERSE_TOL,
            maxiter=50,
        )
        return np.clip(root, left, right)

    def cylinder(self, itinerary: Sequence[int]) -> tuple[float, float]:
        """Endpoints (lo, hi] of the cylinder with the given itinerary."""
        symbols = _check_itinerary(self, itinerary)
        lo, hi = np.array(0.0), np.array(1.0)
        for s in reversed(symbols):
            lo = self.inverse(s, lo)
            hi = self.inverse(s, hi)
        if not hi > lo:
            raise StructureError(f"inverse branch composition failed for {symbols}")
        return float(lo), float(hi)

    def iterate_derivative(self, theta, n: int):
        """|(g^n)'(theta)| by the chain rule along the forward orbit."""
        theta = np.asarray(theta, dtype=float)
        product = np.ones_like(theta)
        for _ in range(n):
            product = product * np.abs(self.d1(theta))
            theta = self.eval(theta)
        return product


def _check_itinerary(base: BaseMap, itinerary: Sequence[int]) -> Itinerary:
    symbols = tuple(int(s) for s in itinerary)
    if not symbols:
        raise PreconditionError("itinerary must be non-empty")
    bad = [s for s in symbols if not 0 <= s < base.branch_count]
    if bad:
        raise TruncationError(f"symbols {bad} are not retained branches")
    return symbols


# -- constructors -------------------------------------------------------------


def uniform_partition(branches: int) -> MarkovPartition:
    return MarkovPartition(np.arange(branches + 1) / branches, np.arange(branches))


def make_base_map(
    kind: str = "uniform_linear",
    d: int = 16,
    branch_count: int | None = None,
    amplitude: float = 0.0,
    frequency: int = 1,
    kappa: float = 0.0,
    breakpoints: Sequence[float] | None = None,
    ratio: float = 15.0 / 16.0,
) -> BaseMap:
    """Build one of the supported base families."""
    if kind == "uniform_linear":
        T = branch_count or d
        return BaseMap(uniform_partition(T), kind, d=float(T), renyi=0.0)

    if kind == "perturbed_linear":
        T = branch_count or d
        f = float(frequency * T)
        w = 2.0 * np.pi * f
        floor = T - abs(amplitude) / w**2
        # analytic sup of |g''| / g'^2 over the family
        renyi = abs(amplitude) / w / floor**2
        return BaseMap(
            uniform_partition(T), kind, d=floor, renyi=renyi, amplitude=amplitude, frequency=f
        )

    if kind == "quadratic_branch":
        T = branch_count or d
        if not 0.0 < kappa < 1.0:
            raise StructureError("quadratic_branch needs 0 < kappa < 1")
        w = 2.0 * np.pi * frequency * T
        floor = T * (1.0 - kappa) - abs(amplitude) / w**2
        renyi = (2.0 * kappa * T**2 + abs(amplitude) / w) / floor**2
        return BaseMap(
            uniform_partition(T), kind, d=floor, renyi=renyi, kappa=kappa, amplitude=amplitude, frequency=float(frequency * T)
        )

    if kind == "custom_breakpoints":
        if breakpoints is None:
            raise StructureError("custom_breakpoints needs explicit breakpoints")
        partition = MarkovPartition(np.asarray(breakpoints, dtype=float), np.arange(len(breakpoints) - 1))
        return BaseMap(partition, kind, d=float(1.0 / partition.widths.max()), renyi=0.0)

    if kind == "countable_geometric":
        T = branch_count or 64
        # omega_k = (ratio**(k+1), ratio**k], listed right to left
        edges = ratio ** np.arange(T, -1, -1, dtype=float)
        partition = MarkovPartition(edges, np.arange(T - 1, -1, -1), tail_rule=f"geometric:{ratio}")
        return BaseMap(partition, kind, d=float(1.0 / partition.widths.max()), renyi=0.0)

    raise StructureError(f"unknown base kind {kind!r}")


# -- certificates -------------------------------------------------------------


def distortion_band(d: float, renyi: float) -> float:
    """exp(dK/(d-1)): the two-sided distortion and Gibbs factor."""
    return float(np.exp(d * renyi / (d - 1.0)))


def renyi_distortion_bound(eps: float, d: float, renyi: float) -> float:
    """Upper bound on the Renyi constant of an eps-C^3-close perturbation."""
    return eps / (d - eps) ** 2 + renyi / (1.0 - eps) ** 2


def branch_grid(base: BaseMap, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Interior grid nodes spread evenly over the retained branches, with their symbols."""
    per_branch = max(4, int(np.ceil(grid_size / base.branch_count)))
    u = (np.arange(per_branch) + 0.5) / per_branch
    symbols = np.repeat(np.arange(base.branch_count), per_branch)
    left, right = base.partition.bounds(symbols)
    theta = left + (right - left) * np.tile(u, base.branch_count)
    return theta, symbols


def renyi_constant(base: BaseMap, grid_size: int = 10_000) -> float:
    """Grid sup of |g''| / |g'|^2."""
    if grid_size < 1000:
        raise PreconditionError("renyi_constant needs grid_size >= 1000")
    theta, symbols = branch_grid(base, grid_size)
    ratio = np.abs(base._branch(symbols, theta, 2)) / base._branch(symbols, theta, 1) ** 2
    return float(ratio.max())


def expansion_floor(base: BaseMap, grid_size: int = 10_000) -> float:
    theta, symbols = branch_grid(base, grid_size)
    return float(np.abs(base._branch(symbols, theta, 1)).min())


def check_markov(base: BaseMap, tol: float = 1e-12) -> bool:
    """Every retained branch maps its interval onto (0,1]."""
    symbols = np.arange(base.branch_count)
    left, right = base.partition.bounds(symbols)
    at_left = base._branch(symbols, left, 0)
    at_right = base._branch(symbols, right, 0)
    ok = bool(np.all(np.abs(at_left) <= tol) and np.all(np.abs(at_right - 1.0) <= tol))
    if not ok:
        logger.warning("Markov check failed on %s base", base.kind)
    return ok


def lebesgue_log_derivative(base: BaseMap, grid_size: int = 10_000) -> float:
    """Integral of log|g'| over the retained branches (the L^1 condition, truncated)."""
    theta, symbols = branch_grid(base, grid_size)
    per_branch = theta.size // base.branch_count
    logs = np.log(np.abs(base._branch(symbols, theta, 1))).reshape(base.branch_count, per_branch)
    return float(np.sum(logs.mean(axis=1) * base.partition.widths))


def cylinder_length(base: BaseMap, itinerary: Sequence[int]) -> float:
    lo, hi = base.cylinder(itinerary)
    return hi - lo


def _in_cylinder(base: BaseMap, itinerary, theta: float) -> tuple[float, float]:
    lo, hi = base.cylinder(itinerary)
    if not lo < theta <= hi:
        raise PreconditionError(f"point {theta} is outside cylinder {tuple(itinerary)} = ({lo}, {hi}]")
    return lo, hi


def gibbs_check(base: BaseMap, itinerary: Sequence[int], theta_star: float) -> float:
    """Leb(omega) * |(g^n)'(theta_star)| for the depth-n cylinder omega."""
    lo, hi = _in_cylinder(base, itinerary, theta_star)
    return float((hi - lo) * base.iterate_derivative(theta_star, len(itinerary)))


def distortion_ratio(base: BaseMap, itinerary: Sequence[int], theta1: float, theta2: float) -> float:
    _in_cylinder(base, itinerary, theta1)
    _in_cylinder(base, itinerary, theta2)
    n = len(itinerary)
    return float(base.iterate_derivative(theta1, n) / base.iterate_derivative(theta2, n))


def rounding_allowance(length: float) -> float:
    """Relative error budget of a cylinder length computed from float endpoints."""
    return 8.0 * np.finfo(float).eps / max(length, np.finfo(float).tiny)


def random_itinerary(base: BaseMap, depth: int, rng: np.random.Generator) -> Itinerary:
    return tuple(int(s) for s in rng.integers(0, base.branch_count, size=depth))


# -- C^3 distance -------------------------------------------------------------

_FIBER_KEYS = ("f", "t", "tt", "ttt", "x", "xx", "tx")
_THETA_ORDER = {"f": 0, "t": 1, "tt": 2, "ttt": 3, "x": 0, "xx": 0, "tx": 1}


def _split(system):
    """(base, fiber) of a skew system, or (base, None) for a bare base map."""
    if isinstance(system, BaseMap):
        return system, None
    return system.base, system


def c3_distance(reference, candidate, grid_size: int = 2000, x_nodes: int = 33) -> float:
    """Max over branches of the C^3 distance between renormalized branch maps.

    ``reference`` and ``candidate`` are base maps or skew systems; for skew
    systems the fiber maps are compared on the reference trapping interval,
    derivatives up to third order in theta and second order in x.
    """
    ref_base, ref_fiber = _split(reference)
    cand_base, cand_fiber = _split(candidate)
    if ref_base.branch_count != cand_base.branch_count:
        raise StructureError(
            f"branch counts differ: {ref_base.branch_count} vs {cand_base.branch_count}"
        )
    theta, symbols = branch_grid(ref_base, grid_size)
    left, right = ref_base.partition.bounds(symbols)
    c_left, c_right = cand_base.partition.bounds(symbols)
    scale = (c_right - c_left) / (right - left)
    renorm = c_right + scale * (theta - right)

    distance = 0.0
    for order in range(4):
        diff = cand_base._branch(symbols, renorm, order) * scale**order - ref_base._branch(symbols, theta, order)
        distance = max(distance, float(np.abs(diff).max()))

    if ref_fiber is not None and cand_fiber is not None:
        lo, hi = ref_fiber.trap
        xs = np.linspace(lo, hi, x_nodes)
        tt, xx = np.meshgrid(theta, xs, indexing="ij")
        rr, _ = np.meshgrid(renorm, xs, indexing="ij")
        sc, _ = np.meshgrid(scale, xs, indexing="ij")
        ref_p = ref_fiber.fiber_partials(tt, xx)
        cand_p = cand_fiber.fiber_partials(rr, xx)
        for key in _FIBER_KEYS:
            diff = cand_p[key] * sc ** _THETA_ORDER[key] - ref_p[key]
            distance = max(distance, float(np.abs(diff).max()))
    return distance
