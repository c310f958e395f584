"""
Generalized Viana maps phi(theta, x) = (g(theta), a0 + alpha sin(2 pi theta) + b chi(theta) + s - x^2).
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import Polynomial
from scipy import optimize

from .base_map import BaseMap
from .errors import BracketError, PreconditionError, TrappingError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
DITHER = 2.0**-40
ESCAPE_TOL = 1e-9
MISIURE_BRACKET = (1.80, 1.85)

# (1 - u^2)^4 vanishes to fourth order at u = +-1, so the bump is C^3 on the line
_BUMP = [Polynomial([1.0, 0.0, -1.0]) ** 4]
for _ in range(3):
    _BUMP.append(_BUMP[-1].deriv())


@dataclass(frozen=True)
class FiberBump:
    """amplitude * chi((theta - center) / width), chi(0) = 1, support |u| < 1."""

    center: float
    width: float
    amplitude: float

    def derivative(self, theta, order: int = 0):
        u = (np.asarray(theta, dtype=float) - self.center) / self.width
        inside = np.abs(u) < 1.0
        value = np.where(inside, _BUMP[order](u), 0.0)
        return self.amplitude * value / self.width**order

    def c3_size(self, nodes: int = 4001) -> float:
        u = np.linspace(-1.0, 1.0, nodes)
        return max(
            float(np.abs(self.amplitude * _BUMP[k](u) / self.width**k).max()) for k in range(4)
        )


@dataclass(frozen=True, eq=False)
class VianaParams:
    a0: float
    alpha: float
    base: BaseMap
    bump: FiberBump | None = None
    shift: float = 0.0
    a0_kind: str = "numeric"

    def __post_init__(self):
        if not 0.0 < self.a0 <= 2.0:
            raise PreconditionError(f"a0 must lie in (0, 2], got {self.a0}")
        if self.alpha < 0.0:
            raise PreconditionError(f"alpha must be non-negative, got {self.alpha}")


@dataclass(frozen=True)
class TangentState:
    theta: float
    x: float
    v_theta: float
    v_x: float
    log_norm: float = 0.0
    degenerate: bool = False


@dataclass(frozen=True)
class MisiurewiczCertificate:
    a0: float
    cycle_point: float
    multiplier: float
    residual: float


@dataclass(frozen=True)
class TrappingReport:
    passed: bool
    slack: float
    lower: float
    upper: float


# -- the quadratic fiber family ----------------------------------------------


def quadratic(a: float, x):
    return a - np.asarray(x) ** 2


def misiurewicz_equation(a: float) -> float:
    """h^3(0) minus the negative point of the 2-cycle of h(x) = a - x^2."""
    return a - (a - a * a) ** 2 - (1.0 - np.sqrt(4.0 * a - 3.0)) / 2.0


def certify_misiurewicz(a0: float, tol: float = 1e-8) -> MisiurewiczCertificate:
    """Check that the critical orbit of a0 - x^2 lands on a repelling 2-cycle without being periodic."""
    if 4.0 * a0 - 3.0 <= 0.0:
        raise PreconditionError(f"h(x) = {a0} - x^2 has no real 2-cycle")
    cycle_point = (1.0 - np.sqrt(4.0 * a0 - 3.0)) / 2.0
    multiplier = 4.0 * (1.0 - a0)
    orbit = [0.0]
    for _ in range(3):
        orbit.append(float(quadratic(a0, orbit[-1])))
    if any(abs(p) <= tol for p in orbit[1:]):
        raise PreconditionError(f"critical point is periodic for a0={a0}, not pre-periodic")
    if abs(multiplier) <= 1.0:
        raise PreconditionError(f"2-cycle multiplier {multiplier} is not repelling")
    residual = abs(orbit[3] - cycle_point)
    if residual > tol:
        raise PreconditionError(f"h^3(0) misses the 2-cycle by {residual:.3e}")
    return MisiurewiczCertificate(a0, float(cycle_point), float(multiplier), float(residual))


def find_misiurewicz(combinatorics: str = "crit_to_period2", tol: float = 1e-12) -> float:
    """Bisection for the parameter whose critical orbit hits the repelling 2-cycle."""
    if combinatorics != "crit_to_period2":
        raise PreconditionError(f"unsupported combinatorics {combinatorics!r}")
    if tol > 1e-10:
        raise PreconditionError("find_misiurewicz needs tol <= 1e-10")
    lo, hi = MISIURE_BRACKET
    if np.sign(misiurewicz_equation(lo)) == np.sign(misiurewicz_equation(hi)):
        raise BracketError(f"no sign change of the Misiurewicz equation on [{lo}, {hi}]")
    a0 = optimize.bisect(misiurewicz_equation, lo, hi, xtol=tol)
    cert = certify_misiurewicz(a0)
    logger.debug("Misiurewicz parameter %.12f, 2-cycle multiplier %.4f", a0, cert.multiplier)
    return float(a0)


# -- the skew system ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SkewSystem:
    params: VianaParams
    trap: tuple[float, float]

    @property
    def base(self) -> BaseMap:
        return self.params.base

    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def a0(self) -> float:
        return self.params.a0

    def forcing(self, theta, order: int = 0):
        """order-th theta-derivative of the x-independent part of the fiber map."""
        theta = np.asarray(theta, dtype=float)
        p = self.params
        phase = TWO_PI * theta
        trig = (np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t))[order]
        value = p.alpha * TWO_PI**order * trig(phase)
        if order == 0:
            value = value + p.a0 + p.shift
        if p.bump is not None:
            value = value + p.bump.derivative(theta, order)
        return value

    def fiber(self, theta, x):
        return self.forcing(theta) - np.asarray(x, dtype=float) ** 2

    def fiber_partials(self, theta, x) -> dict:
        x = np.asarray(x, dtype=float)
        zeros = np.zeros(np.broadcast(np.asarray(theta), x).shape)
        return {
            "f": self.fiber(theta, x) + zeros,
            "t": self.forcing(theta, 1) + zeros,
            "tt": self.forcing(theta, 2) + zeros,
            "ttt": self.forcing(theta, 3) + zeros,
            "x": -2.0 * x + zeros,
            "xx": np.full_like(zeros, -2.0),
            "tx": zeros,
        }

    def step(self, theta, x):
        return self.base.eval(theta), self.fiber(theta, x)

    def iter_orbit(self, theta: float, x: float, n: int):
        lo, hi = self.trap
        for _ in range(n):
            theta, x = self.step(theta, x)
            if not lo - ESCAPE_TOL <= x <= hi + ESCAPE_TOL:
                logger.warning("orbit escaped the trap at x=%r", float(x))
                raise TrappingError(f"orbit left I0=[{lo}, {hi}] at x={float(x)}")
            yield float(theta), float(x)

    def orbit(self, theta: float, x: float, n: int) -> np.ndarray:
        """n forward iterates as an (n, 2) array; the start point is not included."""
        return np.array(list(self.iter_orbit(theta, x, n)), dtype=float).reshape(n, 2)

    def mc_step(self, theta, x, noise):
        """Dithered step for Monte Carlo kernels; ``noise`` has a trailing axis of length 2 in [0, 1)."""
        lo, hi = self.trap
        x_next = self.fiber(theta, x) + (noise[..., 1] - 0.5) * DITHER
        theta_next = self.base.advance(theta, (noise[..., 0] - 0.5) * DITHER)
        return theta_next, np.clip(x_next, lo, hi)

    def jacobian(self, theta: float, x: float) -> np.ndarray:
        """D phi at (theta, x); lower triangular because g does not see x."""
        partial = self.fiber_partials(theta, x)
        return np.array([
            [float(self.base.d1(theta)), 0.0],
            [float(partial["t"]), float(partial["x"])],
        ])

    def push_tangent(self, ts: TangentState) -> TangentState:
        w_theta, w_x = (float(w) for w in self.jacobian(ts.theta, ts.x) @ (ts.v_theta, ts.v_x))
        norm = float(np.hypot(w_theta, w_x))
        theta, x = self.step(ts.theta, ts.x)
        if norm == 0.0:
            return TangentState(float(theta), float(x), ts.v_theta, ts.v_x, ts.log_norm, True)
        return TangentState(float(theta), float(x), w_theta / norm, w_x / norm, ts.log_norm + np.log(norm))


def trap_excursions(params: VianaParams, grid: int = 100_000) -> tuple[float, float]:
    """Upward and downward sup of f(theta, 0) - a0 over theta."""
    unbounded = SkewSystem(params, (-np.inf, np.inf))
    theta = np.concatenate([(np.arange(grid) + 1.0) / grid, [0.25, 0.75]])
    if params.bump is not None:
        theta = np.append(theta, params.bump.center)
    excursion = unbounded.forcing(theta) - params.a0
    return float(max(excursion.max(), 0.0)), float(max(-excursion.min(), 0.0))


def check_trapping(sys: SkewSystem, grid_theta: int = 10_000, grid_x: int = 1000, tol: float = 1e-12) -> TrappingReport:
    """Largest distance by which f maps the grid out of I0 (0 means pass).

    x -> f is even and decreasing in |x|, so the extremes come from x = 0 (if
    inside) and the endpoints; the x-grid is checked as well.
    """
    lo, hi = sys.trap
    theta = np.concatenate([(np.arange(grid_theta) + 1.0) / grid_theta, [0.25, 0.75]])
    if sys.params.bump is not None:
        theta = np.append(theta, sys.params.bump.center)
    candidates = [lo, hi, -lo, -hi]
    if lo <= 0.0 <= hi:
        candidates.append(0.0)
    xs = np.concatenate([np.linspace(lo, hi, grid_x), [c for c in candidates if lo <= c <= hi]])
    forcing = sys.forcing(theta)
    squares = xs**2
    f_max = forcing.max() - squares.min()
    f_min = forcing.min() - squares.max()
    slack = float(max(0.0, lo - f_min, f_max - hi))
    return TrappingReport(passed=slack <= tol, slack=slack, lower=float(f_min), upper=float(f_max))


def trapping_interval(params: VianaParams, grid_theta: int = 10_000, grid_x: int = 1000) -> tuple[float, float]:
    """The tight forward-invariant interval [a0 - l - x_hi^2, x_hi], x_hi = a0 + u.

    u and l are the upward and downward excursions of f(theta, 0) - a0. For
    the pure sine family u = l = alpha and the lower end is
    h^2(0) - (1 + 2 a0) alpha - alpha^2.
    """
    up, down = trap_excursions(params)
    hi = params.a0 + up
    lo = params.a0 - down - hi * hi
    report = check_trapping(SkewSystem(params, (lo, hi)), grid_theta, grid_x)
    if not report.passed:
        logger.warning("trap check failed for a0=%.6f alpha=%.3g (slack %.3e)", params.a0, params.alpha, report.slack)
        raise TrappingError(
            f"alpha={params.alpha} is too large for a0={params.a0}: f leaves I0=[{lo:.6f}, {hi:.6f}] "
            f"by {report.slack:.3e}; shrink alpha",
            slack=report.slack,
        )
    return float(lo), float(hi)


def build_system(params: VianaParams, grid_theta: int = 10_000, grid_x: int = 1000) -> SkewSystem:
    return SkewSystem(params, trapping_interval(params, grid_theta, grid_x))


def with_trap(sys: SkewSystem, trap: tuple[float, float]) -> SkewSystem:
    return replace(sys, trap=(float(trap[0]), float(trap[1])))


def sample_trap(sys: SkewSystem, rng: np.random.Generator, size=None) -> tuple[np.ndarray, np.ndarray]:
    """Lebesgue-random points of (0,1] x I0."""
    lo, hi = sys.trap
    theta = sys.base.sample(rng, size)
    x = lo + (hi - lo) * rng.random(size)
    return theta, x


def tangent_orbit(sys: SkewSystem, theta, x, noise, v=(1.0, 1.0)) -> dict:
    """Vectorized log-norm sums along dithered orbits.

    ``noise`` has shape (n, samples, 2). Returns per-sample sums of log|g'|,
    log|d_x f| and the renormalized log-norm of the generic vector ``v``, plus
    a mask of samples that hit the critical line exactly.
    """
    theta = np.array(theta, dtype=float)
    x = np.array(x, dtype=float)
    base_sum = np.zeros_like(theta)
    fiber_sum = np.zeros_like(theta)
    generic_sum = np.zeros_like(theta)
    degenerate = np.zeros(theta.shape, dtype=bool)
    v_theta = np.full_like(theta, v[0])
    v_x = np.full_like(theta, v[1])
    norm0 = np.hypot(v_theta, v_x)
    v_theta, v_x = v_theta / norm0, v_x / norm0
    for k in range(noise.shape[0]):
        g1 = sys.base.d1(theta)
        fx = -2.0 * x
        hit = fx == 0.0
        degenerate |= hit
        base_sum += np.log(np.abs(g1))
        fiber_sum += np.log(np.where(hit, 1.0, np.abs(fx)))
        w_theta = g1 * v_theta
        w_x = sys.forcing(theta, 1) * v_theta + fx * v_x
        norm = np.hypot(w_theta, w_x)
        norm = np.where(norm == 0.0, 1.0, norm)
        generic_sum += np.log(norm)
        v_theta, v_x = w_theta / norm, w_x / norm
        theta, x = sys.mc_step(theta, x, noise[k])
    return {
        "base": base_sum,
        "fiber": fiber_sum,
        "generic": generic_sum,
        "degenerate": degenerate,
        "theta": theta,
        "x": x,
    }


def dithered_orbit(sys: SkewSystem, theta, x, noise) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates along dithered orbits, shape (n, samples) each; row 0 is the start."""
    n = noise.shape[0]
    theta = np.array(theta, dtype=float)
    x = np.array(x, dtype=float)
    thetas = np.empty((n,) + theta.shape)
    xs = np.empty((n,) + x.shape)
    for k in range(n):
        thetas[k], xs[k] = theta, x
        theta, x = sys.mc_step(theta, x, noise[k])
    return thetas, xs


def count_escapes(sys: SkewSystem, rng: np.random.Generator, points: int = 1000, steps: int = 1000) -> int:
    """Exact fiber steps from Lebesgue-random trap points that land outside I0; theta is dithered."""
    lo, hi = sys.trap
    theta, x = sample_trap(sys, rng, points)
    escapes = 0
    for _ in range(steps):
        x = sys.fiber(theta, x)
        theta = sys.base.advance(theta, (rng.random(points) - 0.5) * DITHER)
        outside = (x < lo - ESCAPE_TOL) | (x > hi + ESCAPE_TOL)
        escapes += int(outside.sum())
        x = np.clip(x, lo, hi)
    return escapes
