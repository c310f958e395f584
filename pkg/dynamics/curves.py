"""
Admissible curves: graphs over (0,1] with |Y'| <= alpha and |Y''| <= alpha.

Derivative arrays are propagated by the exact pushforward recursions, never by
numerical differentiation, so every admissibility statement is exact at the
grid nodes.
"""

import logging
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .base_map import distortion_band
from .errors import PreconditionError
from .skew import SkewSystem

logger = logging.getLogger(__name__)

DEFAULT_NODES = 100_000
ADMISSIBLE_TOL = 1e-12


def uniform_grid(nodes: int) -> np.ndarray:
    """Right-closed uniform grid (k+1)/G of (0,1]."""
    return (np.arange(nodes) + 1.0) / nodes


@dataclass(frozen=True)
class CurveProfile:
    """Closed-form graph level + slope*s + curvature*s^2/2 + amp*sin(omega*theta + phase), s = theta - 1/2."""

    level: float
    slope: float = 0.0
    curvature: float = 0.0
    amp: float = 0.0
    omega: float = 2.0 * np.pi
    phase: float = 0.0

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = theta - 0.5
        arg = self.omega * theta + self.phase
        y = self.level + self.slope * s + 0.5 * self.curvature * s * s + self.amp * np.sin(arg)
        dy = self.slope + self.curvature * s + self.amp * self.omega * np.cos(arg)
        d2y = self.curvature - self.amp * self.omega**2 * np.sin(arg)
        return y, dy, d2y


@dataclass(frozen=True, eq=False)
class AdmissibleCurve:
    theta: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    d2y: np.ndarray
    alpha: float
    profile: CurveProfile | None = None

    @classmethod
    def from_profile(cls, profile: CurveProfile, alpha: float, nodes: int = DEFAULT_NODES) -> "AdmissibleCurve":
        theta = uniform_grid(nodes)
        y, dy, d2y = profile(theta)
        return cls(theta, y, dy, d2y, alpha, profile)

    def evaluate(self, theta):
        """(Y, Y', Y'') anywhere on (0,1]; exact for profiled curves, Hermite-interpolated otherwise."""
        if self.profile is not None:
            return self.profile(theta)
        spline = CubicHermiteSpline(self.theta, self.y, self.dy, extrapolate=True)
        return spline(theta), spline(theta, 1), spline(theta, 2)

    def is_admissible(self, trap: tuple[float, float] | None = None, tol: float = ADMISSIBLE_TOL) -> bool:
        bound = self.alpha * (1.0 + tol)
        ok = bool(np.abs(self.dy).max() <= bound and np.abs(self.d2y).max() <= bound)
        if trap is not None:
            ok = ok and bool(self.y.min() >= trap[0] and self.y.max() <= trap[1])
        return ok


def constant_curve(level: float, alpha: float, nodes: int = DEFAULT_NODES) -> AdmissibleCurve:
    return AdmissibleCurve.from_profile(CurveProfile(level=level), alpha, nodes)


def random_admissible(
    alpha: float, trap: tuple[float, float], rng: np.random.Generator, nodes: int = DEFAULT_NODES
) -> AdmissibleCurve:
    """A random profiled curve inside the trap, rescaled so the tighter of |Y'| <= alpha, |Y''| <= alpha is met with equality."""
    k = int(rng.integers(1, 4))
    omega = 2.0 * np.pi * k
    lo, hi = trap
    profile = CurveProfile(
        level=float(rng.uniform(lo + alpha, hi - alpha)),
        slope=float(rng.uniform(-1.0, 1.0)),
        curvature=float(rng.uniform(-1.0, 1.0)),
        amp=float(rng.uniform(0.0, 1.0) / omega**2),
        omega=omega,
        phase=float(rng.uniform(0.0, 2.0 * np.pi)),
    )
    _, dy, d2y = profile(uniform_grid(nodes))
    peak = max(float(np.abs(dy).max()), float(np.abs(d2y).max()))
    scale = alpha / peak if peak > 0.0 else 0.0
    profile = replace(profile, slope=profile.slope * scale, curvature=profile.curvature * scale, amp=profile.amp * scale)
    return AdmissibleCurve.from_profile(profile, alpha, nodes)


def extremal_admissible(
    alpha: float, trap: tuple[float, float], edge: str = "upper", nodes: int = DEFAULT_NODES
) -> AdmissibleCurve:
    """Y'' = +-alpha with Y' sweeping [0, alpha], touching the upper or lower trap edge at theta = 1."""
    if edge not in ("upper", "lower"):
        raise PreconditionError(f"edge must be 'upper' or 'lower', got {edge!r}")
    sign = 1.0 if edge == "upper" else -1.0
    # Y - level runs over [-alpha/8, 3 alpha/8] (times sign)
    pad = (0.375 + ADMISSIBLE_TOL) * alpha
    level = trap[1] - pad if edge == "upper" else trap[0] + pad
    profile = CurveProfile(level=level, slope=sign * 0.5 * alpha, curvature=sign * alpha)
    return AdmissibleCurve.from_profile(profile, alpha, nodes)


@dataclass(frozen=True, eq=False)
class PushedCurve:
    """phi of an admissible curve over one branch, in both parametrizations."""

    branch: int
    source_theta: np.ndarray
    image_theta: np.ndarray
    value: np.ndarray
    image_d1: np.ndarray
    image_d2: np.ndarray
    source_d1: np.ndarray
    source_d2: np.ndarray
    alpha: float

    @property
    def max_d1_ratio(self) -> float:
        return float(np.abs(self.image_d1).max() / self.alpha)

    @property
    def max_d2_ratio(self) -> float:
        return float(np.abs(self.image_d2).max() / self.alpha)

    def is_admissible(self, tol: float = ADMISSIBLE_TOL) -> bool:
        return self.max_d1_ratio <= 1.0 + tol and self.max_d2_ratio <= 1.0 + tol


def _source_derivatives(sys: SkewSystem, theta, y, dy, d2y):
    p = sys.fiber_partials(theta, y)
    d1 = p["t"] + p["x"] * dy
    d2 = p["tt"] + 2.0 * p["tx"] * dy + p["xx"] * dy * dy + p["x"] * d2y
    return p["f"], d1, d2


def push_curve(sys: SkewSystem, curve: AdmissibleCurve, branch: int) -> PushedCurve:
    """Image of the curve restricted to one branch, by the exact recursions."""
    symbols = sys.base.branch_index(curve.theta)
    mask = symbols == branch
    if not mask.any():
        raise PreconditionError(f"no grid nodes fall in branch {branch}")
    theta = curve.theta[mask]
    value, src_d1, src_d2 = _source_derivatives(sys, theta, curve.y[mask], curve.dy[mask], curve.d2y[mask])
    g1 = sys.base.d1(theta)
    g2 = sys.base.d2(theta)
    img_d1 = src_d1 / g1
    img_d2 = (src_d2 - img_d1 * g2) / g1**2
    return PushedCurve(
        branch=int(branch),
        source_theta=theta,
        image_theta=sys.base.eval(theta),
        value=value,
        image_d1=img_d1,
        image_d2=img_d2,
        source_d1=src_d1,
        source_d2=src_d2,
        alpha=curve.alpha,
    )


def push_all(sys: SkewSystem, curve: AdmissibleCurve) -> Iterator[PushedCurve]:
    """Lazily push the curve over every retained branch."""
    for branch in range(sys.base.branch_count):
        yield push_curve(sys, curve, branch)


def parametrization_gap(sys: SkewSystem, pushed: PushedCurve) -> float:
    """Relative mismatch between the source derivatives and the chain rule applied to the image ones."""
    g1 = sys.base.d1(pushed.source_theta)
    g2 = sys.base.d2(pushed.source_theta)
    gap1 = np.abs(pushed.source_d1 - pushed.image_d1 * g1)
    gap2 = np.abs(pushed.source_d2 - (pushed.image_d2 * g1**2 + pushed.image_d1 * g2))
    scale = max(float(np.abs(pushed.source_d1).max()), float(np.abs(pushed.source_d2).max()), 1e-300)
    return float(max(gap1.max(), gap2.max()) / scale)


def _require_sine_family(sys: SkewSystem):
    if sys.params.bump is not None:
        raise PreconditionError("the transversality constants hold for the pure sine fiber family only")


def transversality_margin(sys: SkewSystem, curve: AdmissibleCurve) -> np.ndarray:
    """Pointwise max(|Y1'| - alpha/2, |Y1''| - 4 alpha) in the source parametrization."""
    _require_sine_family(sys)
    _, d1, d2 = _source_derivatives(sys, curve.theta, curve.y, curve.dy, curve.d2y)
    alpha = curve.alpha
    return np.maximum(np.abs(d1) - 0.5 * alpha, np.abs(d2) - 4.0 * alpha)


def transversality_check(sys: SkewSystem, curve: AdmissibleCurve) -> float:
    """Worst transversality margin over the grid; non-negative means the dichotomy holds."""
    return float(transversality_margin(sys, curve).min())


# -- strip measures -----------------------------------------------------------


@dataclass(frozen=True)
class StripEstimate:
    j: int
    lower: float
    upper: float
    estimate: float
    bound: float
    grid_error: float
    constant: float
    applicable: bool
    resolution_warning: bool

    @property
    def within_bound(self) -> bool:
        return self.estimate <= self.bound + self.grid_error


def occupation(theta: np.ndarray, values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """theta-length on which the piecewise-linear interpolant of ``values`` lies in [lo, hi], per row."""
    t0, t1 = theta[..., :-1], theta[..., 1:]
    v0, v1 = values[..., :-1], values[..., 1:]
    vmin, vmax = np.minimum(v0, v1), np.maximum(v0, v1)
    spread = vmax - vmin
    overlap = np.clip(np.minimum(vmax, hi) - np.maximum(vmin, lo), 0.0, None)
    flat_inside = ((v0 >= lo) & (v0 <= hi)).astype(float)
    fraction = np.where(spread > 0.0, overlap / np.where(spread > 0.0, spread, 1.0), flat_inside)
    return np.sum(fraction * (t1 - t0), axis=-1)


def monotone_pieces(values: np.ndarray) -> np.ndarray:
    steps = np.sign(np.diff(values, axis=-1))
    return 1 + np.count_nonzero(steps[..., 1:] * steps[..., :-1] < 0, axis=-1)


@dataclass(frozen=True, eq=False)
class PushedPieces:
    """x-coordinates of phi^j along the curve, one row per sampled cylinder of depth j-1."""

    theta: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    pieces: np.ndarray

    def measure(self, lo: float, hi: float) -> float:
        return float(np.sum(self.weights * occupation(self.theta, self.values, lo, hi)))

    @property
    def grid_error(self) -> float:
        spacing = np.abs(self.theta[:, -1] - self.theta[:, 0]) / (self.theta.shape[1] - 1)
        return float(np.sum(self.weights * spacing * (self.pieces + 1)))

    @property
    def resolution_warning(self) -> bool:
        return bool(np.any(self.pieces > self.theta.shape[1] // 8))


def pushed_pieces(
    sys: SkewSystem,
    curve: AdmissibleCurve,
    j: int,
    rng: np.random.Generator | None = None,
    max_cylinders: int = 256,
    cylinder_samples: int = 64,
    local_nodes: int = 512,
    depth: int | None = None,
) -> PushedPieces:
    """x_j along the curve; rows are cylinders of ``depth`` (default j-1), depth 0 is the curve grid."""
    if j < 1:
        raise PreconditionError("strip measures need j >= 1")
    depth = j - 1 if depth is None else int(depth)
    if not 0 <= depth <= j:
        raise PreconditionError(f"cylinder depth {depth} must lie in [0, {j}]")
    base = sys.base
    if depth == 0:
        theta = curve.theta[None, :]
        values = sys.fiber(curve.theta, curve.y)[None, :]
        span = theta[0, -1] - theta[0, 0]
        weights = np.array([(base.partition.upper - base.partition.lower) / span])
        return PushedPieces(theta, values, weights, monotone_pieces(values))

    total = base.branch_count**depth
    if total <= max_cylinders:
        codes = np.arange(total)
        itineraries = np.stack([(codes // base.branch_count**k) % base.branch_count for k in range(depth)][::-1], axis=1)
        scale = 1.0
    else:
        if rng is None:
            raise PreconditionError("sampling deep cylinders needs a random generator")
        itineraries = rng.integers(0, base.branch_count, size=(cylinder_samples, depth))
        scale = total / cylinder_samples

    local = np.concatenate([[0.0], uniform_grid(local_nodes)])
    y = np.broadcast_to(local, (itineraries.shape[0], local.size)).copy()
    for level in range(depth - 1, -1, -1):
        y = base.inverse(itineraries[:, level][:, None], y)
    lengths = y[:, -1] - y[:, 0]
    theta = y[:, 1:]
    # the first column only fixed the left cylinder end
    ys, _, _ = curve.evaluate(theta)
    th, x = theta, ys
    for step in range(j):
        x = sys.fiber(th, x)
        if step < j - 1:
            th = base.eval(th)
    span = theta[:, -1] - theta[:, 0]
    weights = scale * lengths / np.where(span > 0.0, span, 1.0)
    return PushedPieces(theta, x, weights, monotone_pieces(x))


def strip_constant(sys: SkewSystem) -> float:
    """6 exp(dK/(d-1)): the strip constant corrected for distortion (the 6K reading is ambiguous)."""
    return 6.0 * distortion_band(sys.base.d, sys.base.renyi)


def strip_bound(j: int, width: float, alpha: float, constant: float) -> float:
    ratio = width / alpha
    if j == 1:
        return 6.0 * ratio + 2.0 * np.sqrt(ratio)
    return constant * np.sqrt(ratio)


def strip_measure(
    sys: SkewSystem,
    curve: AdmissibleCurve,
    j: int,
    interval: tuple[float, float],
    rng: np.random.Generator | None = None,
    pieces: PushedPieces | None = None,
    **cylinder_options,
) -> StripEstimate:
    """Leb{theta : x-coordinate of phi^j(theta, Y(theta)) in I} against the transversality bounds."""
    lo, hi = float(interval[0]), float(interval[1])
    if hi < lo:
        raise PreconditionError(f"empty interval [{lo}, {hi}]")
    if pieces is None:
        pieces = pushed_pieces(sys, curve, j, rng, **cylinder_options)
    width = hi - lo
    constant = strip_constant(sys)
    warning = pieces.resolution_warning
    if warning:
        logger.warning("strip grid is coarse for j=%d: crossing count near the node limit", j)
    return StripEstimate(
        j=j,
        lower=lo,
        upper=hi,
        estimate=pieces.measure(lo, hi),
        bound=float(strip_bound(j, width, curve.alpha, constant)),
        grid_error=pieces.grid_error,
        constant=constant,
        applicable=width <= curve.alpha,
        resolution_warning=warning,
    )
