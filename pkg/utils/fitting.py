import numpy as np
from scipy import stats


def line_fit(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return float("nan"), float("nan")
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(slope), float(intercept)


def stretched_exp_fit(lags, values, floor: float = 0.0) -> tuple[float, float]:
    """Fit |values| ~ C exp(-tau sqrt(lag)) over the entries above ``floor``; (C, tau)."""
    lags = np.asarray(lags, dtype=float)
    mags = np.abs(np.asarray(values, dtype=float))
    keep = (lags > 0) & (mags > floor)
    if keep.sum() < 3:
        return float("nan"), float("nan")
    slope, intercept = line_fit(np.sqrt(lags[keep]), np.log(mags[keep]))
    return float(np.exp(intercept)), float(-slope)


def log_tail_slope(grid, tail, against: str = "sqrt") -> float:
    """Slope of log(tail) against sqrt(n) (or n, or r) over the positive entries."""
    grid = np.asarray(grid, dtype=float)
    tail = np.asarray(tail, dtype=float)
    keep = tail > 0
    x = np.sqrt(grid[keep]) if against == "sqrt" else grid[keep]
    slope, _ = line_fit(x, np.log(tail[keep]))
    return slope


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def nonincreasing_within(lower, upper) -> bool:
    """A sequence is nonincreasing up to noise if no lower band rises above an earlier upper band."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    running_min_upper = np.minimum.accumulate(upper)
    return bool(np.all(lower[1:] <= running_min_upper[:-1] + 1e-15))


def l1_distance(p, q) -> float:
    return float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())
