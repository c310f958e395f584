"""The `recurrence` experiment: return times, the deep-return tail, heavy returns and NUE/SR tails."""

import logging

import numpy as np

from dynamics.curves import constant_curve
from dynamics.recurrence import (
    ETA_MAX,
    ETA_RUNG_ALPHA,
    critical_order_check,
    deep_return_tail,
    deep_segment_check,
    expansion_constants,
    expansion_time_tails,
    fit_return_ladder,
    heavy_depth_tail,
    m_of_alpha,
    n_of_alpha,
)
from utils.parallel import sample_rng

from .builders import RunContext, build_skew

logger = logging.getLogger(__name__)


def _ladder(ctx: RunContext):
    cfg = ctx.settings.recurrence
    estimates = []
    for alpha in cfg.alpha_ladder:
        sys = build_skew(ctx.settings.skew, alpha=alpha)
        estimates.append(n_of_alpha(sys, cfg.samples, ctx.seed, cfg.return_cap, **ctx.parallel))
    fit = fit_return_ladder(estimates)
    ctx.table(
        [
            {
                "alpha": e.alpha, "n_hat": e.n_hat, "lower_bound": e.lower_bound,
                "eta": e.eta, "eta_in_range": e.eta_in_range, "m": m_of_alpha(e.alpha),
            }
            for e in sorted(estimates, key=lambda e: -e.alpha)
        ],
        "return_times",
    )
    ev = ctx.evaluator
    ev.check("n_of_alpha", "N(alpha) >= 2 on the ladder", min(fit.n_hats), 2, min(fit.n_hats) >= 2)
    ev.check("n_of_alpha", "N(alpha) nondecreasing as alpha shrinks", list(fit.n_hats), "monotone", fit.monotone)
    small = [e.eta for e in estimates if e.alpha <= ETA_RUNG_ALPHA]
    ev.check(
        "n_of_alpha", f"eta in (0, 1/3] for alpha <= {ETA_RUNG_ALPHA:g}", small, ETA_MAX, fit.etas_in_range,
        note="" if small else "no rung small enough",
    )
    ev.estimate("k0", fit.k0)
    ev.estimate("k1", fit.k1)
    ev.estimate("eta_fitted", list(fit.etas))


def run_recurrence(ctx: RunContext) -> None:
    ev = ctx.evaluator
    cfg = ctx.settings.recurrence
    curve_cfg = ctx.settings.curves
    sys = build_skew(ctx.settings.skew)
    cylinder_options = {
        "max_cylinders": curve_cfg.max_cylinders,
        "cylinder_samples": curve_cfg.cylinder_samples,
        "local_nodes": curve_cfg.local_nodes,
    }

    tail = deep_return_tail(sys, r_grid=cfg.r_grid, eta=cfg.eta, rng=sample_rng(ctx.seed, "cylinders", 0), **cylinder_options)
    ctx.table(
        [
            {
                "r": row.r, "measure": row.measure, "lower": row.lower, "upper": row.upper,
                "bound": row.bound, "valid": row.valid, "censored": row.censored,
            }
            for row in tail.rows
        ],
        "deep_return_tail",
    )
    ev.check("deep_return_tail", "log-measure slope in r <= -0.2", tail.slope, -0.2, tail.decays)
    ev.check("deep_return_tail", "rows nonincreasing within Wilson bands", [r.measure for r in tail.rows], "bands", tail.nonincreasing)
    within = all(row.measure <= row.bound for row in tail.rows)
    ev.check("deep_return_tail", "measure <= curve-strip bound", max(r.measure / r.bound for r in tail.rows), 1.0, within)
    ev.estimate("deep_tail_iterate", tail.iterate)

    curve = constant_curve(np.sqrt(sys.a0), sys.alpha, curve_cfg.nodes)
    hits, escapes = deep_segment_check(sys, curve, tail.iterate, 2, sample_rng(ctx.seed, "cylinders", 1), **cylinder_options)
    ev.check("deep_segment_check", "segments meeting J(2) stay inside J(1)", escapes, 0, escapes == 0, note=f"{hits} segment(s) met J(2)")

    _ladder(ctx)

    heavy = heavy_depth_tail(sys, cfg.n_grid, cfg.samples, ctx.seed, cfg.heavy_rate, cfg.eta, **ctx.parallel)
    tails = expansion_time_tails(
        sys, cfg.c_target, cfg.epsilon, cfg.delta, (0, *cfg.n_grid), cfg.samples, ctx.seed, **ctx.parallel
    )
    rows = []
    for k, n in enumerate(tails.n_grid):
        row = {"n": n, "tail_Ev": tails.tail_e[k], "tail_R": tails.tail_r[k]}
        row["heavy_fraction"] = heavy.fraction[heavy.n_grid.index(n)] if n in heavy.n_grid else float("nan")
        rows.append(row)
    ctx.table(rows, "expansion_tails")
    ev.check("heavy_depth_tail", "heavy-depth fraction decays in n", list(heavy.fraction), "nonincreasing", heavy.decays)
    ev.check("expansion_time_tails", "tail at n = 0 is 1", float(tails.tail_e[0]), 1.0, tails.tail_e[0] == 1.0 and tails.tail_r[0] == 1.0)
    ev.check(
        "expansion_time_tails", "E_v and R tails nonincreasing with negative sqrt(n) slope",
        [tails.slope_e, tails.slope_r], "< 0", tails.passes,
    )

    constants = expansion_constants(
        sys, cfg.samples, ctx.seed, cfg.kappa, cfg.delta1, cfg.expansion_horizon, **ctx.parallel
    )
    order = critical_order_check(sys, sample_rng(ctx.seed, "expansion", cfg.samples))
    for key in ("n_hat", "eta", "kappa", "delta1", "sigma1", "c2", "sigma2"):
        ev.estimate(f"expansion_{key}", getattr(constants, key))
    ev.estimate("critical_order_b", order.b)
    ev.estimate("critical_order_beta", order.beta)
    ev.estimate("critical_order_pairs", order.pairs)
    logger.info(f"recurrence: M={tail.iterate}, tail slope {tail.slope:.3f}, eta {constants.eta:.3f}")
