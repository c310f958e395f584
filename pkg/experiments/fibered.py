"""Runners for `fibered` (hyperbolic fibers over an expanding base) and `coexistence`."""

import logging

import numpy as np

from dynamics.errors import NonHyperbolicError
from dynamics.fibered import (
    build_trap,
    coexistence_demo,
    critical_capture,
    fiber_exponent,
    find_attractors,
    srb_by_cycle,
    trap_escapes,
)
from utils.parallel import sample_rng

from .builders import RunContext, build_fibered, build_params

logger = logging.getLogger(__name__)

PAIRING_TOL = 1e-6
EXPONENT_SLACK = 0.05
CONTROL_TOL = 0.02
MARGINAL_TOL = 0.02
CENTRAL_CEILING = -0.1
POSITIVE_FLOOR = 0.95
ESCAPE_POINTS = 1000
ESCAPE_BLOCKS = 1000
# c = 2 is the Chebyshev fiber: its critical orbit lands on a repelling fixed point
NON_HYPERBOLIC_PROBE = 2.0


def run_fibered(ctx: RunContext) -> None:
    ev = ctx.evaluator
    cfg = ctx.settings.fibered
    fs = build_fibered(cfg)
    attractors = find_attractors(cfg.c, cfg.max_period)
    trap = build_trap(fs, attractors)
    ev.check(
        "build_trap", "T_x^N maps U strictly inside itself with lambda < 1",
        {"radius": trap.radius, "lambda": trap.lam, "margin": trap.margin}, "margin > 0, lambda < 1",
        trap.margin > 0.0 and trap.lam < 1.0,
    )
    coupling = fs.coupling_c3()
    ev.check("coupling", "measured C^3 size <= epsilon", coupling, cfg.epsilon, coupling <= cfg.epsilon * (1.0 + 1e-9))

    summaries = srb_by_cycle(
        fs, trap, attractors, n=cfg.n, base_samples=cfg.base_samples, seed=ctx.seed, burn_in=cfg.burn_in, **ctx.parallel
    )
    rows = []
    ceiling = float(np.log(trap.lam)) + EXPONENT_SLACK
    for attractor, s in zip(attractors, summaries):
        rows.append({
            "period": attractor.period, "multiplier": attractor.multiplier, "y0": s.y0, "n": s.n,
            "average_y": s.average_y, "average_x": s.average_x, "pairing_gap": s.pairing_gap,
            "x_marginal_l1": s.x_marginal_l1, "fiber_exponent": s.fiber_exponent,
            "worst_exponent": s.worst_exponent, "base_exponent": s.base_exponent,
        })
        ev.check("srb_pushforward", "Birkhoff averages from two starts in U agree", s.pairing_gap, PAIRING_TOL, s.pairing_gap <= PAIRING_TOL)
        ev.check("fiber_exponent", "trapped exponents <= log lambda + 0.05", s.worst_exponent, ceiling, s.worst_exponent <= ceiling)
        ev.check("srb_pushforward", "x-marginal is Lebesgue in L1", s.x_marginal_l1, MARGINAL_TOL, s.x_marginal_l1 <= MARGINAL_TOL)
        ev.check("srb_pushforward", "base exponent positive", s.base_exponent, 0.0, s.base_exponent > 0.0)
    ctx.table(rows, "fibered")

    decoupled = build_fibered(cfg, epsilon=0.0)
    star = attractors[0].cycle[0]
    control = fiber_exponent(decoupled, build_trap(decoupled, attractors), 0.5, star, cfg.n)
    expected = float(np.log(abs(attractors[0].multiplier)) / attractors[0].period)
    ev.check(
        "fiber_exponent", "epsilon=0 exponent at the cycle = log|multiplier| per step",
        control.value, f"{expected:.4f} +- {CONTROL_TOL}", abs(control.value - expected) <= CONTROL_TOL,
    )

    escapes = trap_escapes(fs, trap, sample_rng(ctx.seed, "fibered", cfg.base_samples), ESCAPE_POINTS, ESCAPE_BLOCKS)
    ev.check("build_trap", "random trapped steps never exit U", escapes, 0, escapes == 0)
    capture = critical_capture(fs, trap, cfg.capture_radius)
    ev.check("critical_capture", "psi^K(X x V) lands in U", capture.steps, "finite K", capture.steps is not None)

    try:
        find_attractors(NON_HYPERBOLIC_PROBE)
        flagged = False
    except NonHyperbolicError:
        flagged = True
    ev.check("find_attractors", "c = 2 is flagged non-hyperbolic", flagged, True, flagged)
    ev.estimate("trap_components", [list(c) for c in trap.components])
    ev.estimate("trap_n", trap.n)
    ev.estimate("srb_cycles", len(summaries))


def run_coexistence(ctx: RunContext) -> None:
    ev = ctx.evaluator
    cfg = ctx.settings.coexistence
    params = build_params(ctx.settings.skew)
    report = coexistence_demo(
        params,
        branch=cfg.branch,
        target=cfg.target,
        window=tuple(cfg.window),
        width=cfg.width,
        n=cfg.n,
        samples=cfg.samples,
        seed=ctx.seed,
        central_steps=cfg.central_steps,
        **ctx.parallel,
    )
    ctx.table(
        [{
            "branch": report.branch, "fixed_point": report.fixed_point, "bump_amplitude": report.bump.amplitude,
            "bump_width": report.bump.width, "tuned_parameter": report.tuned_parameter,
            "period": report.attractor.period, "multiplier": report.attractor.multiplier,
            "central_exponent": report.central_exponent, "fraction_positive": report.fraction_positive,
            "samples": report.samples, "bump_c3": report.bump_c3, "c3_distance": report.c3_distance,
        }],
        "coexistence",
    )
    ev.check("coexistence_demo", "central exponent along the p* fiber <= -0.1", report.central_exponent, CENTRAL_CEILING, report.central_exponent <= CENTRAL_CEILING)
    ev.check("coexistence_demo", "Lebesgue-random fiber exponents >= 95% positive", report.fraction_positive, POSITIVE_FLOOR, report.fraction_positive >= POSITIVE_FLOOR)
    ev.check("find_attractors", "tuned fiber map is hyperbolic", report.attractor.multiplier, "|m| < 1", abs(report.attractor.multiplier) < 1.0)
    ev.estimate("bump_c3", report.bump_c3)
    ev.estimate("c3_distance", report.c3_distance)
