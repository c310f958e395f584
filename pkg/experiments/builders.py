"""Turn validated settings into dynamical systems, and the per-run context the runners share."""

import logging
import os
from dataclasses import dataclass

import pandas as pd

from config.schema import MISIUREWICZ_TAG, BaseMapSettings, ExperimentSettings, FiberedSettings, SkewSettings
from dynamics.base_map import BaseMap, make_base_map
from dynamics.fibered import FiberedSystem
from dynamics.skew import FiberBump, SkewSystem, VianaParams, build_system, find_misiurewicz
from utils.evaluator import ContractEvaluator
from utils.tables import write_table

logger = logging.getLogger(__name__)


def build_base(settings: BaseMapSettings) -> BaseMap:
    return make_base_map(
        kind=settings.kind,
        d=settings.d,
        branch_count=settings.branch_count,
        amplitude=settings.perturbation.amplitude,
        frequency=settings.perturbation.frequency,
        kappa=settings.kappa,
        breakpoints=settings.breakpoints,
        ratio=settings.ratio,
    )


def resolve_a0(value: float | str) -> tuple[float, str]:
    if value == MISIUREWICZ_TAG:
        return find_misiurewicz("crit_to_period2"), "misiurewicz"
    return float(value), "numeric"


def build_params(settings: SkewSettings, alpha: float | None = None, a0: float | None = None) -> VianaParams:
    a0_kind = "numeric"
    if a0 is None:
        a0, a0_kind = resolve_a0(settings.a0)
    bump = None
    if settings.bump is not None:
        bump = FiberBump(settings.bump.center, settings.bump.width, settings.bump.amplitude)
    return VianaParams(
        a0=a0,
        alpha=settings.alpha if alpha is None else alpha,
        base=build_base(settings.base),
        bump=bump,
        shift=settings.shift,
        a0_kind=a0_kind,
    )


def build_skew(settings: SkewSettings, alpha: float | None = None, a0: float | None = None) -> SkewSystem:
    params = build_params(settings, alpha, a0)
    sys = build_system(params, settings.trapping.grid_theta, settings.trapping.grid_x)
    logger.info(f"Built Viana system a0={params.a0:.10f} alpha={params.alpha:g} trap=[{sys.trap[0]:.6f}, {sys.trap[1]:.6f}]")
    return sys


def build_chebyshev(settings: SkewSettings) -> SkewSystem:
    """The decoupled control a0 = 2, alpha = 0 over the configured base."""
    return build_skew(settings.model_copy(update={"bump": None, "shift": 0.0}), alpha=0.0, a0=2.0)


def build_fibered(settings: FiberedSettings, epsilon: float | None = None) -> FiberedSystem:
    return FiberedSystem(
        base=build_base(settings.base),
        c=settings.c,
        epsilon=settings.epsilon if epsilon is None else epsilon,
        coupling_kind=settings.coupling.kind,
        bump_center=settings.coupling.center,
        bump_width=settings.coupling.width,
    )


@dataclass
class RunContext:
    settings: ExperimentSettings
    evaluator: ContractEvaluator
    output_dir: str

    @property
    def seed(self) -> int:
        return self.settings.run.seed

    @property
    def parallel(self) -> dict:
        """Keyword arguments shared by every sample-parallel estimator."""
        return {"workers": self.settings.run.workers, "chunk_size": self.settings.run.chunk_size}

    def table(self, rows, name: str) -> str:
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
        path = write_table(frame, self.output_dir, name)
        self.evaluator.add_table(path)
        return path

    def subdir(self, name: str) -> str:
        return os.path.join(self.output_dir, name)
