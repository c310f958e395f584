from .curves import run_curves
from .fibered import run_coexistence, run_fibered
from .recurrence import run_recurrence
from .statistics import run_clt, run_correlations, run_density, run_ldp, run_lyapunov

experiments = {
    "curves": run_curves,
    "recurrence": run_recurrence,
    "lyapunov": run_lyapunov,
    "density": run_density,
    "correlations": run_correlations,
    "ldp": run_ldp,
    "clt": run_clt,
    "fibered": run_fibered,
    "coexistence": run_coexistence,
}

__all__ = ["experiments"]
