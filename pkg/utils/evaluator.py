import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np


@dataclass
class ContractCheck:
    """One pass/fail line: which operation produced the estimate and which contract it is held to."""

    operation: str
    contract: str
    estimate: Any
    tolerance: Any
    passed: bool
    note: str = ""


@dataclass
class ExperimentReport:
    experiment: str
    config_hash: str
    seed: int
    workers: int
    version: str
    checks: List[ContractCheck] = field(default_factory=list)
    estimates: Dict[str, Any] = field(default_factory=dict)
    tables: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def _plain(value):
    """JSON-friendly copy of numpy scalars and arrays."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


class ContractEvaluator:
    """
    Collects contract checks for one experiment run and writes the summary.
    Every check is logged as it is recorded, failures with their tolerance.
    """

    def __init__(self, experiment: str, config_hash: str, seed: int, workers: int, version: str, logger=None):
        self.logger = logger
        if not self.logger:
            raise ValueError("Logger must be provided to ContractEvaluator")
        self.report = ExperimentReport(experiment, config_hash, seed, workers, version)

    def check(
        self, operation: str, contract: str, estimate, tolerance, passed: bool, note: str = ""
    ) -> ContractCheck:
        result = ContractCheck(operation, contract, _plain(estimate), _plain(tolerance), bool(passed), note)
        self.report.checks.append(result)
        self.log_check(result)
        return result

    def estimate(self, key: str, value) -> None:
        """Record a reported (not asserted) quantity."""
        self.report.estimates[key] = _plain(value)

    def add_table(self, path: str) -> None:
        self.report.tables.append(os.path.basename(path))

    def log_check(self, check: ContractCheck) -> None:
        status = "✅" if check.passed else "❌"
        self.logger.info(f"{status} {check.operation}: {check.contract}")
        self.logger.info(f"  - estimate: {check.estimate} (tolerance {check.tolerance})")
        if check.note:
            self.logger.info(f"  - {check.note}")

    def extend(self, other: "ContractEvaluator", prefix: str) -> None:
        """Fold another run's checks in, prefixing their operation names (used by verify)."""
        for check in other.report.checks:
            self.report.checks.append(
                ContractCheck(f"{prefix}.{check.operation}", check.contract, check.estimate, check.tolerance, check.passed, check.note)
            )
        for key, value in other.report.estimates.items():
            self.report.estimates[f"{prefix}.{key}"] = value
        self.report.tables.extend(other.report.tables)

    def get_results_summary(self) -> Dict[str, Any]:
        """Get a summary of the contract results."""
        checks = self.report.checks
        failed = [c.operation for c in checks if not c.passed]
        return {
            "experiment": self.report.experiment,
            "config_hash": self.report.config_hash,
            "seed": self.report.seed,
            "workers": self.report.workers,
            "version": self.report.version,
            "total_checks": len(checks),
            "passed_checks": len(checks) - len(failed),
            "failed": failed,
            "passed": self.report.passed,
            "checks": [asdict(c) for c in checks],
            "estimates": self.report.estimates,
            "tables": self.report.tables,
        }

    def save_results(self, output_path: str, config_echo: Optional[Dict[str, Any]] = None) -> str:
        """
        Save the summary sidecar as JSON.

        Args:
            output_path: Path of the summary file
            config_echo: Validated config to embed in the summary

        Returns:
            The path where the summary was saved
        """
        if not os.path.isabs(output_path):
            output_path = os.path.join(os.getcwd(), output_path)

        directory = os.path.dirname(output_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        summary = self.get_results_summary()
        if config_echo is not None:
            summary["config"] = config_echo

        with open(output_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(summary, f, indent=2, sort_keys=True)

        return output_path
