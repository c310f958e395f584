import argparse
import json
import os
import sys
import uuid
from pathlib import Path

from dotenv import load_dotenv

from config import BaseConfig, set_global_config, shipped_configs
from config.schema import ExperimentSettings, check_subcommand, config_hash, load_settings
from dynamics.errors import ConfigError
from experiments import experiments
from experiments.builders import RunContext
from setup_logging import get_logger
from utils.evaluator import ContractEvaluator
from utils.tables import table_digests

load_dotenv()

VERSION = "0.1.0"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_CONTRACT = 3

# worker counts the verify battery is replayed at
REPLAY_WORKERS = (1, 8)


def run(settings: ExperimentSettings, subcommand: str, logger, output_dir: str | None = None) -> ContractEvaluator:
    """Execute one experiment, write its tables and the `<subcommand>_summary.json` sidecar."""
    output_dir = output_dir or settings.paths.output_dir
    evaluator = ContractEvaluator(
        subcommand, config_hash(settings), settings.run.seed, settings.run.workers, VERSION, logger=logger
    )
    logger.info(f"Running {subcommand} (seed {settings.run.seed}, {settings.run.workers} worker(s)) into {output_dir}")
    experiments[subcommand](RunContext(settings, evaluator, output_dir))
    path = evaluator.save_results(os.path.join(output_dir, f"{subcommand}_summary.json"), settings.model_dump(mode="json"))
    summary = evaluator.get_results_summary()
    logger.info(f"{subcommand}: {summary['passed_checks']}/{summary['total_checks']} contract(s) passed, summary at {path}")
    return evaluator


def battery(settings: ExperimentSettings, logger, output_dir: str, names=None) -> tuple[dict, dict]:
    """Run the named experiments (all by default) into `output_dir/<name>`; returns evaluators and CSV digests."""
    evaluators, digests = {}, {}
    for name in names or list(experiments):
        directory = os.path.join(output_dir, name)
        evaluators[name] = sub = run(settings, name, logger, directory)
        for table, digest in table_digests(os.path.join(directory, t) for t in sub.report.tables).items():
            digests[f"{name}/{table}"] = digest
    return evaluators, digests


def replay_mismatches(settings: ExperimentSettings, logger, output_dir: str, reference: dict, names=None) -> dict:
    """Rerun the battery at each of REPLAY_WORKERS and list every table whose digest differs from `reference`."""
    mismatches = {}
    for workers in REPLAY_WORKERS:
        if workers == settings.run.workers:
            continue
        replay = settings.model_copy(update={"run": settings.run.model_copy(update={"workers": workers, "progress": False})})
        directory = os.path.join(output_dir, "determinism", f"workers_{workers}")
        _, digests = battery(replay, logger, directory, names)
        for table in sorted(set(reference) | set(digests)):
            if reference.get(table) != digests.get(table):
                mismatches.setdefault(table, []).append(workers)
    return mismatches


def verify_all(settings: ExperimentSettings, logger) -> ContractEvaluator:
    """Run every experiment, replay the battery at other worker counts and fold all contracts into one report."""
    output_dir = settings.paths.output_dir
    evaluator = ContractEvaluator(
        f"verify_{settings.run.suite}", config_hash(settings), settings.run.seed, settings.run.workers, VERSION, logger=logger
    )
    evaluators, digests = battery(settings, logger, output_dir)
    for name, sub in evaluators.items():
        evaluator.extend(sub, name)

    mismatches = replay_mismatches(settings, logger, output_dir, digests)
    evaluator.check(
        "run", "every CSV digest identical across worker counts", len(mismatches), 0, not mismatches,
        note=f"{len(digests)} tables at workers {sorted({settings.run.workers, *REPLAY_WORKERS})}; differing: {sorted(mismatches)}",
    )
    evaluator.save_results(os.path.join(output_dir, "verify_summary.json"), settings.model_dump(mode="json"))
    return evaluator


def _overrides(args) -> dict:
    out = args.out or os.environ.get("VIANA_OUTPUT_DIR") or None
    overrides = {"run.seed": args.seed, "run.workers": args.workers, "paths.output_dir": out}
    if args.command == "recurrence":
        overrides.update({
            "recurrence.alpha_ladder": args.alpha_ladder,
            "recurrence.n_grid": args.n_grid,
            "recurrence.samples": args.samples,
        })
    return overrides


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", type=str, default=None, help=f"Experiment config (JSON path or one of {', '.join(shipped_configs())})"
    )
    common.add_argument("--seed", type=int, default=None, help="Override run.seed")
    common.add_argument("--workers", type=int, default=None, help="Override run.workers")
    common.add_argument("--out", type=str, default=None, help="Output directory (overrides VIANA_OUTPUT_DIR)")
    common.add_argument(
        "--log-level", type=str, default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Set the logging level"
    )

    parser = argparse.ArgumentParser(description="Numerical lab for Viana maps and fibered hyperbolic skew products")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in experiments:
        sub = commands.add_parser(name, parents=[common], help=f"Run the {name} experiment")
        if name == "recurrence":
            sub.add_argument("--alpha-ladder", type=float, nargs="+", default=None, help="Override recurrence.alpha_ladder")
            sub.add_argument("--n-grid", type=int, nargs="+", default=None, help="Override recurrence.n_grid")
            sub.add_argument("--samples", type=int, default=None, help="Override recurrence.samples")
    verify = commands.add_parser("verify", parents=[common], help="Run the acceptance battery")
    verify.add_argument(
        "--suite", type=str, default=None, choices=["fast", "full"],
        help="Battery to run (picks verify_<suite>.json; with --config, must match its run.suite)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    suite = getattr(args, "suite", None)
    config_path = args.config or (f"verify_{suite or 'fast'}.json" if args.command == "verify" else "reference.json")

    # nothing is written before the config validates
    try:
        base_cfg = BaseConfig(config_path)
        settings = load_settings(base_cfg, _overrides(args))
        for name in experiments if args.command == "verify" else [args.command]:
            check_subcommand(settings, name)
        if suite is not None and settings.run.suite != suite:
            raise ConfigError(f"--suite {suite} does not match run.suite={settings.run.suite} in {base_cfg.path.name}")
    except (ConfigError, OSError, ValueError) as e:
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    set_global_config(base_cfg.with_data(settings.model_dump(mode="json")))
    session_id = uuid.uuid4().hex
    logger = get_logger(
        __name__, Path(settings.paths.log_dir), level=args.log_level,
        session_id=session_id, experiment=args.command, seed=settings.run.seed,
    )
    logger.info(f"Viana lab {VERSION} is starting ({settings.name} from {base_cfg.path}, config hash {config_hash(settings)})")

    try:
        if args.command == "verify":
            evaluator = verify_all(settings, logger)
        else:
            evaluator = run(settings, args.command, logger)
    except Exception as e:
        logger.exception(f"Error: {e}")
        return EXIT_UNEXPECTED

    summary = evaluator.get_results_summary()
    if not summary["passed"]:
        logger.error(f"Contract failure(s): {json.dumps(summary['failed'])}")
        return EXIT_CONTRACT
    logger.info("All contracts passed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
