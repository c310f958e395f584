import logging
import logging.config
from datetime import datetime
from pathlib import Path

# third-party loggers that flood DEBUG during sample-parallel runs
QUIET_LOGGERS = ("joblib", "matplotlib", "numexpr")


class RunFilter(logging.Filter):
    """Stamps every record with the experiment, seed and session so log lines from parallel runs can be told apart."""

    def __init__(self, experiment: str | None, seed: int | None, session_id: str | None):
        super().__init__()
        self.experiment = experiment or "-"
        self.seed = "-" if seed is None else str(seed)
        self.session = (session_id or "-")[:8]

    def filter(self, record: logging.LogRecord) -> bool:
        record.experiment = self.experiment
        record.seed = self.seed
        record.session = self.session
        return True


def get_logger(
    name: str,
    log_dir: Path,
    level: str = "INFO",
    session_id: str | None = None,
    experiment: str | None = None,
    seed: int | None = None,
) -> logging.Logger:
    """
    Configure console and rotating-file logging for one lab run.

    The file is named after the experiment and session; numpy floating-point
    warnings (overflow on escaping orbits) are routed into the same handlers.
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_filename = f"viana_{timestamp}_{experiment or 'run'}_{(session_id or 'local')[:8]}.log"

    log_dir.mkdir(parents=True, exist_ok=True)

    logging.config.dictConfig({
        "version": 1,
        "disable_existing_loggers": False,
        "filters": {
            "run": {"()": RunFilter, "experiment": experiment, "seed": seed, "session_id": session_id},
        },
        "formatters": {
            "standard": {
                "format": "%(asctime)s - %(name)s - %(levelname)s - [%(experiment)s seed=%(seed)s] %(message)s",
                "datefmt": "%Y-%m-%dT%H:%M:%S",
            },
            "detailed": {
                "format": "%(asctime)s - %(session)s - %(name)s:%(lineno)d - %(levelname)s - [%(experiment)s seed=%(seed)s] %(message)s",
                "datefmt": "%Y-%m-%dT%H:%M:%S",
            },
        },
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "formatter": "standard",
                "filters": ["run"],
                "level": level,
            },
            "file": {
                "class": "logging.handlers.TimedRotatingFileHandler",
                "formatter": "detailed",
                "filters": ["run"],
                "when": "midnight",
                "backupCount": 14,
                "filename": str(log_dir / log_filename),
                "encoding": "utf-8",
                "level": "DEBUG",
            },
        },
        "loggers": {quiet: {"level": "WARNING"} for quiet in QUIET_LOGGERS},
        "root": {
            "handlers": ["console", "file"],
            "level": "DEBUG",
        },
    })
    logging.captureWarnings(True)

    return logging.getLogger(name)
