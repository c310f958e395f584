"""CSV writers: header row, comma-delimited, '.' decimals, '\\n' line endings."""

import logging
import os

import pandas as pd
import xxhash

logger = logging.getLogger(__name__)


def write_table(frame: pd.DataFrame, output_dir: str, name: str) -> str:
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, f"{name}.csv")
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    logger.info(f"Wrote {len(frame)} row(s) to {path}")
    return path


def file_digest(path: str) -> str:
    with open(path, "rb") as f:
        return xxhash.xxh3_64_hexdigest(f.read())


def table_digests(paths) -> dict[str, str]:
    return {os.path.basename(p): file_digest(p) for p in paths}
