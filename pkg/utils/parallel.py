import logging
from typing import Any, Callable, Sequence

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

logger = logging.getLogger(__name__)

# One spawn-key prefix per kind of random draw, so streams never overlap.
STREAMS = {
    "curves": 1,
    "strips": 2,
    "lyapunov": 3,
    "density": 4,
    "correlations": 5,
    "ldp": 6,
    "clt": 7,
    "recurrence": 8,
    "tails": 9,
    "fibered": 10,
    "coexistence": 11,
    "ulam": 12,
    "cylinders": 13,
    "expansion": 14,
    "density_replica": 15,
}

DEFAULT_CHUNK = 128


def sample_rng(seed: int, stream: str, index: int) -> np.random.Generator:
    """Generator keyed by (seed, stream, sample index) only."""
    key = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream], int(index)))
    return np.random.default_rng(key)


def sample_rngs(seed: int, stream: str, indices: Sequence[int]) -> list[np.random.Generator]:
    return [sample_rng(seed, stream, i) for i in indices]


def noise_block(rngs: Sequence[np.random.Generator], steps: int) -> np.ndarray:
    """Uniform dither draws of shape (steps, samples, 2), one column per sample stream."""
    if not rngs:
        return np.empty((steps, 0, 2))
    return np.stack([g.random((steps, 2)) for g in rngs], axis=1)


def chunk_indices(samples: int, chunk_size: int = DEFAULT_CHUNK) -> list[np.ndarray]:
    """Fixed chunking that depends only on the sample count."""
    return [np.arange(start, min(start + chunk_size, samples)) for start in range(0, samples, chunk_size)]


def map_chunks(
    kernel: Callable[..., Any],
    samples: int,
    *args,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    progress: bool = False,
    desc: str | None = None,
) -> list[Any]:
    """Run ``kernel(indices, *args)`` over fixed chunks; results come back in chunk order."""
    chunks = chunk_indices(samples, chunk_size)
    logger.debug("dispatching %d chunks of <= %d samples on %d worker(s)", len(chunks), chunk_size, workers)
    tasks = (delayed(kernel)(idx, *args) for idx in tqdm(chunks, desc=desc, disable=not progress))
    if workers <= 1:
        return [task[0](*task[1], **task[2]) for task in tasks]
    return Parallel(n_jobs=workers)(tasks)


def concat(results: list[dict], key: str) -> np.ndarray:
    return np.concatenate([r[key] for r in results])
