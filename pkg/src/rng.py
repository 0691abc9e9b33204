"""Seeded substreams keyed by (seed, stream, index, chunk); results never depend on thread count."""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

from config.config import CHUNK_SIZE
from utils.custom_exception import InputError

T = TypeVar("T")

STREAM_RELIABILITY = 1
STREAM_FAILURE_COST = 2
STREAM_SYNTHETIC = 3
STREAM_CLASSIFIER_INIT = 4
STREAM_BATCH_ORDER = 5


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise InputError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def substream(seed: int, stream: int, index: int = 0, chunk: int = 0) -> np.random.Generator:
    """Generator for one (stream, index, chunk) cell of a seeded run."""
    seq = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=(stream, index, chunk))
    return np.random.Generator(np.random.PCG64(seq))


def chunk_sizes(n: int, chunk_size: int = CHUNK_SIZE) -> List[int]:
    if n < 1:
        raise InputError(f"sample count must be >= 1, got {n}")
    full, rest = divmod(int(n), int(chunk_size))
    sizes = [int(chunk_size)] * full
    if rest:
        sizes.append(rest)
    return sizes


def map_chunks(fn: Callable[[int, int], T], n: int, threads: int = 1,
               chunk_size: int = CHUNK_SIZE) -> List[T]:
    """Apply ``fn(chunk_index, size)`` over the chunks of ``n`` samples, in order."""
    sizes = chunk_sizes(n, chunk_size)
    if threads <= 1 or len(sizes) == 1:
        return [fn(i, size) for i, size in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


def dirichlet_rows(rng: np.random.Generator, alpha: np.ndarray, size: int) -> np.ndarray:
    """Dirichlet draws as independent Gamma(alpha_j, 1) variates normalised by their sum."""
    gammas = rng.standard_gamma(np.asarray(alpha, dtype=float), size=(size, len(alpha)))
    return gammas / gammas.sum(axis=1, keepdims=True)
