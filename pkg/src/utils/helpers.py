"""
Utility functions and helpers.
"""

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Callable, Dict, Iterable, List, Sequence, TypeVar, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]
T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class TrialSeeds:
    """Independent per-purpose seed streams for one trial."""

    channel: np.random.SeedSequence
    symbols: np.random.SeedSequence
    noise: np.random.SeedSequence


def spec_hash(payload: Dict[str, Any]) -> str:
    """Stable hash of a JSON-compatible experiment description."""
    encoded = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(encoded).hexdigest()


def utc_now() -> datetime:
    """Get current UTC datetime."""
    return datetime.now(timezone.utc)


def snr_db_to_noise_variance(snr_db: float) -> float:
    """Noise variance per complex dimension for a unit-power input."""
    return float(10.0 ** (-snr_db / 10.0))


def noise_variance_to_snr_db(noise_variance: float) -> float:
    """Inverse of :func:`snr_db_to_noise_variance`; zero noise maps to +inf."""
    if noise_variance <= 0.0:
        return math.inf
    return float(-10.0 * math.log10(noise_variance))


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    """Accept a plain integer or an existing seed sequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based generator (Philox) for the given seed."""
    return np.random.Generator(np.random.Philox(as_seed_sequence(seed)))


def derive_trial_seed(
    base_seed: int, snr_index: int, trial_index: int
) -> np.random.SeedSequence:
    """
    Seed for one Monte Carlo trial.

    The (snr_index, trial_index) pair is the spawn key of a SeedSequence rooted
    at ``base_seed``, so each trial hashes to its own stream independently of
    the order trials execute in.
    """
    return np.random.SeedSequence(
        entropy=int(base_seed), spawn_key=(int(snr_index), int(trial_index))
    )


def split_seed(seed: SeedLike) -> TrialSeeds:
    """
    Expand one seed into channel, symbol and noise streams.

    Children are built from the parent's spawn key rather than with
    ``SeedSequence.spawn``, which counts calls on the parent object.
    """
    parent = as_seed_sequence(seed)

    def child(index: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=parent.entropy, spawn_key=(*parent.spawn_key, index)
        )

    return TrialSeeds(channel=child(0), symbols=child(1), noise=child(2))


def format_grid(values: Sequence[float]) -> str:
    """Compact rendering of a numeric grid for log lines."""
    return ",".join(f"{value:g}" for value in values)


def ordered_map(
    func: Callable[[T], R], items: Iterable[T], threads: int = 1
) -> List[R]:
    """Map ``func`` over ``items`` on a thread pool, preserving input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
