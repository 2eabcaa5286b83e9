"""
Uplink sampling: channel matrices, transmit symbols and received signals.

Every sampler is a pure function of its arguments and seed.
"""

import numpy as np

from ..models import ChannelRealization, Constellation, ConstellationKind, SystemConfig
from ..utils.exceptions import DimensionError
from ..utils.helpers import SeedLike, make_rng


def complex_gaussian(
    rng: np.random.Generator, shape: tuple, variance: float = 1.0
) -> np.ndarray:
    """Circular complex Gaussian draws with ``variance`` per complex entry."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channel(config: SystemConfig, seed: SeedLike) -> ChannelRealization:
    """H = H̃/√K with H̃ i.i.d. CN(0, 1)."""
    rng = make_rng(seed)
    raw = complex_gaussian(rng, (config.num_antennas, config.num_users))
    return ChannelRealization(matrix=raw / np.sqrt(config.num_users))


def sample_symbols(
    constellation: Constellation, count: int, seed: SeedLike
) -> np.ndarray:
    """I.i.d. draws from the input distribution."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = make_rng(seed)
    if constellation.kind is ConstellationKind.GAUSSIAN:
        return complex_gaussian(rng, (count,))
    points = constellation.symbols
    index = rng.choice(points.size, size=count, p=constellation.priors)
    return points[index]


def received_signal(
    channel: ChannelRealization,
    x: np.ndarray,
    noise_variance: float,
    seed: SeedLike,
) -> np.ndarray:
    """y = Hx + n with n ~ CN(0, σ_n² I)."""
    if noise_variance < 0.0:
        raise ValueError("noise variance must be nonnegative")
    x = np.asarray(x)
    if x.shape != (channel.num_users,):
        raise DimensionError(
            f"x has shape {x.shape}, channel expects ({channel.num_users},)"
        )
    y = channel.matrix @ x
    if noise_variance == 0.0:
        return y
    rng = make_rng(seed)
    return y + complex_gaussian(rng, y.shape, noise_variance)
