"""
Uniform midrise quantization, decision cells and the antenna bank.

Level index b runs over -2^κ/2 + 1, ..., 2^κ/2; level b is (b - 1/2)Δ and its
cell is ((b - 1)Δ, bΔ], opened to ±∞ at the two extreme levels. Inputs on a
threshold therefore map to the lower-indexed level, and 0 maps to -Δ/2.
"""

import math
from typing import Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from ..models import AdcBank, AdcSpec, QuantInterval
from ..utils.exceptions import DimensionError
from ..utils.numerics import truncated_normal_moments

LEVEL_TOLERANCE = 1e-9


def _level_index(values: np.ndarray, step: np.ndarray, half: np.ndarray) -> np.ndarray:
    return np.clip(np.ceil(values / step), -half + 1, half)


def quantize_levels(
    values: np.ndarray, step: np.ndarray, half: np.ndarray
) -> np.ndarray:
    """Vectorized real quantizer for per-element step and 2^κ/2."""
    return (_level_index(values, step, half) - 0.5) * step


def cell_edges(
    levels: np.ndarray, step: np.ndarray, half: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Lower and upper thresholds of the cells owning ``levels``."""
    index = np.rint(levels / step + 0.5)
    low = np.where(index > -half + 1, (index - 1.0) * step, -np.inf)
    high = np.where(index < half, index * step, np.inf)
    return low, high


def quantize_real(value: float, spec: AdcSpec) -> float:
    """Q(value) for one ADC; identity for full precision."""
    if math.isnan(value):
        raise ValueError("cannot quantize NaN")
    if spec.is_infinite:
        return float(value)
    level = quantize_levels(
        np.asarray(value, dtype=float),
        np.asarray(spec.delta),
        np.asarray(spec.half_levels),
    )
    return float(level)


def quantize_complex(value: complex, spec: AdcSpec) -> complex:
    """Q_c(y) = Q(Re y) + jQ(Im y)."""
    value = complex(value)
    return complex(quantize_real(value.real, spec), quantize_real(value.imag, spec))


def quantize_vector(y: np.ndarray, bank: AdcBank) -> np.ndarray:
    """Quantize entry i of ``y`` with the ADC of antenna i."""
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1 or y.size != len(bank):
        raise DimensionError(f"signal of length {y.size} for a bank of {len(bank)}")
    if np.isnan(y).any():
        raise ValueError("cannot quantize NaN")
    finite = ~bank.infinite_mask()
    out = y.copy()
    if finite.any():
        step = bank.steps()[finite]
        half = bank.half_levels()[finite]
        real = quantize_levels(y[finite].real, step, half)
        imag = quantize_levels(y[finite].imag, step, half)
        out[finite] = real + 1j * imag
    return out


def alphabet(spec: AdcSpec) -> np.ndarray:
    """The 2^κ output levels in increasing order."""
    half = spec.half_levels
    return (np.arange(-half + 1, half + 1) - 0.5) * spec.delta


def interval_of(level: float, spec: AdcSpec) -> QuantInterval:
    """Decision cell (r^low, r^up] of ``level``."""
    if spec.is_infinite:
        raise ValueError("full-precision ADC has no decision cell")
    position = level / spec.delta + 0.5
    index = round(position)
    if abs(position - index) > LEVEL_TOLERANCE or not (
        -spec.half_levels + 1 <= index <= spec.half_levels
    ):
        raise ValueError(f"{level} is not a level of the {spec.bits}-bit quantizer")
    low, high = cell_edges(
        np.asarray(float(level)),
        np.asarray(spec.delta),
        np.asarray(spec.half_levels),
    )
    return QuantInterval(low=float(low), high=float(high))


def pqn_variance(spec: AdcSpec) -> float:
    """Pseudo-quantization-noise variance Δ²/12; zero for full precision."""
    if spec.is_infinite:
        return 0.0
    return spec.delta**2 / 12.0


def quantization_distortion(step: float, bits: int) -> float:
    """E[(y - Q(y))²] for y ~ N(0, 1) and a ``bits``-bit midrise quantizer."""
    spec = AdcSpec.uniform(bits, step)
    levels = alphabet(spec)
    half = np.asarray(spec.half_levels)
    low, high = cell_edges(levels, np.asarray(step), half)
    log_mass, mean, var = truncated_normal_moments(0.0, 1.0, low, high)
    return float(np.sum(np.exp(log_mass) * (var + (mean - levels) ** 2)))


def gaussian_optimal_step(bits: int) -> float:
    """Step minimizing the quantization MSE of a unit-variance real Gaussian."""
    result = minimize_scalar(
        quantization_distortion,
        bounds=(1e-3, 4.0),
        args=(bits,),
        method="bounded",
        options={"xatol": 1e-7},
    )
    return float(result.x)
