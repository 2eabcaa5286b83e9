"""
Shared numerical kernels: truncated-Gaussian moments and rules for ∫Du.

Both the detectors (DQ output step) and the state-evolution evaluators call
:func:`truncated_normal_moments`, so there is exactly one implementation of the
cell probabilities and moment ratios.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import erf, log_ndtr, ndtr

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NormalRule:
    """Nodes and weights with ``∫Du f(u) ≈ Σ w_i f(u_i)``, ``Σ w_i = 1``."""

    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        """Weighted sum of ``values`` sampled at the nodes along ``axis``."""
        return np.tensordot(values, self.weights, axes=([axis], [0]))


@lru_cache(maxsize=16)
def gauss_hermite_rule(num_nodes: int) -> NormalRule:
    """Rule for expectations under the standard normal measure Du."""
    if num_nodes < 1:
        raise ValueError("num_nodes must be positive")
    x, w = hermgauss(num_nodes)
    nodes = np.sqrt(2.0) * x
    weights = w / np.sqrt(np.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return NormalRule(nodes=nodes, weights=weights)


TRAPEZOID_HALF_WIDTH = 9.0
TRAPEZOID_MAX_SPACING = 0.125
TRAPEZOID_MIN_SPACING = 2.0**-12
TRAPEZOID_POINTS_PER_FEATURE = 6.0


@lru_cache(maxsize=32)
def _trapezoid_rule(exponent: int) -> NormalRule:
    spacing = 2.0**-exponent
    count = int(round(TRAPEZOID_HALF_WIDTH / spacing))
    nodes = spacing * np.arange(-count, count + 1, dtype=float)
    weights = np.exp(log_normal_pdf(nodes))
    weights /= weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return NormalRule(nodes=nodes, weights=weights)


def trapezoid_normal_rule(feature_width: float) -> NormalRule:
    """
    Uniform trapezoid rule for ∫Du resolving features of ``feature_width``.

    Integrands with sharp steps in u (a cell probability at high SNR, a tanh
    of large gain) defeat a fixed Gauss–Hermite rule. The trapezoid rule on
    [-9, 9] converges geometrically once the spacing is a fraction of the
    narrowest feature; spacings are powers of two so rules are cached.
    """
    if not feature_width > 0.0:
        return _trapezoid_rule(int(-math.log2(TRAPEZOID_MIN_SPACING)))
    target = min(TRAPEZOID_MAX_SPACING, feature_width / TRAPEZOID_POINTS_PER_FEATURE)
    target = max(target, TRAPEZOID_MIN_SPACING)
    return _trapezoid_rule(int(math.ceil(-math.log2(target))))


def q_function(x: np.ndarray) -> np.ndarray:
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    return ndtr(-np.asarray(x, dtype=float))


def log_normal_pdf(x: np.ndarray) -> np.ndarray:
    """log φ(x); -inf at infinite arguments."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        out = -0.5 * x * x - LOG_SQRT_2PI
    return np.where(np.isfinite(x), out, -np.inf)


def log_interval_mass(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """
    log(Φ(β) − Φ(α)) for α < β, accurate in both tails.

    Intervals entirely above zero are reflected so the subtraction is always
    between two lower-tail probabilities in the log domain.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        upper = log_ndtr(-alpha) + np.log1p(
            -np.exp(log_ndtr(-beta) - log_ndtr(-alpha))
        )
        lower = log_ndtr(beta) + np.log1p(
            -np.exp(log_ndtr(alpha) - log_ndtr(beta))
        )
        middle = np.log(
            0.5 * (erf(beta / np.sqrt(2.0)) - erf(alpha / np.sqrt(2.0)))
        )
    return np.where(alpha >= 0.0, upper, np.where(beta <= 0.0, lower, middle))


def truncated_normal_moments(
    mean: np.ndarray,
    variance: np.ndarray,
    low: np.ndarray,
    high: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Moments of N(mean, variance) restricted to (low, high].

    Args:
        mean: location of the untruncated Gaussian.
        variance: strictly positive variance.
        low: lower cell edge, may be -inf.
        high: upper cell edge, may be +inf.

    Returns:
        (log_mass, truncated_mean, truncated_variance), broadcast together.
        The variance is clamped to [0, variance].
    """
    mean, variance, low, high = np.broadcast_arrays(
        np.asarray(mean, dtype=float),
        np.asarray(variance, dtype=float),
        np.asarray(low, dtype=float),
        np.asarray(high, dtype=float),
    )
    std = np.sqrt(variance)
    with np.errstate(invalid="ignore"):
        alpha = (low - mean) / std
        beta = (high - mean) / std
    log_mass = log_interval_mass(alpha, beta)

    ratio_low = np.exp(log_normal_pdf(alpha) - log_mass)
    ratio_high = np.exp(log_normal_pdf(beta) - log_mass)
    with np.errstate(invalid="ignore"):
        edge_low = np.where(np.isfinite(alpha), alpha * ratio_low, 0.0)
        edge_high = np.where(np.isfinite(beta), beta * ratio_high, 0.0)

    shift = ratio_low - ratio_high
    t_mean = mean + std * shift
    t_var = variance * (1.0 + edge_low - edge_high - shift * shift)
    t_var = np.clip(t_var, 0.0, variance)
    return log_mass, t_mean, t_var
