"""
GAMP-based Bayes detectors for quantized massive-MIMO uplinks.

A detector is GAMP with a pluggable output step (the measurement likelihood,
returning the score g and its negated derivative g') and input step (the
posterior mean and variance of x under a scalar Gaussian observation):

    DQ      exact quantized likelihood  + matched prior
    PDQ     pseudo-quantization noise   + matched prior
    Linear  pseudo-quantization noise   + Gaussian prior
"""

from abc import ABC, abstractmethod
from typing import List, Optional, Tuple, Union

import numpy as np
import structlog
from scipy import linalg
from scipy.special import softmax

from ..models import (
    AdcBank,
    AdcSpec,
    ChannelRealization,
    Constellation,
    ConstellationKind,
    DenoiserKind,
    DetectorKind,
    GampConfig,
    GampResult,
    GampState,
    InputDenoiser,
    OutputChannel,
    OutputKind,
)
from ..utils.exceptions import ConfigError, DimensionError, NumericalError
from ..utils.numerics import truncated_normal_moments
from .quantizer import LEVEL_TOLERANCE, cell_edges

logger = structlog.get_logger(__name__)

Pair = Tuple[np.ndarray, np.ndarray]


class OutputStep(ABC):
    """Output nonlinearity (g, g') of one detector."""

    @abstractmethod
    def evaluate(self, r: np.ndarray, p: np.ndarray, v_p: np.ndarray) -> Pair:
        """Score g and nonnegative g' for every antenna."""

    def check_observation(self, r: np.ndarray) -> None:
        """Reject observations the likelihood cannot have produced."""


class DequantizedOutput(OutputStep):
    """Exact likelihood of the quantized observation (DQ)."""

    def __init__(self, bank: AdcBank, noise_variance: float) -> None:
        self.noise_variance = float(noise_variance)
        self.infinite = bank.infinite_mask()
        self.step = np.nan_to_num(bank.steps(), nan=1.0)
        self.half = bank.half_levels()

    def _edges(self, component: np.ndarray) -> Pair:
        low, high = cell_edges(component, self.step, self.half)
        low = np.where(self.infinite, -np.inf, low)
        high = np.where(self.infinite, np.inf, high)
        return low, high

    def check_observation(self, r: np.ndarray) -> None:
        finite = ~self.infinite
        for component in (r.real[finite], r.imag[finite]):
            position = component / self.step[finite] + 0.5
            index = np.rint(position)
            half = self.half[finite]
            off_grid = np.abs(position - index) > LEVEL_TOLERANCE
            bad = off_grid | (index < -half + 1) | (index > half)
            if bad.any():
                raise ConfigError(
                    "observation is not in the quantizer alphabet",
                    antenna=int(np.flatnonzero(finite)[np.argmax(bad)]),
                )

    def evaluate(self, r: np.ndarray, p: np.ndarray, v_p: np.ndarray) -> Pair:
        total = v_p + self.noise_variance
        low_re, high_re = self._edges(r.real)
        low_im, high_im = self._edges(r.imag)
        half = total / 2.0
        _, mean_re, var_re = truncated_normal_moments(p.real, half, low_re, high_re)
        _, mean_im, var_im = truncated_normal_moments(p.imag, half, low_im, high_im)
        g = ((mean_re - p.real) + 1j * (mean_im - p.imag)) / total
        g_prime = (1.0 - (var_re + var_im) / total) / total
        g = np.where(self.infinite, (r - p) / total, g)
        g_prime = np.where(self.infinite, 1.0 / total, g_prime)
        return g, g_prime


class PseudoQuantizedOutput(OutputStep):
    """Gaussian likelihood with effective variance γ_i (PDQ and Linear)."""

    def __init__(self, gammas: np.ndarray) -> None:
        self.gammas = np.asarray(gammas, dtype=float)
        if np.any(self.gammas < 0.0):
            raise ConfigError("effective PQN variances must be nonnegative")

    def evaluate(self, r: np.ndarray, p: np.ndarray, v_p: np.ndarray) -> Pair:
        total = v_p + self.gammas
        return (r - p) / total, 1.0 / total


class InputStep(ABC):
    """Input denoiser (f1, f2 − |f1|²)."""

    @abstractmethod
    def posterior(self, s: np.ndarray, v_s: np.ndarray) -> Pair:
        """Posterior mean and variance of x given s = x + CN(0, v_s)."""


class DiscreteInput(InputStep):
    """Posterior over a finite constellation."""

    def __init__(self, constellation: Constellation) -> None:
        self.points = constellation.symbols
        with np.errstate(divide="ignore"):
            self.log_priors = np.log(constellation.priors)
        self.is_qpsk = constellation.kind is ConstellationKind.QPSK

    def posterior(self, s: np.ndarray, v_s: np.ndarray) -> Pair:
        if self.is_qpsk:
            scale = np.sqrt(2.0) / v_s
            mean = np.tanh(scale * s.real) + 1j * np.tanh(scale * s.imag)
            mean = mean / np.sqrt(2.0)
            return mean, np.maximum(1.0 - np.abs(mean) ** 2, 0.0)
        distance = np.abs(s[:, None] - self.points[None, :]) ** 2
        weights = softmax(self.log_priors[None, :] - distance / v_s[:, None], axis=1)
        mean = weights @ self.points
        second = weights @ (np.abs(self.points) ** 2)
        return mean, np.maximum(second - np.abs(mean) ** 2, 0.0)


class GaussianInput(InputStep):
    """Posterior under the CN(0, 1) prior."""

    def posterior(self, s: np.ndarray, v_s: np.ndarray) -> Pair:
        return s / (1.0 + v_s), v_s / (1.0 + v_s)


def make_output(channel: OutputChannel, bank: AdcBank) -> OutputStep:
    """Bind an output-channel description to an antenna bank."""
    if channel.kind is OutputKind.DQ:
        return DequantizedOutput(bank, channel.noise_variance)
    return PseudoQuantizedOutput(channel.gammas(bank))


def make_input(denoiser: InputDenoiser) -> InputStep:
    if denoiser.kind is DenoiserKind.GAUSSIAN:
        return GaussianInput()
    assert denoiser.constellation is not None
    return DiscreteInput(denoiser.constellation)


def detector_components(
    detector: DetectorKind, constellation: Constellation
) -> Tuple[OutputKind, InputDenoiser]:
    """Output likelihood and input prior realizing ``detector``."""
    if detector is DetectorKind.DQ:
        return OutputKind.DQ, InputDenoiser.matched(constellation)
    if detector is DetectorKind.PDQ:
        return OutputKind.PDQ, InputDenoiser.matched(constellation)
    return OutputKind.PDQ, InputDenoiser.gaussian()


def build_detector(
    detector: DetectorKind,
    constellation: Constellation,
    bank: AdcBank,
    noise_variance: float,
    pqn_variance: Optional[float] = None,
) -> Tuple[OutputStep, InputStep]:
    """Ready-to-run output and input steps for ``detector`` on ``bank``."""
    kind, denoiser = detector_components(detector, constellation)
    channel = OutputChannel(
        kind=kind, noise_variance=noise_variance, pqn_variance=pqn_variance
    )
    return make_output(channel, bank), make_input(denoiser)


def dq_nonlinearity(
    r: complex, p: complex, v_p: float, spec: AdcSpec, noise_variance: float
) -> Tuple[complex, float]:
    """Scalar DQ output step for one antenna."""
    if v_p <= 0.0:
        raise ValueError("v_p must be positive")
    step = DequantizedOutput(AdcBank(assignment=(spec,)), noise_variance)
    g, g_prime = step.evaluate(np.array([r]), np.array([p]), np.array([v_p]))
    return complex(g[0]), float(g_prime[0])


def pdq_nonlinearity(
    r: complex, p: complex, v_p: float, gamma: float
) -> Tuple[complex, float]:
    """Scalar PQN output step: g = (r - p)/(v_p + γ), g' = 1/(v_p + γ)."""
    if v_p <= 0.0 or gamma <= 0.0:
        raise ValueError("v_p and gamma must be positive")
    return complex((r - p) / (v_p + gamma)), float(1.0 / (v_p + gamma))


def discrete_denoiser(
    s: complex, v_s: float, constellation: Constellation
) -> Tuple[complex, float]:
    if v_s <= 0.0:
        raise ValueError("v_s must be positive")
    mean, var = DiscreteInput(constellation).posterior(np.array([s]), np.array([v_s]))
    return complex(mean[0]), float(var[0])


def gaussian_denoiser(s: complex, v_s: float) -> Tuple[complex, float]:
    if v_s <= 0.0:
        raise ValueError("v_s must be positive")
    return complex(s / (1.0 + v_s)), float(v_s / (1.0 + v_s))


def _require_finite(iteration: int, line: int, **arrays: np.ndarray) -> None:
    for name, values in arrays.items():
        if not np.all(np.isfinite(values)):
            raise NumericalError(
                f"non-finite {name} at iteration {iteration}, line {line}",
                iteration=iteration,
                line=line,
            )


def gamp_run(
    channel: ChannelRealization,
    r: np.ndarray,
    output: OutputStep,
    denoiser: InputStep,
    config: GampConfig,
    x_true: Optional[np.ndarray] = None,
) -> GampResult:
    """
    Run GAMP from x⁰ = 0, v_x⁰ = 1, p⁰ = 0.

    The Onsager term of iteration t ≥ 2 is g(p^{t-1}, v_p^t). At t = 1 the
    term g(p⁰ = 0, v_p¹) is generally nonzero for quantized outputs, so
    p¹ = Hx⁰ only when it is skipped; skipping is the default because state
    evolution starts from that p¹. ``config.onsager_from_start`` applies it
    anyway. With ``x_true`` the trace records ||x^t - x_true||²/K per
    iteration.
    """
    H = channel.matrix
    r = np.asarray(r, dtype=complex)
    num_antennas, num_users = H.shape
    if r.shape != (num_antennas,):
        raise DimensionError(f"r has shape {r.shape}, expected ({num_antennas},)")
    if x_true is not None and np.shape(x_true) != (num_users,):
        raise DimensionError("x_true does not match the number of users")
    output.check_observation(r)

    floor = config.variance_floor
    damping = config.damping
    power = channel.power
    H_adj = H.conj().T

    x = np.zeros(num_users, dtype=complex)
    v_x = np.ones(num_users)
    p_prev = np.zeros(num_antennas, dtype=complex)
    trace: List[GampState] = []
    converged = config.convergence_tol == 0.0

    for t in range(1, config.max_iterations + 1):
        v_p = np.maximum(power @ v_x, floor)
        p = H @ x
        if t > 1 or config.onsager_from_start:
            g_prev, _ = output.evaluate(r, p_prev, v_p)
            p = p - v_p * g_prev
        if t > 1 and damping:
            p = (1.0 - damping) * p + damping * p_prev
        _require_finite(t, 2, p=p, v_p=v_p)

        z, v_z = output.evaluate(r, p, v_p)
        _require_finite(t, 3, z=z, v_z=v_z)

        with np.errstate(divide="ignore"):
            v_s = 1.0 / (power.T @ v_z)
        low = ~(v_s >= floor)
        clamped = int(np.count_nonzero(low))
        v_s = np.clip(np.where(low, floor, v_s), floor, 1.0 / floor)
        if clamped:
            logger.debug("gamp_variance_clamped", iteration=t, count=clamped)

        s = x + v_s * (H_adj @ z)
        _require_finite(t, 6, s=s)

        x_new, v_x = denoiser.posterior(s, v_s)
        v_x = np.maximum(v_x, floor)
        if damping:
            x_new = (1.0 - damping) * x_new + damping * x
        _require_finite(t, 7, x=x_new, v_x=v_x)

        change = float(np.mean(np.abs(x_new - x) ** 2))
        mse = None
        if x_true is not None:
            mse = float(np.mean(np.abs(x_new - x_true) ** 2))
        trace.append(
            GampState(
                iteration=t,
                x=x_new,
                v_x=v_x,
                p=p,
                v_p=v_p,
                z=z,
                v_z=v_z,
                s=s,
                v_s=v_s,
                clamped=clamped,
                change=change,
                mse=mse,
            )
        )
        x, p_prev = x_new, p
        if config.convergence_tol > 0.0 and change < config.convergence_tol:
            converged = True
            break

    return GampResult(estimate=x, variance=v_x, trace=trace, converged=converged)


def linear_mmse_direct(
    channel: ChannelRealization,
    r: np.ndarray,
    gamma: Union[float, np.ndarray],
) -> np.ndarray:
    """
    Regularized least squares (H*H + γI)⁻¹ H* r.

    A per-antenna ``gamma`` vector gives the weighted form
    (H*Γ⁻¹H + I)⁻¹ H*Γ⁻¹ r, which is what GAMP with a PQN output and Gaussian
    prior converges to on a mixed bank.
    """
    H = channel.matrix
    r = np.asarray(r, dtype=complex)
    if r.shape != (H.shape[0],):
        raise DimensionError(f"r has shape {r.shape}, expected ({H.shape[0]},)")
    if np.ndim(gamma) == 0:
        gamma = float(gamma)
        if gamma < 0.0:
            raise ValueError("gamma must be nonnegative")
        gram = H.conj().T @ H + gamma * np.eye(H.shape[1])
        rhs = H.conj().T @ r
    else:
        weights = 1.0 / np.asarray(gamma, dtype=float)
        gram = (H.conj().T * weights) @ H + np.eye(H.shape[1])
        rhs = (H.conj().T * weights) @ r
    if np.linalg.cond(gram) > 1.0 / np.finfo(float).eps:
        raise NumericalError("regularized Gram matrix is singular")
    try:
        return linalg.solve(gram, rhs, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise NumericalError(f"linear MMSE solve failed: {exc}") from exc


def mrc_direct(channel: ChannelRealization, r: np.ndarray) -> np.ndarray:
    """Matched-filter statistic H* r."""
    return channel.matrix.conj().T @ np.asarray(r, dtype=complex)


def hard_decision_indices(
    estimate: np.ndarray, constellation: Constellation
) -> np.ndarray:
    """Index of the nearest point; ties go to the earlier canonical point."""
    if not constellation.is_discrete:
        raise ValueError("Gaussian inputs have no decision rule")
    points = constellation.symbols
    distance = np.abs(np.asarray(estimate)[:, None] - points[None, :]) ** 2
    return np.argmin(distance, axis=1)


def hard_decision(estimate: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Nearest constellation point per entry."""
    return constellation.symbols[hard_decision_indices(estimate, constellation)]
