"""
Monte Carlo experiment runner and the SE cross-check.

Trial t at SNR index i draws every random quantity from the seed
(base_seed, i, t), so results do not depend on scheduling or thread count.
Aggregation always runs in trial-index order.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import structlog

from ..models import (
    ConstellationKind,
    ExperimentResult,
    ExperimentSpec,
    SeConfig,
    SnrRecord,
)
from ..utils.exceptions import ConfigError, NumericalError
from ..utils.helpers import (
    derive_trial_seed,
    ordered_map,
    snr_db_to_noise_variance,
    spec_hash,
    split_seed,
    utc_now,
)
from .channel import received_signal, sample_channel, sample_symbols
from .detectors import build_detector, gamp_run, hard_decision
from .quantizer import quantize_vector
from .state_evolution import ber_qpsk, mse_from_se, predict

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class TrialOutcome:
    """What one channel realization contributes to the averages."""

    bit_errors: int
    bits: int
    mse: float
    mse_trajectory: Tuple[float, ...]
    converged: bool
    failed: bool = False

    @classmethod
    def failure(cls) -> "TrialOutcome":
        return cls(
            bit_errors=0,
            bits=0,
            mse=math.nan,
            mse_trajectory=(),
            converged=False,
            failed=True,
        )


@dataclass(frozen=True)
class ComparisonRow:
    """SE prediction against Monte Carlo at one SNR."""

    snr_db: float
    se_ber: float
    mc_ber: float
    se_mse: float
    mc_mse: float
    ber_gap: float
    mse_gap: float
    se_trajectory: Tuple[float, ...]
    mc_trajectory: Tuple[float, ...]
    se_converged: bool


@dataclass(frozen=True)
class ComparisonReport:
    rows: Tuple[ComparisonRow, ...]
    result: ExperimentResult


def qpsk_bit_errors(decided: np.ndarray, x: np.ndarray) -> int:
    """Gray-mapped QPSK: one bit per sign of the real and imaginary parts."""
    real = np.signbit(decided.real) != np.signbit(x.real)
    imag = np.signbit(decided.imag) != np.signbit(x.imag)
    return int(np.count_nonzero(real) + np.count_nonzero(imag))


def _pad(values: Sequence[float], length: int) -> Tuple[float, ...]:
    padded = list(values[:length])
    while padded and len(padded) < length:
        padded.append(padded[-1])
    return tuple(padded)


def run_trial(
    spec: ExperimentSpec, snr_index: int, trial_index: int, noise_variance: float
) -> TrialOutcome:
    """One channel, symbol and noise draw pushed through quantizer and detector."""
    seeds = split_seed(derive_trial_seed(spec.base_seed, snr_index, trial_index))
    system = spec.system
    channel = sample_channel(system, seeds.channel)
    x = sample_symbols(system.constellation, system.num_users, seeds.symbols)
    y = received_signal(channel, x, noise_variance, seeds.noise)
    r = quantize_vector(y, spec.bank)
    output, denoiser = build_detector(
        spec.detector,
        system.constellation,
        spec.bank,
        noise_variance,
        spec.pqn_variance,
    )
    try:
        result = gamp_run(channel, r, output, denoiser, spec.gamp, x_true=x)
    except NumericalError as exc:
        logger.warning(
            "trial_failed",
            snr_index=snr_index,
            trial_index=trial_index,
            error=exc.detail,
        )
        return TrialOutcome.failure()

    bit_errors, bits = 0, 0
    if system.constellation.kind is ConstellationKind.QPSK:
        decided = hard_decision(result.estimate, system.constellation)
        bit_errors, bits = qpsk_bit_errors(decided, x), 2 * system.num_users
    mse = float(np.mean(np.abs(result.estimate - x) ** 2))
    return TrialOutcome(
        bit_errors=bit_errors,
        bits=bits,
        mse=mse,
        mse_trajectory=_pad(result.mse_trajectory(), spec.gamp.max_iterations),
        converged=result.converged,
    )


def _stderr(samples: np.ndarray) -> float:
    if samples.size < 2:
        return 0.0
    return float(np.std(samples, ddof=1) / math.sqrt(samples.size))


def aggregate(
    snr_db: float, noise_variance: float, outcomes: Sequence[TrialOutcome]
) -> SnrRecord:
    """
    Reduce per-trial outcomes, in order, to one SNR record.

    Failed trials are excluded from every average; failed and unconverged
    trials are both counted in ``nonconverged``.
    """
    kept = [o for o in outcomes if not o.failed]
    nonconverged = sum(1 for o in outcomes if o.failed or not o.converged)
    if not kept:
        return SnrRecord(
            snr_db=snr_db,
            noise_variance=noise_variance,
            ber=math.nan,
            ber_stderr=math.nan,
            mse=math.nan,
            mse_stderr=math.nan,
            bit_errors=0,
            bits_total=0,
            trials_run=0,
            nonconverged=nonconverged,
        )

    bit_errors = sum(o.bit_errors for o in kept)
    bits_total = sum(o.bits for o in kept)
    if bits_total:
        ber = bit_errors / bits_total
        if len(kept) > 1:
            ber_stderr = _stderr(np.array([o.bit_errors / o.bits for o in kept]))
        else:
            ber_stderr = math.sqrt(ber * (1.0 - ber) / bits_total)
    else:
        ber, ber_stderr = math.nan, math.nan

    mses = np.array([o.mse for o in kept])
    trajectories = [o.mse_trajectory for o in kept if o.mse_trajectory]
    trajectory: Tuple[float, ...] = ()
    if trajectories:
        trajectory = tuple(float(v) for v in np.mean(np.array(trajectories), axis=0))

    return SnrRecord(
        snr_db=snr_db,
        noise_variance=noise_variance,
        ber=float(ber),
        ber_stderr=float(ber_stderr),
        mse=float(np.mean(mses)),
        mse_stderr=_stderr(mses),
        bit_errors=bit_errors,
        bits_total=bits_total,
        trials_run=len(kept),
        nonconverged=nonconverged,
        mse_trajectory=trajectory,
    )


def run_monte_carlo(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """BER and MSE of ``spec.detector`` over the SNR grid."""
    if spec.trials < 1:
        raise ConfigError("an experiment needs at least one trial")
    records: List[SnrRecord] = []
    for snr_index, snr_db in enumerate(spec.snr_grid_db):
        noise_variance = snr_db_to_noise_variance(snr_db)
        outcomes = ordered_map(
            lambda t: run_trial(spec, snr_index, t, noise_variance),
            range(spec.trials),
            threads,
        )
        record = aggregate(snr_db, noise_variance, outcomes)
        logger.info(
            "snr_point_done",
            detector=spec.detector.value,
            snr_db=snr_db,
            ber=record.ber,
            mse=record.mse,
            trials=record.trials_run,
            nonconverged=record.nonconverged,
        )
        records.append(record)
    return ExperimentResult(
        records=tuple(records),
        spec_hash=spec_hash(spec.model_dump(mode="json")),
        base_seed=spec.base_seed,
        timestamp=utc_now(),
    )


def _relative_gap(measured: float, predicted: float) -> float:
    if predicted == 0.0 or math.isnan(predicted) or math.isnan(measured):
        return math.nan
    return (measured - predicted) / predicted


def compare_se_vs_mc(
    spec: ExperimentSpec, cfg: SeConfig, threads: int = 1
) -> ComparisonReport:
    """
    Per-SNR SE and Monte Carlo BER/MSE with relative gaps (MC − SE)/SE, plus
    per-iteration MSE trajectories t = 1..t_max from both.
    """
    result = run_monte_carlo(spec, threads)
    profile = spec.bank.to_profile(spec.system.num_users)
    constellation = spec.system.constellation
    length = spec.gamp.max_iterations
    rows = []
    for record in result.records:
        solution = predict(
            spec.detector,
            constellation,
            profile,
            record.noise_variance,
            cfg,
            spec.pqn_variance,
        )
        se_ber = math.nan
        if constellation.kind is ConstellationKind.QPSK:
            se_ber = ber_qpsk(solution.params)
        se_mse = mse_from_se(solution.moments)
        rows.append(
            ComparisonRow(
                snr_db=record.snr_db,
                se_ber=se_ber,
                mc_ber=record.ber,
                se_mse=se_mse,
                mc_mse=record.mse,
                ber_gap=_relative_gap(record.ber, se_ber),
                mse_gap=_relative_gap(record.mse, se_mse),
                se_trajectory=solution.mse_trajectory(length),
                mc_trajectory=record.mse_trajectory,
                se_converged=solution.converged,
            )
        )
    return ComparisonReport(rows=tuple(rows), result=result)
