"""
Design optimization on state-evolution predictions.

Step-size search, the PQN-variance study, normalized step sizes and the
mixed-architecture sweeps. Nothing here runs Monte Carlo.
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import minimize_scalar

from ..models import (
    AdcSpec,
    Constellation,
    ConstellationKind,
    DetectorKind,
    Metric,
    MixedProfile,
    SeConfig,
    StepOptimum,
    SweepResult,
    TuneObjective,
)
from ..utils.exceptions import ConfigError, NonConvergenceError, NumericalError
from ..utils.helpers import format_grid, ordered_map, snr_db_to_noise_variance
from .quantizer import pqn_variance
from .state_evolution import ber_qpsk, mse_from_se, predict

logger = structlog.get_logger(__name__)

DEFAULT_BRACKET: Tuple[float, float] = (0.01, 8.0)
STEP_TOLERANCE = 1e-3
COARSE_POINTS = 25
FALLBACK_POINTS = 400
UNIMODAL_RTOL = 1e-9
# SNR rows of the optimal-step table: -5, -2.5, ..., 20 dB
NORMALIZED_STEP_SNR_GRID_DB: Tuple[float, ...] = tuple(
    float(v) for v in np.arange(-5.0, 20.1, 2.5)
)


@dataclass(frozen=True)
class MixedSweep:
    """DQ and PDQ metrics over high-resolution fractions, and their gap."""

    dq: SweepResult
    pdq: SweepResult
    gap_db: Tuple[float, ...]
    dq_steps: Tuple[Optional[float], ...] = ()
    pdq_steps: Tuple[Optional[float], ...] = ()

    @property
    def nonconverged(self) -> int:
        return self.dq.nonconverged + self.pdq.nonconverged

    @property
    def fractions(self) -> Tuple[float, ...]:
        return self.dq.values


def constellation_for(kind: ConstellationKind) -> Constellation:
    """Input distribution used by a tuning objective."""
    if kind is ConstellationKind.QPSK:
        return Constellation.qpsk()
    if kind is ConstellationKind.GAUSSIAN:
        return Constellation.gaussian()
    raise ConfigError(f"tuning does not support the {kind.value} constellation")


def objective_profile(objective: TuneObjective, step: float) -> MixedProfile:
    """Load profile of ``objective`` with every finite ADC at ``step``."""
    return MixedProfile.with_full_precision(
        AdcSpec.uniform(objective.bits, step),
        objective.load,
        objective.high_resolution_fraction,
    )


def metric_value(
    metric: Metric,
    detector: DetectorKind,
    constellation: Constellation,
    profile: MixedProfile,
    noise_variance: float,
    cfg: SeConfig,
    pqn: Optional[float] = None,
) -> float:
    """
    SE-predicted BER or MSE at the fixed point.

    Raises:
        NonConvergenceError: the fixed point was not reached; the metric of
            the best iterate rides along as ``value``.
    """
    solution = predict(detector, constellation, profile, noise_variance, cfg, pqn)
    if metric is Metric.BER:
        value = ber_qpsk(solution.params)
    else:
        value = mse_from_se(solution.moments)
    if not solution.converged:
        raise NonConvergenceError(
            "state evolution did not reach its fixed point",
            value=value,
            detector=detector.value,
            iterations=solution.iterations,
        )
    return value


def evaluate_step(objective: TuneObjective, step: float, cfg: SeConfig) -> float:
    """Objective metric at step size ``step``."""
    return metric_value(
        objective.metric,
        objective.detector,
        constellation_for(objective.constellation_kind),
        objective_profile(objective, step),
        objective.noise_variance,
        cfg,
    )


def step_irrelevant(objective: TuneObjective) -> bool:
    """1-bit DQ only sees signs, so Δ has no effect (as does an all-∞ bank)."""
    if objective.high_resolution_fraction >= 1.0:
        return True
    return objective.detector is DetectorKind.DQ and objective.bits == 1


def is_unimodal(values: Sequence[float], rtol: float = UNIMODAL_RTOL) -> bool:
    """Non-increasing up to the minimum, non-decreasing after it."""
    data = np.asarray(values, dtype=float)
    if not np.isfinite(data).any():
        return False
    best = int(np.nanargmin(np.where(np.isfinite(data), data, np.nan)))
    with np.errstate(invalid="ignore"):
        slack = rtol * np.maximum(np.abs(data[:-1]), np.abs(data[1:]))
        steps = np.diff(data)
        before = steps[:best]
        after = steps[best:]
        ok_before = np.all((before <= slack[:best]) | np.isnan(before))
        ok_after = np.all((after >= -slack[best:]) | np.isnan(after))
    return bool(ok_before and ok_after)


class _CountingObjective:
    """Wraps the metric, counts calls and maps SE failures to +inf."""

    def __init__(self, objective: TuneObjective, cfg: SeConfig) -> None:
        self.objective = objective
        self.cfg = cfg
        self.calls = 0
        self.nonconverged = 0

    def __call__(self, step: float) -> float:
        self.calls += 1
        try:
            return evaluate_step(self.objective, float(step), self.cfg)
        except NonConvergenceError:
            self.nonconverged += 1
            logger.debug("step_evaluation_nonconverged", step=step)
            return math.inf
        except NumericalError as exc:
            logger.debug("step_evaluation_failed", step=step, error=exc.detail)
            return math.inf


def optimize_step_size(
    objective: TuneObjective,
    cfg: SeConfig,
    bracket: Tuple[float, float] = DEFAULT_BRACKET,
    tol: float = STEP_TOLERANCE,
) -> StepOptimum:
    """
    Δ minimizing the SE-predicted metric of ``objective``.

    A coarse geometric grid locates the basin, then a bounded Brent search
    (golden section with parabolic steps) refines it to ``tol``. If its values
    are not unimodal, the minimizer of a dense uniform grid is returned with
    ``fallback`` set. Steps whose SE run does not converge score +inf and
    are counted in ``nonconverged``.
    """
    lo, hi = bracket
    if not 0.0 < lo < hi:
        raise ConfigError(f"invalid step bracket ({lo}, {hi})")
    if tol <= 0.0:
        raise ConfigError("step tolerance must be positive")

    func = _CountingObjective(objective, cfg)
    if step_irrelevant(objective):
        metric = func(1.0)
        return StepOptimum(
            step=None,
            metric=metric,
            irrelevant=True,
            evaluations=func.calls,
            nonconverged=func.nonconverged,
        )

    coarse = np.geomspace(lo, hi, COARSE_POINTS)
    values = np.array([func(step) for step in coarse])
    if not np.isfinite(values).any():
        if func.nonconverged == func.calls:
            raise NonConvergenceError(
                "state evolution did not converge at any coarse grid step",
                bracket=bracket,
            )
        raise NumericalError(
            "state evolution failed on every coarse grid step", bracket=bracket
        )

    if not is_unimodal(values):
        dense = np.linspace(lo, hi, FALLBACK_POINTS)
        dense_values = np.array([func(step) for step in dense])
        best = int(np.argmin(dense_values))
        logger.warning(
            "step_search_fallback",
            detector=objective.detector.value,
            bits=objective.bits,
            noise_variance=objective.noise_variance,
        )
        return StepOptimum(
            step=float(dense[best]),
            metric=float(dense_values[best]),
            fallback=True,
            evaluations=func.calls,
            nonconverged=func.nonconverged,
        )

    best = int(np.argmin(values))
    left = coarse[max(best - 1, 0)]
    right = coarse[min(best + 1, coarse.size - 1)]
    result = minimize_scalar(
        func, bounds=(left, right), method="bounded", options={"xatol": tol}
    )
    step, metric = float(result.x), float(result.fun)
    if values[best] < metric:
        step, metric = float(coarse[best]), float(values[best])
    if func.nonconverged:
        logger.warning(
            "step_search_nonconverged",
            detector=objective.detector.value,
            bits=objective.bits,
            count=func.nonconverged,
        )
    return StepOptimum(
        step=step,
        metric=metric,
        evaluations=func.calls,
        nonconverged=func.nonconverged,
    )


def normalize_step(step: float, noise_variance: float) -> float:
    """Normalized step √2·Δ/√(1 + σ_n²)."""
    if step <= 0.0:
        raise ValueError("step size must be positive")
    if noise_variance < 0.0:
        raise ValueError("noise variance must be nonnegative")
    return math.sqrt(2.0) * step / math.sqrt(1.0 + noise_variance)


def average_normalized_step(
    bits: int,
    detector: DetectorKind,
    cfg: SeConfig,
    snr_grid_db: Sequence[float] = NORMALIZED_STEP_SNR_GRID_DB,
    load: float = 4.0,
    metric: Metric = Metric.BER,
    threads: int = 1,
) -> float:
    """Mean normalized BER-optimal step over ``snr_grid_db``."""
    if detector is DetectorKind.DQ and bits == 1:
        raise ConfigError("the 1-bit DQ detector has no optimal step size")
    if not snr_grid_db:
        raise ConfigError("SNR grid must not be empty")

    def normalized(snr_db: float) -> float:
        noise_variance = snr_db_to_noise_variance(snr_db)
        objective = TuneObjective(
            metric=metric,
            detector=detector,
            load=load,
            noise_variance=noise_variance,
            bits=bits,
        )
        optimum = optimize_step_size(objective, cfg)
        assert optimum.step is not None
        return normalize_step(optimum.step, noise_variance)

    steps = ordered_map(normalized, list(snr_grid_db), threads)
    return float(np.mean(steps))


def _settle(func: Callable[[float], float], point: float) -> Tuple[float, bool]:
    """Metric at ``point`` and whether its SE run converged."""
    try:
        return float(func(point)), True
    except NonConvergenceError as exc:
        return float(exc.value), False


def _sweep(
    parameter: str,
    grid: Sequence[float],
    func: Callable[[float], float],
    threads: int,
    reference: Optional[float] = None,
) -> SweepResult:
    if not grid:
        raise ConfigError(f"{parameter} grid must not be empty")
    points = sorted(float(value) for value in grid)
    settled = ordered_map(lambda point: _settle(func, point), points, threads)
    pairs = tuple((point, value) for point, (value, _) in zip(points, settled))
    nonconverged = sum(1 for _, ok in settled if not ok)
    optimum = min(pairs, key=lambda pair: pair[1])
    ref = None
    if reference is not None:
        ref_value, ok = _settle(func, reference)
        ref = (float(reference), ref_value)
        nonconverged += 0 if ok else 1
    if nonconverged:
        logger.warning("sweep_nonconverged", parameter=parameter, count=nonconverged)
    logger.debug("sweep_done", parameter=parameter, grid=format_grid(points))
    return SweepResult(
        parameter=parameter,
        grid=pairs,
        optimum=optimum,
        reference=ref,
        nonconverged=nonconverged,
    )


def sweep_step_size(
    objective: TuneObjective,
    grid: Sequence[float],
    cfg: SeConfig,
    threads: int = 1,
) -> SweepResult:
    """Metric versus Δ, for curves like BER against step size."""
    if any(step <= 0.0 for step in grid):
        raise ConfigError("step sizes must be positive")
    return _sweep(
        "step", grid, lambda step: evaluate_step(objective, step, cfg), threads
    )


def sweep_sigma_q(
    grid: Sequence[float],
    spec: AdcSpec,
    load: float,
    noise_variance: float,
    cfg: SeConfig,
    threads: int = 1,
) -> SweepResult:
    """
    PDQ MSE for a Gaussian input as the assumed PQN variance varies.

    The reference point is the Δ²/12 rule for ``spec``.
    """
    if any(value < 0.0 for value in grid):
        raise ConfigError("PQN variances must be nonnegative")
    profile = MixedProfile.single(spec, load)
    gaussian = Constellation.gaussian()

    def mse(sigma_q2: float) -> float:
        return metric_value(
            Metric.MSE,
            DetectorKind.PDQ,
            gaussian,
            profile,
            noise_variance,
            cfg,
            pqn=sigma_q2,
        )

    return _sweep("sigma_q2", grid, mse, threads, reference=pqn_variance(spec))


def _fraction_metric(
    detector: DetectorKind,
    fraction: float,
    bits: int,
    step: Optional[float],
    load: float,
    noise_variance: float,
    constellation_kind: ConstellationKind,
    metric: Metric,
    cfg: SeConfig,
) -> Tuple[float, Optional[float], int]:
    """Metric, step and count of nonconverged SE runs at one fraction."""
    objective = TuneObjective(
        metric=metric,
        detector=detector,
        constellation_kind=constellation_kind,
        load=load,
        noise_variance=noise_variance,
        bits=bits,
        high_resolution_fraction=fraction,
    )
    if step is not None:
        value, ok = _settle(lambda s: evaluate_step(objective, s, cfg), step)
        return value, step, 0 if ok else 1
    optimum = optimize_step_size(objective, cfg)
    return optimum.metric, optimum.step, optimum.nonconverged


def sweep_mixed_profile(
    fractions: Sequence[float],
    bits: int,
    load: float,
    noise_variance: float,
    cfg: SeConfig,
    step: Optional[float] = None,
    constellation_kind: ConstellationKind = ConstellationKind.GAUSSIAN,
    metric: Metric = Metric.MSE,
    threads: int = 1,
) -> MixedSweep:
    """
    DQ and PDQ metrics on {(κ, λ(1−f)), (∞, λf)} for each fraction f.

    With ``step`` None each detector runs at its own optimal step per fraction.
    The gap is 10·log10(PDQ/DQ) at the same fraction.
    """
    if not fractions:
        raise ConfigError("fraction grid must not be empty")
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ConfigError("high-resolution fractions must lie in [0, 1]")
    points = sorted(float(f) for f in fractions)

    def run(detector: DetectorKind) -> List[Tuple[float, Optional[float], int]]:
        return ordered_map(
            lambda f: _fraction_metric(
                detector,
                f,
                bits,
                step,
                load,
                noise_variance,
                constellation_kind,
                metric,
                cfg,
            ),
            points,
            threads,
        )

    dq_runs, pdq_runs = run(DetectorKind.DQ), run(DetectorKind.PDQ)

    def as_result(runs: List[Tuple[float, Optional[float], int]]) -> SweepResult:
        pairs = tuple((f, float(value)) for f, (value, _, _) in zip(points, runs))
        return SweepResult(
            parameter="fraction",
            grid=pairs,
            optimum=min(pairs, key=lambda pair: pair[1]),
            nonconverged=sum(count for _, _, count in runs),
        )

    gaps = tuple(gap_db(p[0], d[0]) for p, d in zip(pdq_runs, dq_runs))
    logger.info(
        "mixed_sweep_done",
        bits=bits,
        load=load,
        fractions=format_grid(points),
        gaps=format_grid(gaps),
    )
    return MixedSweep(
        dq=as_result(dq_runs),
        pdq=as_result(pdq_runs),
        gap_db=gaps,
        dq_steps=tuple(s for _, s, _ in dq_runs),
        pdq_steps=tuple(s for _, s, _ in pdq_runs),
    )


def sweep_lambda(
    lambdas: Sequence[float],
    detector: DetectorKind,
    spec: AdcSpec,
    noise_variance: float,
    cfg: SeConfig,
    constellation: Optional[Constellation] = None,
    fraction: float = 0.0,
    metric: Metric = Metric.MSE,
    threads: int = 1,
) -> SweepResult:
    """Metric versus λ = N/K for a fixed ADC spec and high-resolution fraction."""
    if any(value <= 0.0 for value in lambdas):
        raise ConfigError("loads must be positive")
    prior = constellation or Constellation.gaussian()
    if metric is Metric.BER and prior.kind is not ConstellationKind.QPSK:
        raise ConfigError("BER requires the QPSK constellation")

    def value(load: float) -> float:
        profile = MixedProfile.with_full_precision(spec, load, fraction)
        return metric_value(metric, detector, prior, profile, noise_variance, cfg)

    return _sweep("load", lambdas, value, threads)


def snr_at_target(
    snr_db: Sequence[float], values: Sequence[float], target: float
) -> float:
    """
    SNR where a decreasing metric curve first reaches ``target``.

    Interpolates linearly in log10(metric). Returns NaN if the curve never
    crosses the target.
    """
    if target <= 0.0:
        raise ValueError("target must be positive")
    x = np.asarray(snr_db, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two matching SNR and metric points")
    order = np.argsort(x)
    x, y = x[order], y[order]
    log_target = math.log10(target)
    with np.errstate(divide="ignore"):
        log_y = np.log10(y)
    for i in range(x.size - 1):
        y0, y1 = log_y[i], log_y[i + 1]
        if y0 >= log_target >= y1:
            if y0 == y1:
                return float(x[i])
            if not np.isfinite(y1):
                return float(x[i + 1])
            return float(x[i] + (y0 - log_target) * (x[i + 1] - x[i]) / (y0 - y1))
    return math.nan


def gap_db(metric_a: float, metric_b: float) -> float:
    """10·log10(metric_a / metric_b)."""
    if metric_a <= 0.0 or metric_b <= 0.0:
        raise ValueError("metrics must be positive to compare in dB")
    return 10.0 * math.log10(metric_a / metric_b)
