"""
Subcommand implementations.

Each command validates its config, runs the computation, writes CSV tables
named after the config file and a run manifest next to them, and returns the
process exit code it wants reported.
"""

import sys
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Type, TypeVar

import numpy as np
import structlog
from pydantic import BaseModel, ValidationError

from .. import __version__
from ..config import dump_config, locate_key, read_config, validate_config
from ..config.settings import Settings
from ..models import (
    ConstellationKind,
    DetectorKind,
    RunManifest,
    SeSolution,
    StepOptimum,
    SweepResult,
    TuneObjective,
)
from ..repositories import CsvResultRepository, ManifestRepository
from ..services.harness import run_monte_carlo
from ..services.quantizer import gaussian_optimal_step
from ..services.state_evolution import ber_qpsk, mse_from_se, predict
from ..services.tuning import (
    normalize_step,
    optimize_step_size,
    sweep_mixed_profile,
    sweep_step_size,
)
from ..utils.exceptions import ConfigError, NonConvergenceError
from ..utils.helpers import ordered_map, snr_db_to_noise_variance, utc_now
from .schemas import (
    CONFIG_ADAPTER,
    SePredictConfig,
    SimulateConfig,
    SweepMixedConfig,
    TuneStepConfig,
    se_config,
)

logger = structlog.get_logger(__name__)

ConfigType = TypeVar("ConfigType", bound=BaseModel)

EXIT_OK = 0
EXIT_NONCONVERGED = NonConvergenceError.exit_code
IRRELEVANT = "irrelevant"

SIMULATE_COLUMNS = (
    "snr_db",
    "detector",
    "bits",
    "steps",
    "ber",
    "ber_stderr",
    "mse",
    "mse_stderr",
    "trials",
    "nonconverged",
)
SE_COLUMNS = (
    "snr_db",
    "detector",
    "load",
    "bits",
    "steps",
    "ber",
    "mse",
    "A",
    "D",
    "E",
    "iterations",
    "converged",
)
TUNE_COLUMNS = (
    "snr_db",
    "bits",
    "detector",
    "step",
    "step_norm",
    "metric",
    "fallback",
    "nonconverged",
)
NORMALIZED_COLUMNS = (
    "bits",
    "detector",
    "mean_step_norm",
    "reference_step",
    "snr_points",
)
STEP_SWEEP_COLUMNS = ("snr_db", "bits", "detector", "step", "metric")
MIXED_COLUMNS = (
    "snr_db",
    "load",
    "fraction",
    "bits",
    "dq_step",
    "pdq_step",
    "dq_metric",
    "pdq_metric",
    "gap_db",
    "nonconverged",
)


@dataclass(frozen=True)
class CommandContext:
    """Resolved command-line options shared by every subcommand."""

    config_path: Path
    out_dir: Path
    threads: int
    settings: Settings
    seed: Optional[int] = None

    @property
    def stem(self) -> str:
        return self.config_path.stem


@dataclass(frozen=True)
class CommandOutcome:
    command: str
    resolved: Dict[str, Any]
    outputs: Tuple[Path, ...] = ()
    exit_code: int = EXIT_OK


def _load(ctx: CommandContext, schema: Type[ConfigType], command: str) -> ConfigType:
    data, text = read_config(ctx.config_path)
    config = validate_config(CONFIG_ADAPTER, data, text)
    if not isinstance(config, schema):
        raise ConfigError(
            f"config is for '{data.get('command')}', not '{command}'",
            line=locate_key(text, ("command",)),
        )
    return config


def _guard(build: Callable[[], Any]) -> Any:
    """Run a spec builder, reporting late validation failures as config errors."""
    try:
        return build()
    except ValidationError as exc:
        raise ConfigError(str(exc.errors()[0]["msg"])) from exc


def _format_step(step: Optional[float]) -> str:
    return IRRELEVANT if step is None else f"{step:.10e}"


def _finish(
    ctx: CommandContext,
    command: str,
    config: BaseModel,
    outputs: List[Path],
    exit_code: int,
    started: float,
    started_at: datetime,
) -> CommandOutcome:
    resolved = dump_config(config)
    manifest = RunManifest(
        command=command,
        config_path=str(ctx.config_path),
        resolved_spec=resolved,
        output_paths=[str(path) for path in outputs],
        code_version=__version__,
        wall_time_s=time.perf_counter() - started,
        started_at=started_at,
        exit_code=exit_code,
    )
    path = ManifestRepository(ctx.out_dir).save(ctx.stem, manifest)
    logger.info("command_done", command=command, exit_code=exit_code)
    return CommandOutcome(
        command=command,
        resolved=resolved,
        outputs=tuple(outputs) + (path,),
        exit_code=exit_code,
    )


def cmd_simulate(ctx: CommandContext) -> CommandOutcome:
    """Monte Carlo BER/MSE for every (bank, detector) over the SNR grid."""
    started, started_at = time.perf_counter(), utc_now()
    config = _load(ctx, SimulateConfig, "simulate")
    if ctx.seed is not None:
        config = config.model_copy(update={"base_seed": ctx.seed})
    specs = _guard(lambda: config.experiments(ctx.settings))

    rows: List[Dict[str, Any]] = []
    nonconverged = 0
    for spec in specs:
        bits, steps = spec.bank.describe()
        result = run_monte_carlo(spec, ctx.threads)
        nonconverged += result.nonconverged
        for record in result.records:
            rows.append(
                {
                    "snr_db": record.snr_db,
                    "detector": spec.detector.value,
                    "bits": bits,
                    "steps": steps,
                    "ber": record.ber,
                    "ber_stderr": record.ber_stderr,
                    "mse": record.mse,
                    "mse_stderr": record.mse_stderr,
                    "trials": record.trials_run,
                    "nonconverged": record.nonconverged,
                }
            )

    csv = CsvResultRepository(ctx.out_dir)
    outputs = [csv.save_rows(ctx.stem, SIMULATE_COLUMNS, rows)]
    exit_code = EXIT_NONCONVERGED if nonconverged else EXIT_OK
    if nonconverged:
        logger.warning("trials_nonconverged", count=nonconverged)
    return _finish(ctx, "simulate", config, outputs, exit_code, started, started_at)


def _se_row(
    snr_db: float,
    detector: DetectorKind,
    load: float,
    labels: Tuple[str, str],
    solution: SeSolution,
    qpsk: bool,
) -> Dict[str, Any]:
    return {
        "snr_db": snr_db,
        "detector": detector.value,
        "load": load,
        "bits": labels[0],
        "steps": labels[1],
        "ber": ber_qpsk(solution.params) if qpsk else float("nan"),
        "mse": mse_from_se(solution.moments),
        "A": solution.params.A,
        "D": solution.params.D,
        "E": solution.params.E,
        "iterations": solution.iterations,
        "converged": solution.converged,
    }


def cmd_se_predict(ctx: CommandContext) -> CommandOutcome:
    """SE fixed points for every (profile, load, detector, SNR)."""
    started, started_at = time.perf_counter(), utc_now()
    config = _load(ctx, SePredictConfig, "se-predict")
    cfg = se_config(config.se, ctx.settings)
    constellation = config.constellation
    qpsk = constellation.kind is ConstellationKind.QPSK

    tasks = [
        (profile, load, detector, snr_db)
        for profile in config.profiles
        for load in config.loads
        for detector in config.detectors
        for snr_db in config.snr_db
    ]

    def evaluate(task: Tuple[Any, float, DetectorKind, float]) -> Dict[str, Any]:
        section, load, detector, snr_db = task
        profile = _guard(lambda: section.build(load))
        solution = predict(
            detector,
            constellation,
            profile,
            snr_db_to_noise_variance(snr_db),
            cfg,
            config.pqn_variance,
        )
        return _se_row(snr_db, detector, load, profile.describe(), solution, qpsk)

    rows = ordered_map(evaluate, tasks, ctx.threads)
    unconverged = sum(1 for row in rows if not row["converged"])
    csv = CsvResultRepository(ctx.out_dir)
    outputs = [csv.save_rows(ctx.stem, SE_COLUMNS, rows)]
    exit_code = EXIT_NONCONVERGED if unconverged else EXIT_OK
    if unconverged:
        logger.warning("se_points_nonconverged", count=unconverged)
    return _finish(ctx, "se-predict", config, outputs, exit_code, started, started_at)


def cmd_tune_step(ctx: CommandContext) -> CommandOutcome:
    """Optimal and normalized step sizes over (bits, detector, SNR)."""
    started, started_at = time.perf_counter(), utc_now()
    config = _load(ctx, TuneStepConfig, "tune-step")
    cfg = se_config(config.se, ctx.settings)

    tasks = [
        (bits, detector, snr_db)
        for bits in config.bits
        for detector in config.detectors
        for snr_db in config.snr_db
    ]

    def objective(bits: int, detector: DetectorKind, snr_db: float) -> TuneObjective:
        return _guard(
            lambda: TuneObjective(
                metric=config.metric,
                detector=detector,
                constellation_kind=config.constellation,
                load=config.load,
                noise_variance=snr_db_to_noise_variance(snr_db),
                bits=bits,
                high_resolution_fraction=config.high_resolution_fraction,
            )
        )

    def tune(task: Tuple[int, DetectorKind, float]) -> StepOptimum:
        bits, detector, snr_db = task
        return optimize_step_size(
            objective(bits, detector, snr_db),
            cfg,
            bracket=config.bracket,
            tol=config.tolerance,
        )

    optima = ordered_map(tune, tasks, ctx.threads)
    rows: List[Dict[str, Any]] = []
    normalized: Dict[Tuple[int, DetectorKind], List[float]] = {}
    for (bits, detector, snr_db), optimum in zip(tasks, optima):
        step_norm: Optional[float] = None
        if optimum.step is not None:
            step_norm = normalize_step(optimum.step, snr_db_to_noise_variance(snr_db))
            normalized.setdefault((bits, detector), []).append(step_norm)
        rows.append(
            {
                "snr_db": snr_db,
                "bits": bits,
                "detector": detector.value,
                "step": _format_step(optimum.step),
                "step_norm": _format_step(step_norm),
                "metric": optimum.metric,
                "fallback": optimum.fallback,
                "nonconverged": optimum.nonconverged,
            }
        )

    csv = CsvResultRepository(ctx.out_dir)
    outputs = [csv.save_rows(ctx.stem, TUNE_COLUMNS, rows)]
    summary = [
        {
            "bits": bits,
            "detector": detector.value,
            "mean_step_norm": float(np.mean(values)),
            "reference_step": gaussian_optimal_step(bits),
            "snr_points": len(values),
        }
        for (bits, detector), values in normalized.items()
    ]
    outputs.append(
        csv.save_rows(f"{ctx.stem}_normalized", NORMALIZED_COLUMNS, summary)
    )

    nonconverged = sum(optimum.nonconverged for optimum in optima)
    if config.step_grid:
        grid = config.step_grid

        def sweep(task: Tuple[int, DetectorKind, float]) -> SweepResult:
            bits, detector, snr_db = task
            return sweep_step_size(objective(bits, detector, snr_db), grid, cfg)

        curves = ordered_map(sweep, tasks, ctx.threads)
        sweep_rows = [
            {
                "snr_db": snr_db,
                "bits": bits,
                "detector": detector.value,
                "step": step,
                "metric": metric,
            }
            for (bits, detector, snr_db), curve in zip(tasks, curves)
            for step, metric in curve.grid
        ]
        nonconverged += sum(curve.nonconverged for curve in curves)
        outputs.append(
            csv.save_rows(f"{ctx.stem}_sweep", STEP_SWEEP_COLUMNS, sweep_rows)
        )

    exit_code = EXIT_NONCONVERGED if nonconverged else EXIT_OK
    if nonconverged:
        logger.warning("step_tuning_nonconverged", count=nonconverged)
    return _finish(ctx, "tune-step", config, outputs, exit_code, started, started_at)


def cmd_sweep_mixed(ctx: CommandContext) -> CommandOutcome:
    """DQ and PDQ metrics and their gap over high-resolution fractions."""
    started, started_at = time.perf_counter(), utc_now()
    config = _load(ctx, SweepMixedConfig, "sweep-mixed")
    cfg = se_config(config.se, ctx.settings)

    rows: List[Dict[str, Any]] = []
    nonconverged = 0
    for snr_db in config.snr_db:
        for load in config.loads:
            sweep = sweep_mixed_profile(
                config.fractions,
                config.bits,
                load,
                snr_db_to_noise_variance(snr_db),
                cfg,
                step=config.step,
                constellation_kind=config.constellation,
                metric=config.metric,
                threads=ctx.threads,
            )
            nonconverged += sweep.nonconverged
            for i, fraction in enumerate(sweep.fractions):
                rows.append(
                    {
                        "snr_db": snr_db,
                        "load": load,
                        "fraction": fraction,
                        "bits": config.bits,
                        "dq_step": _format_step(sweep.dq_steps[i]),
                        "pdq_step": _format_step(sweep.pdq_steps[i]),
                        "dq_metric": sweep.dq.metrics[i],
                        "pdq_metric": sweep.pdq.metrics[i],
                        "gap_db": sweep.gap_db[i],
                        "nonconverged": sweep.nonconverged,
                    }
                )

    csv = CsvResultRepository(ctx.out_dir)
    outputs = [csv.save_rows(ctx.stem, MIXED_COLUMNS, rows)]
    exit_code = EXIT_NONCONVERGED if nonconverged else EXIT_OK
    if nonconverged:
        logger.warning("mixed_sweep_nonconverged", count=nonconverged)
    return _finish(ctx, "sweep-mixed", config, outputs, exit_code, started, started_at)


def cmd_validate(ctx: CommandContext) -> CommandOutcome:
    """Parse and validate any config; print the resolved form."""
    data, text = read_config(ctx.config_path)
    config = validate_config(CONFIG_ADAPTER, data, text)
    if isinstance(config, SimulateConfig):
        _guard(lambda: config.experiments(ctx.settings, ctx.seed))
    elif isinstance(config, SePredictConfig):
        for section in config.profiles:
            for load in config.loads:
                _guard(lambda: section.build(load))
    sys.stdout.write(config.model_dump_json(indent=2) + "\n")
    logger.info("config_valid", path=str(ctx.config_path), command=config.command)
    return CommandOutcome(command="validate", resolved=dump_config(config))


COMMANDS: Dict[str, Callable[[CommandContext], CommandOutcome]] = {
    "simulate": cmd_simulate,
    "se-predict": cmd_se_predict,
    "tune-step": cmd_tune_step,
    "sweep-mixed": cmd_sweep_mixed,
    "validate": cmd_validate,
}

__all__ = [
    "COMMANDS",
    "CommandContext",
    "CommandOutcome",
    "cmd_se_predict",
    "cmd_simulate",
    "cmd_sweep_mixed",
    "cmd_tune_step",
    "cmd_validate",
]
