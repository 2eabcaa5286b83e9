"""
Experiment, tuning and provenance models.
"""

from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import Field, field_validator, model_validator

from . import BaseSchema
from .detector import DetectorKind, GampConfig
from .quantizer import AdcBank
from .system import ConstellationKind, SystemConfig


class Metric(str, Enum):
    """Figures of merit predicted by state evolution."""

    BER = "BER"
    MSE = "MSE"


class TuneObjective(BaseSchema):
    """Context in which a quantizer step size is optimized."""

    metric: Metric
    detector: DetectorKind
    constellation_kind: ConstellationKind = ConstellationKind.QPSK
    load: float = Field(..., gt=0.0, description="λ = N/K")
    noise_variance: float = Field(..., ge=0.0)
    bits: int = Field(..., ge=1)
    high_resolution_fraction: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_metric(self) -> "TuneObjective":
        qpsk = self.constellation_kind is ConstellationKind.QPSK
        if self.metric is Metric.BER and not qpsk:
            raise ValueError("BER objective requires the QPSK constellation")
        return self


@dataclass(frozen=True)
class StepOptimum:
    """Outcome of a step-size search.

    ``step`` is None when the objective does not depend on Δ (1-bit DQ).
    """

    step: Optional[float]
    metric: float
    irrelevant: bool = False
    fallback: bool = False
    evaluations: int = 0
    nonconverged: int = 0

    @property
    def converged(self) -> bool:
        """Every SE evaluation behind the search reached its fixed point."""
        return self.nonconverged == 0


@dataclass(frozen=True)
class SweepResult:
    """Metric evaluated over a parameter grid, sorted by parameter value."""

    parameter: str
    grid: Tuple[Tuple[float, float], ...]
    optimum: Tuple[float, float]
    reference: Optional[Tuple[float, float]] = None
    nonconverged: int = 0

    @property
    def values(self) -> Tuple[float, ...]:
        return tuple(point for point, _ in self.grid)

    @property
    def metrics(self) -> Tuple[float, ...]:
        return tuple(metric for _, metric in self.grid)


class ExperimentSpec(BaseSchema):
    """One Monte Carlo experiment: a detector on a bank over an SNR grid."""

    system: SystemConfig
    bank: AdcBank
    detector: DetectorKind
    pqn_variance: Optional[float] = Field(default=None, ge=0.0)
    gamp: GampConfig = Field(default_factory=GampConfig)
    trials: int = Field(..., ge=1)
    base_seed: int = Field(default=0, ge=0)
    snr_grid_db: Tuple[float, ...] = Field(..., min_length=1)

    @field_validator("snr_grid_db")
    @classmethod
    def _finite_grid(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(v != v or v in (float("inf"), float("-inf")) for v in value):
            raise ValueError("SNR grid entries must be finite")
        return value

    @model_validator(mode="after")
    def _check_bank(self) -> "ExperimentSpec":
        if len(self.bank) != self.system.num_antennas:
            antennas = self.system.num_antennas
            raise ValueError(f"bank has {len(self.bank)} ADCs for {antennas} antennas")
        return self


@dataclass(frozen=True)
class SnrRecord:
    """Aggregated Monte Carlo statistics at one SNR."""

    snr_db: float
    noise_variance: float
    ber: float
    ber_stderr: float
    mse: float
    mse_stderr: float
    bit_errors: int
    bits_total: int
    trials_run: int
    nonconverged: int
    mse_trajectory: Tuple[float, ...] = ()


@dataclass(frozen=True)
class ExperimentResult:
    """Per-SNR records plus provenance metadata."""

    records: Tuple[SnrRecord, ...]
    spec_hash: str
    base_seed: int
    timestamp: datetime

    @property
    def nonconverged(self) -> int:
        return sum(record.nonconverged for record in self.records)


class RunManifest(BaseSchema):
    """Provenance written next to every output table."""

    command: str
    config_path: str
    resolved_spec: Dict[str, Any]
    output_paths: List[str] = Field(default_factory=list)
    code_version: str
    wall_time_s: float = Field(..., ge=0.0)
    started_at: datetime
    exit_code: int = 0
