"""
Pydantic schemas for the experiment config files, one per subcommand.

Every config names its subcommand in ``command``; unknown keys are rejected.
SNRs are given in dB and converted to noise variances when specs are built.
"""

import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import (
    AfterValidator,
    Field,
    PositiveInt,
    TypeAdapter,
    ValidationError,
    model_validator,
)

from ..config.settings import Settings
from ..models import (
    AdcBank,
    AdcSpec,
    BaseSchema,
    Constellation,
    ConstellationKind,
    DetectorKind,
    ExperimentSpec,
    GampConfig,
    Metric,
    MixedProfile,
    ProfileEntry,
    SeConfig,
    SystemConfig,
)

FRACTION_TOLERANCE = 1e-9

Fraction = Annotated[float, Field(ge=0.0, le=1.0)]
PositiveFloat = Annotated[float, Field(gt=0.0)]


def _finite_grid(values: List[float]) -> List[float]:
    if any(not math.isfinite(v) for v in values):
        raise ValueError("SNR grid entries must be finite")
    return values


SnrGrid = Annotated[List[float], Field(min_length=1), AfterValidator(_finite_grid)]


class AdcGroup(BaseSchema):
    """A run of antennas sharing one ADC, sized by ``count`` or ``fraction``."""

    bits: Union[PositiveInt, Literal["inf"]]
    step: Optional[PositiveFloat] = None
    count: Optional[int] = Field(default=None, ge=0)
    fraction: Optional[Fraction] = None

    @model_validator(mode="after")
    def _check_size(self) -> "AdcGroup":
        if (self.count is None) == (self.fraction is None):
            raise ValueError("give exactly one of count or fraction")
        try:
            self.spec()
        except ValidationError as exc:
            raise ValueError(exc.errors()[0]["msg"]) from exc
        return self

    def spec(self) -> AdcSpec:
        if self.bits == "inf":
            return AdcSpec.infinite()
        return AdcSpec(bits=self.bits, step=self.step)


class BankSection(BaseSchema):
    groups: List[AdcGroup] = Field(..., min_length=1)

    def build(self, num_antennas: int) -> AdcBank:
        """Per-antenna bank; fractions are rounded to whole antennas."""
        sized = []
        for group in self.groups:
            if group.count is not None:
                count = group.count
            else:
                assert group.fraction is not None
                count = int(round(group.fraction * num_antennas))
            sized.append((group.spec(), count))
        total = sum(count for _, count in sized)
        if total != num_antennas:
            raise ValueError(f"bank groups cover {total} of {num_antennas} antennas")
        return AdcBank.from_groups(sized)


class ProfileSection(BaseSchema):
    """Mixed profile as fractions of the antennas; scaled by λ when built."""

    groups: List[AdcGroup] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_fractions(self) -> "ProfileSection":
        if any(group.fraction is None for group in self.groups):
            raise ValueError("profile groups are sized by fraction")
        total = sum(group.fraction or 0.0 for group in self.groups)
        if abs(total - 1.0) > FRACTION_TOLERANCE:
            raise ValueError(f"profile fractions sum to {total:g}, expected 1")
        return self

    def build(self, load: float) -> MixedProfile:
        entries = tuple(
            ProfileEntry(spec=group.spec(), load=load * (group.fraction or 0.0))
            for group in self.groups
            if group.fraction
        )
        return MixedProfile(entries=entries)


class SystemSection(BaseSchema):
    num_users: int = Field(..., ge=1)
    num_antennas: int = Field(..., ge=1)
    constellation: Constellation = Field(default_factory=Constellation.qpsk)


def se_config(section: Optional[SeConfig], settings: Settings) -> SeConfig:
    """Config section if present, otherwise the process-level defaults."""
    if section is not None:
        return section
    return SeConfig(
        gauss_hermite_nodes=settings.gauss_hermite_nodes,
        max_iterations=settings.se_max_iterations,
        fixed_point_tol=settings.se_tolerance,
    )


def gamp_config(section: Optional[GampConfig], settings: Settings) -> GampConfig:
    if section is not None:
        return section
    return GampConfig(
        max_iterations=settings.gamp_max_iterations,
        variance_floor=settings.gamp_variance_floor,
        convergence_tol=settings.gamp_tolerance,
    )


class SimulateConfig(BaseSchema):
    """Monte Carlo runs of every detector on every bank."""

    command: Literal["simulate"]
    system: SystemSection
    detectors: List[DetectorKind] = Field(..., min_length=1)
    banks: List[BankSection] = Field(..., min_length=1)
    snr_db: SnrGrid
    trials: Optional[PositiveInt] = None
    base_seed: int = Field(default=0, ge=0)
    pqn_variance: Optional[float] = Field(default=None, ge=0.0)
    gamp: Optional[GampConfig] = None

    @model_validator(mode="after")
    def _check_banks(self) -> "SimulateConfig":
        for bank in self.banks:
            bank.build(self.system.num_antennas)
        return self

    def experiments(
        self, settings: Settings, seed: Optional[int] = None
    ) -> List[ExperimentSpec]:
        """One spec per (bank, detector), banks outermost."""
        system = SystemConfig(
            num_users=self.system.num_users,
            num_antennas=self.system.num_antennas,
            constellation=self.system.constellation,
        )
        gamp = gamp_config(self.gamp, settings)
        trials = self.trials or settings.default_trials
        base_seed = self.base_seed if seed is None else seed
        return [
            ExperimentSpec(
                system=system,
                bank=bank.build(system.num_antennas),
                detector=detector,
                pqn_variance=self.pqn_variance,
                gamp=gamp,
                trials=trials,
                base_seed=base_seed,
                snr_grid_db=tuple(self.snr_db),
            )
            for bank in self.banks
            for detector in self.detectors
        ]


class SePredictConfig(BaseSchema):
    """State-evolution predictions over profiles, loads and SNRs."""

    command: Literal["se-predict"]
    constellation: Constellation = Field(default_factory=Constellation.qpsk)
    detectors: List[DetectorKind] = Field(..., min_length=1)
    loads: List[PositiveFloat] = Field(..., min_length=1)
    profiles: List[ProfileSection] = Field(..., min_length=1)
    snr_db: SnrGrid
    pqn_variance: Optional[float] = Field(default=None, ge=0.0)
    se: Optional[SeConfig] = None


class TuneStepConfig(BaseSchema):
    """Optimal step sizes (and optionally metric-versus-step curves)."""

    command: Literal["tune-step"]
    detectors: List[DetectorKind] = Field(..., min_length=1)
    bits: List[PositiveInt] = Field(..., min_length=1)
    snr_db: SnrGrid
    load: PositiveFloat = 4.0
    metric: Metric = Metric.BER
    constellation: ConstellationKind = ConstellationKind.QPSK
    high_resolution_fraction: Fraction = 0.0
    bracket: Tuple[PositiveFloat, PositiveFloat] = (0.01, 8.0)
    tolerance: PositiveFloat = 1e-3
    step_grid: Optional[List[PositiveFloat]] = None
    se: Optional[SeConfig] = None

    @model_validator(mode="after")
    def _check_context(self) -> "TuneStepConfig":
        qpsk = self.constellation is ConstellationKind.QPSK
        if self.metric is Metric.BER and not qpsk:
            raise ValueError("BER objective requires the QPSK constellation")
        if self.constellation is ConstellationKind.DISCRETE:
            raise ValueError("step tuning supports QPSK and Gaussian inputs")
        if self.bracket[0] >= self.bracket[1]:
            raise ValueError("bracket must be (low, high) with low < high")
        return self


class SweepMixedConfig(BaseSchema):
    """DQ versus PDQ over high-resolution fractions."""

    command: Literal["sweep-mixed"]
    bits: PositiveInt
    step: Optional[PositiveFloat] = None
    loads: List[PositiveFloat] = Field(..., min_length=1)
    fractions: List[Fraction] = Field(..., min_length=1)
    snr_db: SnrGrid
    constellation: ConstellationKind = ConstellationKind.GAUSSIAN
    metric: Metric = Metric.MSE
    se: Optional[SeConfig] = None

    @model_validator(mode="after")
    def _check_context(self) -> "SweepMixedConfig":
        qpsk = self.constellation is ConstellationKind.QPSK
        if self.metric is Metric.BER and not qpsk:
            raise ValueError("BER requires the QPSK constellation")
        if self.constellation is ConstellationKind.DISCRETE:
            raise ValueError("mixed sweeps support QPSK and Gaussian inputs")
        return self


AnyConfig = Annotated[
    Union[SimulateConfig, SePredictConfig, TuneStepConfig, SweepMixedConfig],
    Field(discriminator="command"),
]

CONFIG_ADAPTER: TypeAdapter = TypeAdapter(AnyConfig)

__all__ = [
    "AdcGroup",
    "AnyConfig",
    "BankSection",
    "CONFIG_ADAPTER",
    "ProfileSection",
    "SePredictConfig",
    "SimulateConfig",
    "SweepMixedConfig",
    "SystemSection",
    "TuneStepConfig",
    "gamp_config",
    "se_config",
]
