"""
Domain models.

Configuration-like types are immutable pydantic models built on
:class:`BaseSchema`; computed results that carry arrays are frozen dataclasses.
"""

from pydantic import BaseModel, ConfigDict


class BaseSchema(BaseModel):
    """Base schema with common configuration."""

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        str_strip_whitespace=True,
        use_enum_values=False,
    )


from .detector import (  # noqa: E402
    DenoiserKind,
    DetectorKind,
    GampConfig,
    GampResult,
    GampState,
    InputDenoiser,
    OutputChannel,
    OutputKind,
)
from .experiment import (  # noqa: E402
    ExperimentResult,
    ExperimentSpec,
    Metric,
    RunManifest,
    SnrRecord,
    StepOptimum,
    SweepResult,
    TuneObjective,
)
from .quantizer import (  # noqa: E402
    INFINITE_BITS,
    AdcBank,
    AdcSpec,
    MixedProfile,
    ProfileEntry,
    QuantInterval,
)
from .state_evolution import (  # noqa: E402
    SeConfig,
    SeIterate,
    SeMoments,
    SeParams,
    SeSolution,
)
from .system import (  # noqa: E402
    ChannelRealization,
    Constellation,
    ConstellationKind,
    SystemConfig,
)

__all__ = [
    "BaseSchema",
    "DenoiserKind",
    "DetectorKind",
    "GampConfig",
    "GampResult",
    "GampState",
    "InputDenoiser",
    "OutputChannel",
    "OutputKind",
    "ExperimentResult",
    "ExperimentSpec",
    "Metric",
    "RunManifest",
    "SnrRecord",
    "StepOptimum",
    "SweepResult",
    "TuneObjective",
    "INFINITE_BITS",
    "AdcBank",
    "AdcSpec",
    "MixedProfile",
    "ProfileEntry",
    "QuantInterval",
    "SeConfig",
    "SeIterate",
    "SeMoments",
    "SeParams",
    "SeSolution",
    "ChannelRealization",
    "Constellation",
    "ConstellationKind",
    "SystemConfig",
]
