"""
Detector configuration and GAMP state types.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import Field, model_validator

from . import BaseSchema
from .quantizer import AdcBank, AdcSpec
from .system import Constellation, ConstellationKind


class DetectorKind(str, Enum):
    """Bayes detectors realized by GAMP."""

    DQ = "DQ"
    PDQ = "PDQ"
    LINEAR = "Linear"


class OutputKind(str, Enum):
    """Likelihood used by the output step."""

    DQ = "DQ"
    PDQ = "PDQ"


class DenoiserKind(str, Enum):
    """Prior used by the input step."""

    DISCRETE = "Discrete"
    GAUSSIAN = "Gaussian"


class OutputChannel(BaseSchema):
    """
    Output-step likelihood.

    For DQ the per-antenna data is the AdcSpec of the bank plus ``noise_variance``.
    For PDQ it is γ_i = σ_q,i² + σ_n², where σ_q² defaults to Δ²/12 for finite
    ADCs (0 for full precision) unless ``pqn_variance`` overrides it.
    """

    kind: OutputKind
    noise_variance: float = Field(..., ge=0.0)
    pqn_variance: Optional[float] = Field(default=None, ge=0.0)

    def quantization_variance(self, spec: AdcSpec) -> float:
        """σ_q² for one ADC."""
        if spec.is_infinite:
            return 0.0
        if self.pqn_variance is not None:
            return self.pqn_variance
        return spec.delta**2 / 12.0

    def gamma(self, spec: AdcSpec) -> float:
        """Effective PQN variance γ = σ_q² + σ_n² per complex dimension."""
        return self.quantization_variance(spec) + self.noise_variance

    def gammas(self, bank: AdcBank) -> np.ndarray:
        return np.array([self.gamma(spec) for spec in bank.assignment])

    def with_noise(self, noise_variance: float) -> "OutputChannel":
        return self.model_copy(update={"noise_variance": noise_variance})


class InputDenoiser(BaseSchema):
    """Input-step prior: a discrete constellation or the unit Gaussian."""

    kind: DenoiserKind
    constellation: Optional[Constellation] = None

    @model_validator(mode="after")
    def _check_prior(self) -> "InputDenoiser":
        if self.kind is DenoiserKind.DISCRETE:
            if self.constellation is None or not self.constellation.is_discrete:
                raise ValueError("discrete denoiser needs a discrete constellation")
        return self

    @classmethod
    def gaussian(cls) -> "InputDenoiser":
        return cls(kind=DenoiserKind.GAUSSIAN)

    @classmethod
    def matched(cls, constellation: Constellation) -> "InputDenoiser":
        """Denoiser whose prior is the true input distribution."""
        if constellation.kind is ConstellationKind.GAUSSIAN:
            return cls.gaussian()
        return cls(kind=DenoiserKind.DISCRETE, constellation=constellation)


class GampConfig(BaseSchema):
    """Iteration controls for GAMP."""

    max_iterations: int = Field(default=20, ge=1, description="t_max")
    variance_floor: float = Field(default=1e-12, gt=0.0)
    damping: float = Field(default=0.0, ge=0.0, lt=1.0)
    convergence_tol: float = Field(
        default=0.0, ge=0.0, description="early stop on ||x^t - x^(t-1)||^2/K"
    )
    onsager_from_start: bool = Field(
        default=False, description="apply -v_p * g(p^0 = 0, v_p) at t = 1"
    )


@dataclass(frozen=True)
class GampState:
    """Snapshot after one GAMP iteration."""

    iteration: int
    x: np.ndarray
    v_x: np.ndarray
    p: np.ndarray
    v_p: np.ndarray
    z: np.ndarray
    v_z: np.ndarray
    s: np.ndarray
    v_s: np.ndarray
    clamped: int = 0
    change: float = float("nan")
    mse: Optional[float] = None


@dataclass(frozen=True)
class GampResult:
    """Final estimate and the per-iteration trace."""

    estimate: np.ndarray
    variance: np.ndarray
    trace: List[GampState] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def clamped(self) -> int:
        """Total number of v_s entries clamped to the floor."""
        return sum(state.clamped for state in self.trace)

    def mse_trajectory(self) -> List[float]:
        return [state.mse for state in self.trace if state.mse is not None]
