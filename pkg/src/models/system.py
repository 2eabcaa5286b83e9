"""
Uplink system model: users, antennas, noise and the input constellation.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import Field, model_validator

from . import BaseSchema

POWER_TOLERANCE = 1e-9


class ConstellationKind(str, Enum):
    """Input distributions P_in(x)."""

    QPSK = "QPSK"
    GAUSSIAN = "Gaussian"
    DISCRETE = "DiscreteSet"


class Constellation(BaseSchema):
    """
    Unit-power input distribution.

    Points are stored as (real, imag) pairs so the model round-trips through
    JSON. QPSK points are listed in the canonical order used for tie-breaking:
    (+,+), (−,+), (−,−), (+,−), each scaled by 1/√2.
    """

    kind: ConstellationKind
    points: Optional[List[Tuple[float, float]]] = None
    probabilities: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_distribution(self) -> "Constellation":
        if self.kind is not ConstellationKind.DISCRETE:
            if self.points is not None or self.probabilities is not None:
                raise ValueError(f"{self.kind.value} constellation takes no points")
            return self
        if not self.points:
            raise ValueError("DiscreteSet constellation needs at least one point")
        if self.probabilities is None or len(self.probabilities) != len(self.points):
            raise ValueError("one probability per point is required")
        probs = np.asarray(self.probabilities, dtype=float)
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > POWER_TOLERANCE:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        power = float(np.sum(probs * np.abs(self.symbols) ** 2))
        if abs(power - 1.0) > POWER_TOLERANCE:
            raise ValueError(
                f"constellation must have unit average power, got {power:.6g}"
            )
        return self

    @classmethod
    def qpsk(cls) -> "Constellation":
        return cls(kind=ConstellationKind.QPSK)

    @classmethod
    def gaussian(cls) -> "Constellation":
        return cls(kind=ConstellationKind.GAUSSIAN)

    @classmethod
    def discrete(
        cls, points: List[complex], probabilities: Optional[List[float]] = None
    ) -> "Constellation":
        """Discrete set, uniform unless probabilities are given."""
        if probabilities is None:
            probabilities = [1.0 / len(points)] * len(points)
        return cls(
            kind=ConstellationKind.DISCRETE,
            points=[(complex(p).real, complex(p).imag) for p in points],
            probabilities=list(probabilities),
        )

    @property
    def is_discrete(self) -> bool:
        return self.kind is not ConstellationKind.GAUSSIAN

    @property
    def symbols(self) -> np.ndarray:
        """Complex points in canonical order."""
        if self.kind is ConstellationKind.QPSK:
            return np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)
        if self.kind is ConstellationKind.DISCRETE:
            assert self.points is not None
            return np.array([complex(re, im) for re, im in self.points])
        raise ValueError("Gaussian constellation has no discrete points")

    @property
    def priors(self) -> np.ndarray:
        """Point probabilities aligned with :attr:`symbols`."""
        if self.kind is ConstellationKind.QPSK:
            return np.full(4, 0.25)
        if self.kind is ConstellationKind.DISCRETE:
            assert self.probabilities is not None
            return np.asarray(self.probabilities, dtype=float)
        raise ValueError("Gaussian constellation has no discrete points")


class SystemConfig(BaseSchema):
    """K single-antenna users, N receive antennas, noise per complex dimension."""

    num_users: int = Field(..., ge=1, description="K")
    num_antennas: int = Field(..., ge=1, description="N")
    noise_variance: float = Field(default=1.0, ge=0.0, description="σ_n²")
    constellation: Constellation = Field(default_factory=Constellation.qpsk)

    @property
    def load(self) -> float:
        """Antenna-to-user ratio λ = N/K."""
        return self.num_antennas / self.num_users

    @property
    def snr(self) -> float:
        if self.noise_variance == 0.0:
            return float("inf")
        return 1.0 / self.noise_variance


@dataclass(frozen=True)
class ChannelRealization:
    """N×K channel matrix H with E|H_ij|² = 1/K."""

    matrix: np.ndarray

    @property
    def num_antennas(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def num_users(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def power(self) -> np.ndarray:
        """Entry-wise |H_ij|²."""
        return np.abs(self.matrix) ** 2
