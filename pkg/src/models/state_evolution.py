"""
State-evolution parameters, moments and solver settings.
"""

from dataclasses import dataclass
from typing import Tuple

from pydantic import Field, model_validator

from . import BaseSchema


class SeConfig(BaseSchema):
    """Quadrature and fixed-point controls."""

    gauss_hermite_nodes: int = Field(default=40, ge=20)
    max_iterations: int = Field(default=500, ge=1)
    fixed_point_tol: float = Field(default=1e-10, gt=0.0)
    exact_level_bits: int = Field(
        default=8, ge=1, description="enumerate every level up to this resolution"
    )
    level_mass_cutoff: float = Field(default=1e-14, ge=0.0)
    oscillation_damping: float = Field(default=0.5, ge=0.0, lt=1.0)
    max_damping: float = Field(default=0.95, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_damping(self) -> "SeConfig":
        if self.oscillation_damping > self.max_damping:
            raise ValueError("oscillation_damping exceeds max_damping")
        return self


@dataclass(frozen=True)
class SeParams:
    """(A, D, E) of the scalar channel s = (D/E)x + (√A/E)z."""

    A: float
    D: float
    E: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.A, self.D, self.E)


@dataclass(frozen=True)
class SeMoments:
    """Second-order statistics of the estimate."""

    v_x: float
    c_xhat: float
    v_xhat: float
    v_xxhat: complex

    @classmethod
    def initial(cls, v_x: float = 1.0) -> "SeMoments":
        """Moments of the all-zero starting estimate."""
        return cls(v_x=v_x, c_xhat=v_x, v_xhat=0.0, v_xxhat=0.0 + 0.0j)


@dataclass(frozen=True)
class SeIterate:
    iteration: int
    params: SeParams
    moments: SeMoments
    mse: float


@dataclass(frozen=True)
class SeSolution:
    """Fixed point (or best iterate) and the trajectory leading to it."""

    params: SeParams
    moments: SeMoments
    iterations: int
    converged: bool
    trajectory: Tuple[SeIterate, ...] = ()

    def mse_trajectory(self, length: int) -> Tuple[float, ...]:
        """Per-iteration MSE padded with the last value to ``length`` entries."""
        values = [item.mse for item in self.trajectory[:length]]
        while len(values) < length:
            values.append(values[-1])
        return tuple(values)
