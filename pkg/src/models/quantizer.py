"""
ADC descriptions: per-antenna quantizer specs, the antenna bank and the
mixed-resolution load profile consumed by state evolution.
"""

import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import Field, PositiveInt, model_validator

from . import BaseSchema

INFINITE_BITS = "inf"
MAX_FINITE_BITS = 24


class AdcSpec(BaseSchema):
    """
    Uniform midrise quantizer with ``bits`` resolution and step ``step``.

    ``bits == "inf"`` is the full-precision ADC (identity map); its step is
    ignored.
    """

    bits: Union[PositiveInt, Literal["inf"]]
    step: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="before")
    @classmethod
    def _drop_infinite_step(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("bits") == INFINITE_BITS:
            data = {key: value for key, value in data.items() if key != "step"}
        return data

    @model_validator(mode="after")
    def _check_step(self) -> "AdcSpec":
        if self.bits == INFINITE_BITS:
            return self
        assert isinstance(self.bits, int)
        if self.bits > MAX_FINITE_BITS:
            raise ValueError(f"at most {MAX_FINITE_BITS} bits are supported")
        if self.step is None:
            raise ValueError(f"{self.bits}-bit ADC needs a step size")
        return self

    @classmethod
    def infinite(cls) -> "AdcSpec":
        return cls(bits=INFINITE_BITS)

    @classmethod
    def uniform(cls, bits: int, step: float) -> "AdcSpec":
        return cls(bits=bits, step=step)

    @property
    def is_infinite(self) -> bool:
        return self.bits == INFINITE_BITS

    @property
    def num_levels(self) -> int:
        """|R_κ| = 2^κ."""
        if self.is_infinite:
            raise ValueError("full-precision ADC has no finite alphabet")
        return 2 ** int(self.bits)

    @property
    def half_levels(self) -> int:
        """2^κ / 2, the largest level index."""
        return self.num_levels // 2

    @property
    def delta(self) -> float:
        """Step size; only meaningful for finite specs."""
        if self.step is None:
            raise ValueError("full-precision ADC has no step size")
        return self.step

    @property
    def label(self) -> str:
        return INFINITE_BITS if self.is_infinite else str(self.bits)

    @property
    def step_label(self) -> str:
        return "-" if self.is_infinite else f"{self.delta:g}"


@dataclass(frozen=True)
class QuantInterval:
    """Decision cell (low, high] of one output level."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if not self.low < self.high:
            raise ValueError(f"empty interval ({self.low}, {self.high}]")

    def contains(self, value: float) -> bool:
        return self.low < value <= self.high


class AdcBank(BaseSchema):
    """Ordered per-antenna ADC assignment; entry i belongs to antenna i."""

    assignment: Tuple[AdcSpec, ...] = Field(..., min_length=1)

    @classmethod
    def uniform(cls, spec: AdcSpec, num_antennas: int) -> "AdcBank":
        return cls(assignment=(spec,) * num_antennas)

    @classmethod
    def from_groups(cls, groups: Sequence[Tuple[AdcSpec, int]]) -> "AdcBank":
        """Concatenate ``count`` copies of each spec, in the order given."""
        assignment: List[AdcSpec] = []
        for spec, count in groups:
            if count < 0:
                raise ValueError("antenna counts must be nonnegative")
            assignment.extend([spec] * count)
        return cls(assignment=tuple(assignment))

    def __len__(self) -> int:
        return len(self.assignment)

    def groups(self) -> Dict[AdcSpec, np.ndarray]:
        """Antenna index sets Ω_κ keyed by spec, in first-appearance order."""
        indices: Dict[AdcSpec, List[int]] = {}
        for i, spec in enumerate(self.assignment):
            indices.setdefault(spec, []).append(i)
        return {spec: np.asarray(idx, dtype=int) for spec, idx in indices.items()}

    def counts(self) -> Dict[AdcSpec, int]:
        """Cardinalities N_κ."""
        return dict(Counter(self.assignment))

    def to_profile(self, num_users: int) -> "MixedProfile":
        """λ_κ = N_κ / K for every spec present in the bank."""
        return MixedProfile(
            entries=tuple(
                ProfileEntry(spec=spec, load=count / num_users)
                for spec, count in self.counts().items()
            )
        )

    def steps(self) -> np.ndarray:
        """Per-antenna Δ, NaN for full-precision antennas."""
        return np.array(
            [math.nan if s.is_infinite else s.delta for s in self.assignment]
        )

    def half_levels(self) -> np.ndarray:
        """Per-antenna 2^κ/2, 0 for full-precision antennas."""
        return np.array(
            [0 if s.is_infinite else s.half_levels for s in self.assignment],
            dtype=np.int64,
        )

    def infinite_mask(self) -> np.ndarray:
        return np.array([s.is_infinite for s in self.assignment], dtype=bool)

    def describe(self) -> Tuple[str, str]:
        """(bits, steps) labels for result tables, groups joined by '/'."""
        specs = list(self.counts())
        return (
            "/".join(s.label for s in specs),
            "/".join(s.step_label for s in specs),
        )


class ProfileEntry(BaseSchema):
    """One (AdcSpec, λ_κ) term of a mixed profile."""

    spec: AdcSpec
    load: float = Field(..., ge=0.0, description="λ_κ = N_κ/K")


class MixedProfile(BaseSchema):
    """Mixed-resolution load profile; Σ λ_κ = λ."""

    entries: Tuple[ProfileEntry, ...] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_load(self) -> "MixedProfile":
        if self.total_load <= 0.0:
            raise ValueError("profile must have a positive total load")
        return self

    @classmethod
    def single(cls, spec: AdcSpec, load: float) -> "MixedProfile":
        return cls(entries=(ProfileEntry(spec=spec, load=load),))

    @classmethod
    def with_full_precision(
        cls, spec: AdcSpec, load: float, fraction: float
    ) -> "MixedProfile":
        """{(spec, λ(1−f)), (Infinite, λf)}, dropping empty terms."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("high-resolution fraction must lie in [0, 1]")
        entries = []
        if fraction < 1.0:
            entries.append(ProfileEntry(spec=spec, load=load * (1.0 - fraction)))
        if fraction > 0.0:
            entries.append(ProfileEntry(spec=AdcSpec.infinite(), load=load * fraction))
        return cls(entries=tuple(entries))

    @property
    def total_load(self) -> float:
        return float(sum(entry.load for entry in self.entries))

    def describe(self) -> Tuple[str, str]:
        """(bits, steps) labels in the same format as :meth:`AdcBank.describe`."""
        specs = [entry.spec for entry in self.entries]
        return (
            "/".join(s.label for s in specs),
            "/".join(s.step_label for s in specs),
        )
