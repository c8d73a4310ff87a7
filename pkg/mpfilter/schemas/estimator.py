from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class MlAllocation(BaseModel):
    model_config = ConfigDict(frozen=True)

    l0: int = Field(..., ge=0)
    L: int = Field(..., ge=0)
    N_levels: Tuple[int, ...]
    epsilon: float = Field(..., gt=0, lt=1)
    constant_C: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def check_levels(self) -> "MlAllocation":
        if self.L < self.l0:
            raise ValueError(f"L={self.L} is below l0={self.l0}")
        if len(self.N_levels) != self.L - self.l0 + 1:
            raise ValueError("N_levels must hold one entry per level l0..L")
        if any(n < 1 for n in self.N_levels):
            raise ValueError("every level needs at least one particle")
        if any(a < b for a, b in zip(self.N_levels, self.N_levels[1:])):
            raise ValueError("N_levels must be nonincreasing")
        return self

    @property
    def levels(self) -> range:
        return range(self.l0, self.L + 1)

    def particles(self, level: int) -> int:
        return self.N_levels[level - self.l0]


class Randomization(BaseModel):
    """Laws of the level L and the particle-schedule index P."""

    model_config = ConfigDict(frozen=True)

    l0: int = Field(..., ge=0)
    L_trunc: int = Field(..., ge=0)
    P_trunc: int = Field(..., ge=0)
    N0: int = Field(..., ge=1)
    level_pmf: Tuple[float, ...]
    particle_pmf: Tuple[float, ...]

    @model_validator(mode="after")
    def check_pmfs(self) -> "Randomization":
        if self.L_trunc < self.l0:
            raise ValueError(f"L_trunc={self.L_trunc} is below l0={self.l0}")
        for name, pmf, size in (
            ("level_pmf", self.level_pmf, self.L_trunc - self.l0 + 1),
            ("particle_pmf", self.particle_pmf, self.P_trunc + 1),
        ):
            if len(pmf) != size:
                raise ValueError(f"{name} needs {size} entries, got {len(pmf)}")
            if any(q <= 0 for q in pmf):
                raise ValueError(f"{name} must be strictly positive")
            if abs(sum(pmf) - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1")
        return self

    @property
    def levels(self) -> range:
        return range(self.l0, self.L_trunc + 1)

    def N_schedule(self, p: int) -> int:
        return self.N0 << p

    def new_particles(self, q: int) -> int:
        """N_q - N_{q-1}, with N_{-1} = 0."""
        return self.N0 if q == 0 else self.N_schedule(q) - self.N_schedule(q - 1)

    def level_probability(self, level: int) -> float:
        return self.level_pmf[level - self.l0]

    def particle_probability(self, p: int) -> float:
        return self.particle_pmf[p]

    def sample_level(self, rng: np.random.Generator) -> int:
        return self.l0 + int(rng.choice(len(self.level_pmf), p=self.level_pmf))

    def sample_p(self, rng: np.random.Generator) -> int:
        return int(rng.choice(len(self.particle_pmf), p=self.particle_pmf))
