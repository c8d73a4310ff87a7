from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from mpfilter.schemas.model import ThetaVector


class SgaConfig(BaseModel):
    """Step sizes α_m^{(i)} = α_0^{(i)} (m + 1)^{-β}; one update per window of c."""

    model_config = ConfigDict(frozen=True)

    alpha0: Tuple[float, ...]
    beta: float = Field(0.6, gt=0.5, le=1.0)
    window_c: int = Field(1, ge=1)
    iterations: int = Field(..., ge=1)
    theta_init: ThetaVector
    # lower bound per free coordinate; None uses the configured positivity floor
    floors: Optional[Tuple[float, ...]] = None

    @field_validator("alpha0")
    @classmethod
    def positive_steps(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v or any(a <= 0 for a in v):
            raise ValueError("alpha0 entries must be positive")
        return v

    def step_factor(self, m: int) -> float:
        return float((m + 1) ** (-self.beta))
