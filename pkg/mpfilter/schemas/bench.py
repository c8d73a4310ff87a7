from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator


class RateFit(BaseModel):
    """Ordinary least squares line through log-log points."""

    model_config = ConfigDict(frozen=True)

    points: List[Tuple[float, float]]
    slope: float
    intercept: float
    residual: float

    @field_validator("points")
    @classmethod
    def enough_points(cls, v: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        if len(v) < 3:
            raise ValueError("a rate fit needs at least 3 points")
        return v


class ReferenceValue(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    standard_error: float
    level: int
    particles: int
    repeats: int


class MsePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    target: float
    mse: float
    mean_cost: float
    reps: int


class MseExperiment(BaseModel):
    estimator: str
    reference: float
    points: List[MsePoint]
    fit: Optional[RateFit] = None


class DecayRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    level: int
    value: float
    stderr: float
    # excluded from the fit: Monte Carlo error too large or value not positive
    flagged: bool = False


class DecayExperiment(BaseModel):
    kind: str
    rows: List[DecayRow]
    fit: Optional[RateFit] = None
