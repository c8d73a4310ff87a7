from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

THETA_COORDINATES = ("theta_b", "theta_lambda", "theta_Sigma")


class ModelId(str, Enum):
    OU = "OU"
    LANGEVIN = "Langevin"
    NLDT = "NLDT"
    GBM = "GBM"
    TEST_CONST = "TestConst"


class ThetaVector(BaseModel):
    """Static parameters of a model.

    Range checks live in `ThetaValidator` so that bad values surface as
    `ConfigurationError` from the model functions instead of at construction.
    """

    model_config = ConfigDict(frozen=True)

    theta_b: Optional[float] = None
    theta_lambda: float = Field(..., examples=[3.5])
    theta_Sigma: float = Field(..., examples=[1.0])
    fixed_params: Dict[str, float] = Field(default_factory=dict)

    def get(self, name: str) -> float:
        value = getattr(self, name)
        return 0.0 if value is None else float(value)

    def replace(self, **updates: float) -> "ThetaVector":
        return self.model_copy(update=updates)


class ModelSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    model_id: ModelId
    x_star: float = 1.0
    theta: ThetaVector
    # Free coordinates for score estimation; None means the catalogue default
    estimate: Optional[Tuple[str, ...]] = None
    # (floor, cap) applied to the intensity when set
    intensity_band: Optional[Tuple[float, float]] = None

    def with_theta(self, theta: ThetaVector) -> "ModelSpec":
        return self.model_copy(update={"theta": theta})

    def fixed(self, name: str, default: Optional[float] = None) -> float:
        if name in self.theta.fixed_params:
            return float(self.theta.fixed_params[name])
        if default is None:
            raise KeyError(name)
        return default
