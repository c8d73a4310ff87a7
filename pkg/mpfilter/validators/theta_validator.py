import math

from mpfilter.exceptions.filter_exceptions import ConfigurationError
from mpfilter.schemas.model import THETA_COORDINATES, ModelId, ModelSpec
from mpfilter.validators.base import Validator

_NEEDS_THETA_B = (ModelId.OU, ModelId.GBM)


class ThetaValidator(Validator[ModelSpec]):
    def validate(self, spec: ModelSpec) -> None:
        theta = spec.theta
        if not math.isfinite(theta.theta_Sigma) or theta.theta_Sigma <= 0:
            raise ConfigurationError(
                f"theta_Sigma must be positive, got {theta.theta_Sigma}."
            )
        if not math.isfinite(theta.theta_lambda) or theta.theta_lambda < 0:
            raise ConfigurationError(
                f"theta_lambda must be nonnegative, got {theta.theta_lambda}."
            )
        if spec.model_id in _NEEDS_THETA_B and theta.theta_b is None:
            raise ConfigurationError(f"{spec.model_id.value} requires theta_b.")
        if not math.isfinite(spec.x_star):
            raise ConfigurationError(f"x_star must be finite, got {spec.x_star}.")
        if spec.model_id == ModelId.GBM and spec.x_star < 0:
            raise ConfigurationError(
                f"GBM requires x_star >= 0, got {spec.x_star}."
            )
        if spec.model_id == ModelId.TEST_CONST:
            c = theta.fixed_params.get("c")
            if c is None or c <= 0:
                raise ConfigurationError(
                    "TestConst requires a positive intensity level 'c'."
                )
        if spec.estimate is not None:
            unknown = set(spec.estimate) - set(THETA_COORDINATES)
            if unknown or not spec.estimate:
                raise ConfigurationError(
                    f"Unknown estimated coordinates {sorted(unknown)}."
                )
        if spec.intensity_band is not None:
            low, high = spec.intensity_band
            if not 0 <= low < high:
                raise ConfigurationError(
                    f"Intensity band must satisfy 0 <= floor < cap, got {low}, {high}."
                )
