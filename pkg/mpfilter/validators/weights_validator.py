from typing import Optional

import numpy as np

from mpfilter.exceptions.filter_exceptions import ContractError, DegenerateWeightsError
from mpfilter.validators.base import Validator

NORMALIZATION_TOLERANCE = 1e-12


class WeightsValidator(Validator[np.ndarray]):
    """Resampling weights: finite, nonnegative, with a positive total."""

    def __init__(self, unit_time: Optional[int] = None) -> None:
        self.unit_time = unit_time

    def validate(self, weights: np.ndarray) -> None:
        if weights.ndim != 1 or weights.size == 0:
            raise ContractError("Weights must be a nonempty 1-D array.")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ContractError("Weights must be finite and nonnegative.")
        if weights.sum() <= 0:
            raise DegenerateWeightsError(
                "Every particle weight is zero", unit_time=self.unit_time
            )


class NormalizedWeightsValidator(WeightsValidator):
    def validate(self, weights: np.ndarray) -> None:
        super().validate(weights)
        total = float(weights.sum())
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ContractError(f"Weights must sum to 1, got {total!r}.")
