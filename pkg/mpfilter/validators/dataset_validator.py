from typing import TYPE_CHECKING

import numpy as np

from mpfilter.exceptions.filter_exceptions import DatasetValidationError
from mpfilter.validators.base import Validator

if TYPE_CHECKING:
    from mpfilter.schemas.dataset import MarkedDataset


class EventOrderValidator(Validator["MarkedDataset"]):
    def validate(self, dataset: "MarkedDataset") -> None:
        times = dataset.times
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(dataset.marks)):
            raise DatasetValidationError("Event times and marks must be finite.")
        gaps = np.diff(times)
        if gaps.size and np.any(gaps <= 0):
            k = int(np.argmax(gaps <= 0))
            raise DatasetValidationError(
                f"Event times must be strictly increasing: s_{k + 2}={times[k + 1]!r} "
                f"follows s_{k + 1}={times[k]!r}."
            )


class HorizonValidator(Validator["MarkedDataset"]):
    def validate(self, dataset: "MarkedDataset") -> None:
        times = dataset.times
        if times.size and (times[0] <= 0 or times[-1] > dataset.horizon_T):
            raise DatasetValidationError(
                f"Event times must lie in (0, {dataset.horizon_T}]."
            )
