from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mpfilter.schemas.model import ModelId, ThetaVector
from mpfilter.validators.dataset_validator import (
    EventOrderValidator,
    HorizonValidator,
)


class DatasetMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    model_id: Optional[ModelId] = None
    theta_true: Optional[ThetaVector] = None
    x_star: Optional[float] = None
    data_level: Optional[int] = None
    seed: Optional[int] = None


class MarkedDataset(BaseModel):
    """Event times s_k in (0, T] with marks y_k; the only data a filter sees."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    horizon_T: int = Field(..., gt=0)
    times: np.ndarray
    marks: np.ndarray
    meta: DatasetMeta = Field(default_factory=DatasetMeta)

    @field_validator("times", "marks", mode="before")
    @classmethod
    def as_float_array(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=float).reshape(-1)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_events(self) -> "MarkedDataset":
        if self.times.shape != self.marks.shape:
            raise ValueError("times and marks must have the same length")
        EventOrderValidator().validate(self)
        HorizonValidator().validate(self)
        return self

    @property
    def events(self) -> List[Tuple[float, float]]:
        return list(zip(self.times.tolist(), self.marks.tolist()))

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def count_up_to(self, t: float) -> int:
        """n_t: number of events in (0, t]."""
        return int(np.searchsorted(self.times, t, side="right"))

    def unit_slice(self, p: int) -> slice:
        """Indices of events in (p, p + 1]."""
        return slice(self.count_up_to(p), self.count_up_to(p + 1))

    def window_slice(self, left: float, right: float) -> slice:
        """Indices of events in (left, right]."""
        return slice(self.count_up_to(left), self.count_up_to(right))
