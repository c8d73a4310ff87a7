"""Diffusion models, their intensity and mark densities, and analytic θ-gradients.

Every function is vectorised: `x` (and `y`) may be floats or numpy arrays of any
matching/broadcastable shape. Gradients carry the free θ-coordinates on a trailing
axis, ordered as `DiffusionModel.free`.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Type

import numpy as np

from mpfilter.exceptions.filter_exceptions import DomainError, SingularityError
from mpfilter.schemas.model import ModelId, ModelSpec
from mpfilter.validators.theta_validator import ThetaValidator

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ThetaGradients:
    names: Tuple[str, ...]
    grad_drift: np.ndarray
    grad_intensity: np.ndarray
    grad_log_mark_intensity: Optional[np.ndarray] = None


def _check_finite(x, what: str = "state") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"Non-finite {what} passed to a model function.")
    return arr


class DiffusionModel(ABC):
    model_id: ModelId
    default_free: Tuple[str, ...] = ("theta_b", "theta_lambda", "theta_Sigma")

    def __init__(self, spec: ModelSpec) -> None:
        ThetaValidator().validate(spec)
        self.spec = spec
        self.theta = spec.theta

    @property
    def free(self) -> Tuple[str, ...]:
        return self.spec.estimate or self.default_free

    @property
    def dim(self) -> int:
        return len(self.free)

    @abstractmethod
    def drift(self, x): ...

    @abstractmethod
    def diffusion(self, x): ...

    def drift_partial(self, name: str, x) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))

    # λ_θ(x) = θ_λ |x|, optionally clipped to the configured band
    def raw_intensity(self, x):
        return self.theta.theta_lambda * np.abs(x)

    def intensity(self, x):
        lam = self.raw_intensity(x)
        band = self.spec.intensity_band
        if band is not None:
            lam = np.clip(lam, band[0], band[1])
        return lam

    def _band_active(self, x) -> np.ndarray:
        band = self.spec.intensity_band
        if band is None:
            return np.zeros(np.shape(x), dtype=bool)
        lam = self.raw_intensity(x)
        return (lam < band[0]) | (lam > band[1])

    def intensity_partial(self, name: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if name != "theta_lambda":
            return np.zeros_like(x)
        return np.where(self._band_active(x), 0.0, np.abs(x))

    def log_intensity_partial(self, name: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if name != "theta_lambda":
            return np.zeros_like(x)
        clipped = self._band_active(x)
        singular = ~clipped & ((x == 0.0) | (self.theta.theta_lambda == 0.0))
        if np.any(singular):
            raise SingularityError(
                "Event at a zero-intensity state: d/d theta_lambda log(lambda) is "
                "undefined."
            )
        return np.where(clipped, 0.0, 1.0 / self.theta.theta_lambda)

    def mark_mean(self, x):
        return x

    def mark_logdensity(self, x, y):
        var = self.theta.theta_Sigma
        resid = np.asarray(y, dtype=float) - self.mark_mean(x)
        return -0.5 * (_LOG_2PI + np.log(var)) - resid * resid / (2.0 * var)

    def log_mark_partial(self, name: str, x, y) -> np.ndarray:
        resid = np.asarray(y, dtype=float) - self.mark_mean(np.asarray(x, dtype=float))
        if name != "theta_Sigma":
            return np.zeros_like(resid)
        var = self.theta.theta_Sigma
        return resid * resid / (2.0 * var * var) - 0.5 / var

    def _stack(self, fn, *args) -> np.ndarray:
        return np.stack([fn(name, *args) for name in self.free], axis=-1)

    def drift_gradient(self, x) -> np.ndarray:
        return self._stack(self.drift_partial, np.asarray(x, dtype=float))

    def intensity_gradient(self, x) -> np.ndarray:
        return self._stack(self.intensity_partial, np.asarray(x, dtype=float))

    def log_mark_intensity_gradient(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._stack(self.log_mark_partial, x, y) + self._stack(
            self.log_intensity_partial, x
        )


class OUModel(DiffusionModel):
    model_id = ModelId.OU

    def drift(self, x):
        return -self.theta.get("theta_b") * x

    def diffusion(self, x):
        return self.spec.fixed("sigma", 1.0) * np.ones_like(np.asarray(x, dtype=float))

    def drift_partial(self, name, x):
        if name == "theta_b":
            return -np.asarray(x, dtype=float)
        return super().drift_partial(name, x)


class LangevinModel(DiffusionModel):
    """Overdamped Langevin dynamics for a Student-t target, sign as in the SDE."""

    model_id = ModelId.LANGEVIN
    default_free = ("theta_lambda", "theta_Sigma")

    def drift(self, x):
        nu = self.spec.fixed("nu", 10.0)
        return (nu + 1.0) * x / (x * x + nu)

    def diffusion(self, x):
        return np.ones_like(np.asarray(x, dtype=float))


class NLDTModel(DiffusionModel):
    model_id = ModelId.NLDT
    default_free = ("theta_lambda", "theta_Sigma")

    def drift(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def diffusion(self, x):
        return 1.0 / np.sqrt(1.0 + x * x)


class GBMModel(DiffusionModel):
    model_id = ModelId.GBM

    def drift(self, x):
        return self.theta.get("theta_b") * x

    def diffusion(self, x):
        return self.spec.fixed("sigma", 0.2) * np.asarray(x, dtype=float)

    def drift_partial(self, name, x):
        if name == "theta_b":
            return np.asarray(x, dtype=float).copy()
        return super().drift_partial(name, x)


class TestConstModel(DiffusionModel):
    """Constant intensity test model with optional linear drift and state-free marks."""

    __test__ = False  # not a pytest class
    model_id = ModelId.TEST_CONST
    default_free = ("theta_Sigma",)

    def drift(self, x):
        return -self.spec.fixed("kappa", 0.0) * np.asarray(x, dtype=float)

    def diffusion(self, x):
        return self.spec.fixed("sigma", 1.0) * np.ones_like(np.asarray(x, dtype=float))

    def raw_intensity(self, x):
        return self.spec.fixed("c") * np.ones_like(np.asarray(x, dtype=float))

    def intensity_partial(self, name, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def log_intensity_partial(self, name, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def mark_mean(self, x):
        if self.spec.fixed("state_free_marks", 0.0):
            return np.zeros_like(np.asarray(x, dtype=float))
        return x


_REGISTRY: Dict[ModelId, Type[DiffusionModel]] = {
    cls.model_id: cls
    for cls in (OUModel, LangevinModel, NLDTModel, GBMModel, TestConstModel)
}


def get_model(spec: ModelSpec) -> DiffusionModel:
    return _REGISTRY[spec.model_id](spec)


def drift(spec: ModelSpec, x):
    return get_model(spec).drift(_check_finite(x))


def diffusion_coeff(spec: ModelSpec, x):
    return get_model(spec).diffusion(_check_finite(x))


def intensity(spec: ModelSpec, x):
    return get_model(spec).intensity(_check_finite(x))


def mark_logdensity(spec: ModelSpec, x, y):
    return get_model(spec).mark_logdensity(_check_finite(x), _check_finite(y, "mark"))


def theta_gradients(spec: ModelSpec, x, y=None) -> ThetaGradients:
    model = get_model(spec)
    x = _check_finite(x)
    grad_log = None
    if y is not None:
        grad_log = model.log_mark_intensity_gradient(x, _check_finite(y, "mark"))
    return ThetaGradients(
        names=model.free,
        grad_drift=model.drift_gradient(x),
        grad_intensity=model.intensity_gradient(x),
        grad_log_mark_intensity=grad_log,
    )
