"""Feynman–Kac potentials for marked point process observations.

All potentials are evaluated in log form. `quadrature` selects which grid end
of each sub-step carries the integrated intensity: `right` sums
λ(x_{p+(k+1)Δ}), `left` sums λ(x_{p+kΔ}).
"""

from typing import Optional

import numpy as np

from mpfilter.config import settings
from mpfilter.exceptions.filter_exceptions import (
    ConfigurationError,
    ContractError,
    RangeError,
    SingularityError,
)
from mpfilter.logging_config import get_logger
from mpfilter.models.diffusion import DiffusionModel, get_model
from mpfilter.schemas.dataset import MarkedDataset
from mpfilter.schemas.model import ModelSpec
from mpfilter.services.path_service import (
    UnitPath,
    interpolate_states,
    step_size,
    steps_per_unit,
)

logger = get_logger()

_LOG_2PI = float(np.log(2.0 * np.pi))
QUADRATURES = ("left", "right")


def _event_log_terms(model: DiffusionModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """log g(x, y) + log λ(x); -inf where the intensity vanishes."""
    with np.errstate(divide="ignore"):
        log_lam = np.log(model.intensity(x))
    return model.mark_logdensity(x, y) + log_lam


class PotentialContext:
    """Model, data and level shared by every potential evaluation of a filter run."""

    def __init__(
        self,
        spec: ModelSpec,
        dataset: MarkedDataset,
        level: int,
        quadrature: Optional[str] = None,
    ) -> None:
        if level < 0:
            raise ConfigurationError(f"Level must be nonnegative, got {level}.")
        quadrature = quadrature or settings.quadrature
        if quadrature not in QUADRATURES:
            raise ConfigurationError(
                f"quadrature must be one of {QUADRATURES}, got {quadrature!r}."
            )
        self.spec = spec
        self.dataset = dataset
        self.level = level
        self.quadrature = quadrature
        self.model = get_model(spec)
        self.delta = step_size(level)
        self.steps = steps_per_unit(level)

    def with_spec(self, spec: ModelSpec) -> "PotentialContext":
        return PotentialContext(spec, self.dataset, self.level, self.quadrature)

    def check_unit(self, p: int) -> None:
        if p < 0 or p + 1 > self.dataset.horizon_T:
            raise RangeError(
                f"Unit interval ({p}, {p + 1}] is outside the data horizon "
                f"T={self.dataset.horizon_T}."
            )

    def unit_events(self, p: int):
        sl = self.dataset.unit_slice(p)
        return self.dataset.times[sl], self.dataset.marks[sl]

    def quadrature_states(self, states: np.ndarray) -> np.ndarray:
        """Grid states whose intensity enters the exponent; `states` is (N, n + 1)."""
        return states[..., 1:] if self.quadrature == "right" else states[..., :-1]

    def log_unit_potential(self, p: int, states: np.ndarray) -> np.ndarray:
        """log G_p for each row of `states`, the level-l grid values on [p, p + 1]."""
        self.check_unit(p)
        states = np.atleast_2d(states)
        if states.shape[1] != self.steps + 1:
            raise ContractError(
                f"Level {self.level} paths carry {self.steps + 1} states, "
                f"got {states.shape[1]}."
            )
        exponent = -self.delta * self.model.intensity(
            self.quadrature_states(states)
        ).sum(axis=1)
        times, marks = self.unit_events(p)
        if times.size == 0:
            return exponent
        x_events = interpolate_states(states, self.level, p, times)
        terms = _event_log_terms(self.model, x_events, marks[None, :])
        self._flag_zero_intensity(terms, p)
        return exponent + terms.sum(axis=1)

    def log_substep_factor(self, k: int, x_left, x_right) -> np.ndarray:
        """log ḡ_k over the global sub-step (kΔ, (k+1)Δ]; inputs broadcast.

        The survival factor uses λ at the same end as `log_unit_potential`, so
        the sub-step factors of one unit multiply to G_p. With the default
        `right` quadrature that is λ(x_right); `quadrature="left"` gives
        exp{-λ(x_left)Δ}.
        """
        if k < 0 or k >= self.dataset.horizon_T * self.steps:
            raise RangeError(f"Sub-step {k} is outside the data horizon.")
        x_left = np.asarray(x_left, dtype=float)
        x_right = np.asarray(x_right, dtype=float)
        x_quad = x_right if self.quadrature == "right" else x_left
        shape = np.broadcast(x_left, x_right).shape
        out = np.broadcast_to(
            -self.delta * self.model.intensity(x_quad), shape
        ).astype(float)
        left_time = k / self.steps
        sl = self.dataset.window_slice(left_time, (k + 1) / self.steps)
        for s, y in zip(self.dataset.times[sl], self.dataset.marks[sl]):
            frac = (s - left_time) / self.delta
            x_s = x_right if frac == 1.0 else x_left + (x_right - x_left) * frac
            terms = _event_log_terms(self.model, x_s, y)
            self._flag_zero_intensity(terms, k // self.steps)
            out = out + terms
        return out

    def log_transition(self, x_from, x_to) -> np.ndarray:
        return _transition_logdensity(self.model, self.delta, x_from, x_to)

    def _flag_zero_intensity(self, terms: np.ndarray, p: int) -> None:
        dead = np.isneginf(terms)
        if np.any(dead):
            logger.warning(
                "zero_intensity_event",
                unit_time=p,
                affected=int(dead.sum()),
                level=self.level,
            )


def _transition_logdensity(
    model: DiffusionModel, delta: float, x_from, x_to
) -> np.ndarray:
    x_from = np.asarray(x_from, dtype=float)
    sigma = model.diffusion(x_from)
    if np.any(sigma == 0.0):
        raise SingularityError(
            "Euler transition density is singular where the diffusion coefficient is 0."
        )
    var = sigma * sigma * delta
    resid = np.asarray(x_to, dtype=float) - (x_from + model.drift(x_from) * delta)
    return -0.5 * (_LOG_2PI + np.log(var)) - resid * resid / (2.0 * var)


def unit_potential_G(ctx: PotentialContext, p: int, path: UnitPath) -> float:
    if path.start_time != p or path.level != ctx.level:
        raise ContractError(
            f"Path at (time {path.start_time}, level {path.level}) does not match "
            f"unit {p} at level {ctx.level}."
        )
    return float(np.exp(ctx.log_unit_potential(p, path.states[None, :])[0]))


def substep_factor(ctx: PotentialContext, k: int, x_left, x_right):
    return np.exp(ctx.log_substep_factor(k, x_left, x_right))


def euler_transition_logdensity(spec: ModelSpec, level: int, x_from, x_to):
    return _transition_logdensity(get_model(spec), step_size(level), x_from, x_to)
