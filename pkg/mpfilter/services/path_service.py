"""Euler–Maruyama unit-time paths, the synchronous fine/coarse coupling and
linear interpolation between grid points."""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from mpfilter.exceptions.filter_exceptions import (
    ConfigurationError,
    DomainError,
    NumericOverflowError,
    RangeError,
)
from mpfilter.models.diffusion import DiffusionModel, get_model
from mpfilter.schemas.model import ModelSpec


def steps_per_unit(level: int) -> int:
    if level < 0:
        raise ConfigurationError(f"Level must be nonnegative, got {level}.")
    return 1 << level


def step_size(level: int) -> float:
    return 1.0 / steps_per_unit(level)


@dataclass(frozen=True)
class UnitPath:
    level: int
    start_time: int
    states: np.ndarray  # values at p, p + Δ_l, ..., p + 1
    increments: np.ndarray  # Brownian increments, variance Δ_l each

    @property
    def delta(self) -> float:
        return step_size(self.level)

    @property
    def end(self) -> float:
        return float(self.states[-1])


@dataclass(frozen=True)
class PathBatch:
    """N unit paths on the same grid, stored row-wise."""

    level: int
    start_time: int
    states: np.ndarray  # (N, Δ_l^{-1} + 1)
    increments: np.ndarray  # (N, Δ_l^{-1})

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def delta(self) -> float:
        return step_size(self.level)

    @property
    def endpoints(self) -> np.ndarray:
        return self.states[:, -1]

    @property
    def starts(self) -> np.ndarray:
        return self.states[:, 0]

    def path(self, i: int) -> UnitPath:
        return UnitPath(
            self.level,
            self.start_time,
            self.states[i].copy(),
            self.increments[i].copy(),
        )

    def take(self, indices: np.ndarray) -> "PathBatch":
        return PathBatch(
            self.level, self.start_time, self.states[indices], self.increments[indices]
        )

    @classmethod
    def from_paths(cls, paths: Sequence[UnitPath]) -> "PathBatch":
        first = paths[0]
        return cls(
            first.level,
            first.start_time,
            np.stack([p.states for p in paths]),
            np.stack([p.increments for p in paths]),
        )


@dataclass(frozen=True)
class Trajectory:
    """Consecutive unit paths joined into one grid trajectory."""

    level: int
    start_time: int
    states: np.ndarray
    increments: np.ndarray

    @property
    def units(self) -> int:
        return len(self.increments) // steps_per_unit(self.level)

    def unit(self, p: int) -> UnitPath:
        n = steps_per_unit(self.level)
        k = (p - self.start_time) * n
        return UnitPath(
            self.level,
            p,
            self.states[k : k + n + 1].copy(),
            self.increments[k : k + n].copy(),
        )


def _euler_core(
    model: DiffusionModel, level: int, x0: np.ndarray, increments: np.ndarray
) -> np.ndarray:
    """Run the Euler recursion row-wise; x0 is (N,), increments (N, n)."""
    n = increments.shape[1]
    delta = step_size(level)
    states = np.empty((x0.shape[0], n + 1))
    states[:, 0] = x0
    x = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            x = x + model.drift(x) * delta + model.diffusion(x) * increments[:, k]
            if not np.all(np.isfinite(x)):
                raise NumericOverflowError(
                    "Euler recursion produced a non-finite state", step=k + 1
                )
            states[:, k + 1] = x
    return states


def _check_start(x0) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x0, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise DomainError("Euler start state must be finite.")
    return arr


def euler_from_increments(
    spec: ModelSpec, level: int, start_time: int, x0: float, increments
) -> UnitPath:
    """Replay the Euler recursion from x0 with the given increments."""
    z = np.asarray(increments, dtype=float)
    n = steps_per_unit(level)
    if z.shape != (n,):
        raise ConfigurationError(
            f"Level {level} needs {n} increments, got shape {z.shape}."
        )
    states = _euler_core(get_model(spec), level, _check_start(x0), z[None, :])
    return UnitPath(level, start_time, states[0], z.copy())


def euler_unit(
    spec: ModelSpec,
    level: int,
    start_time: int,
    x0: float,
    rng: np.random.Generator,
) -> UnitPath:
    n = steps_per_unit(level)
    z = rng.normal(0.0, np.sqrt(step_size(level)), size=n)
    return euler_from_increments(spec, level, start_time, x0, z)


def euler_batch(
    spec: ModelSpec,
    level: int,
    start_time: int,
    x0,
    rng: np.random.Generator,
) -> PathBatch:
    """N independent unit paths started at the entries of x0."""
    starts = _check_start(x0)
    n = steps_per_unit(level)
    z = rng.normal(0.0, np.sqrt(step_size(level)), size=(starts.shape[0], n))
    states = _euler_core(get_model(spec), level, starts, z)
    return PathBatch(level, start_time, states, z)


def coarsen_increments(increments: np.ndarray) -> np.ndarray:
    """Sum consecutive pairs: Z_{2(k+1)-1} + Z_{2(k+1)}."""
    return increments[..., 0::2] + increments[..., 1::2]


def coupled_euler_batch(
    spec: ModelSpec,
    level: int,
    start_time: int,
    x0_fine,
    x0_coarse,
    rng: np.random.Generator,
) -> Tuple[PathBatch, PathBatch]:
    if level < 1:
        raise ConfigurationError(f"Coupled paths need level >= 1, got {level}.")
    fine_starts = _check_start(x0_fine)
    coarse_starts = _check_start(x0_coarse)
    n = steps_per_unit(level)
    model = get_model(spec)
    z = rng.normal(0.0, np.sqrt(step_size(level)), size=(fine_starts.shape[0], n))
    zc = coarsen_increments(z)
    fine = PathBatch(level, start_time, _euler_core(model, level, fine_starts, z), z)
    coarse = PathBatch(
        level - 1, start_time, _euler_core(model, level - 1, coarse_starts, zc), zc
    )
    return fine, coarse


def coupled_euler_unit(
    spec: ModelSpec,
    level: int,
    start_time: int,
    x0_fine: float,
    x0_coarse: float,
    rng: np.random.Generator,
) -> Tuple[UnitPath, UnitPath]:
    fine, coarse = coupled_euler_batch(
        spec, level, start_time, [x0_fine], [x0_coarse], rng
    )
    return fine.path(0), coarse.path(0)


def _locate(
    level: int, start_time: int, t: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Sub-step index k and fraction in [0, 1] for times inside [p, p + 1]."""
    n = steps_per_unit(level)
    tau = (t - start_time) * n
    k = np.minimum(np.floor(tau).astype(np.int64), n - 1)
    return k, tau - k


def interpolate_states(
    states: np.ndarray, level: int, start_time: int, times
) -> np.ndarray:
    """Row-wise interpolated values at `times`; result (N, len(times))."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.size and (np.any(t < start_time) or np.any(t > start_time + 1)):
        raise RangeError(
            f"Interpolation times must lie in [{start_time}, {start_time + 1}]."
        )
    k, frac = _locate(level, start_time, t)
    left = states[:, k]
    right = states[:, k + 1]
    out = left + (right - left) * frac
    # exact grid values at the right end of a sub-step
    return np.where(frac == 1.0, right, out)


def interpolate(path: UnitPath, t: float) -> float:
    return float(
        interpolate_states(path.states[None, :], path.level, path.start_time, [t])[0, 0]
    )


def concatenate(paths: Sequence[UnitPath]) -> Trajectory:
    """Join consecutive unit paths; each must start where the previous one ends."""
    if not paths:
        raise ConfigurationError("Cannot concatenate an empty path list.")
    level = paths[0].level
    for prev, nxt in zip(paths, paths[1:]):
        if nxt.level != level or nxt.start_time != prev.start_time + 1:
            raise ConfigurationError("Paths must share a level and be consecutive.")
        if nxt.states[0] != prev.states[-1]:
            raise ConfigurationError(
                f"Path at time {nxt.start_time} does not start at the previous end."
            )
    states = np.concatenate([paths[0].states] + [p.states[1:] for p in paths[1:]])
    increments = np.concatenate([p.increments for p in paths])
    return Trajectory(level, paths[0].start_time, states, increments)
