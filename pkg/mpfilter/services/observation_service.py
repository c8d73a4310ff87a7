"""Synthetic marked point process data from one fine-level diffusion path."""

from typing import Tuple

import numpy as np

from mpfilter.logging_config import get_logger
from mpfilter.models.diffusion import get_model
from mpfilter.rng import Seed, as_factory
from mpfilter.schemas.dataset import DatasetMeta, MarkedDataset
from mpfilter.schemas.model import ModelSpec
from mpfilter.services.path_service import (
    Trajectory,
    UnitPath,
    concatenate,
    euler_unit,
    interpolate_states,
)

logger = get_logger()

# Inflation of the per-sub-step thinning bound
BOUND_INFLATION = 1.0 + 1e-6


def thin_unit(
    spec: ModelSpec, path: UnitPath, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Exact thinning of the interpolated intensity over (p, p + 1].

    λ(x) = a|x| along a linear segment is bounded by its endpoint values, so each
    sub-step gets its own homogeneous proposal rate.
    """
    model = get_model(spec)
    delta = path.delta
    lam = model.intensity(path.states)
    bound = BOUND_INFLATION * np.maximum(lam[:-1], lam[1:])
    counts = rng.poisson(bound * delta)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0), np.empty(0)
    sub = np.repeat(np.arange(bound.shape[0]), counts)
    # (1 - u) keeps proposals in the half-open sub-step (kΔ, (k+1)Δ]
    times = path.start_time + (sub + (1.0 - rng.random(total))) * delta
    order = np.argsort(times, kind="stable")
    times, sub = times[order], sub[order]
    x_at = interpolate_states(
        path.states[None, :], path.level, path.start_time, times
    )[0]
    accept = rng.random(total) * bound[sub] < model.intensity(x_at)
    times, x_at = times[accept], x_at[accept]
    marks = rng.normal(model.mark_mean(x_at), np.sqrt(spec.theta.theta_Sigma))
    return times, np.asarray(marks, dtype=float)


def generate_dataset(
    spec: ModelSpec, horizon_T: int, data_level: int, seed: Seed
) -> Tuple[MarkedDataset, Trajectory]:
    streams = as_factory(seed).child("obsgen")
    x = spec.x_star
    paths = []
    times, marks = [], []
    for p in range(horizon_T):
        path = euler_unit(spec, data_level, p, x, streams.generator("path", p))
        s, y = thin_unit(spec, path, streams.generator("events", p))
        paths.append(path)
        times.append(s)
        marks.append(y)
        x = path.end
    dataset = MarkedDataset(
        horizon_T=horizon_T,
        times=np.concatenate(times) if times else np.empty(0),
        marks=np.concatenate(marks) if marks else np.empty(0),
        meta=DatasetMeta(
            model_id=spec.model_id,
            theta_true=spec.theta,
            x_star=spec.x_star,
            data_level=data_level,
            seed=as_factory(seed).seed,
        ),
    )
    logger.info(
        "dataset_generated",
        model=spec.model_id.value,
        T=horizon_T,
        data_level=data_level,
        events=len(dataset),
    )
    return dataset, concatenate(paths)
