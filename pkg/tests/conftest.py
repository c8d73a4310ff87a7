"""Shared pytest fixtures."""

from typing import Optional, Sequence

import pytest

from mpfilter.models.catalog import build_spec
from mpfilter.schemas.dataset import DatasetMeta, MarkedDataset
from mpfilter.schemas.model import ModelId, ModelSpec
from mpfilter.services.observation_service import generate_dataset


def const_spec(
    c: float = 1.0,
    sigma: float = 1.0,
    kappa: float = 0.0,
    state_free_marks: bool = True,
    theta_Sigma: float = 1.0,
    x_star: float = 1.0,
    estimate: Optional[Sequence[str]] = None,
) -> ModelSpec:
    """TestConst model: constant intensity c, drift -kappa x, diffusion sigma."""
    spec = build_spec(
        ModelId.TEST_CONST,
        x_star=x_star,
        overrides={"theta_Sigma": theta_Sigma},
        fixed_overrides={
            "c": c,
            "sigma": sigma,
            "kappa": kappa,
            "state_free_marks": float(state_free_marks),
        },
    )
    if estimate is not None:
        spec = spec.model_copy(update={"estimate": tuple(estimate)})
    return spec


def make_dataset(
    times: Sequence[float] = (),
    marks: Sequence[float] = (),
    horizon_T: int = 2,
    data_level: Optional[int] = None,
) -> MarkedDataset:
    return MarkedDataset(
        horizon_T=horizon_T,
        times=list(times),
        marks=list(marks),
        meta=DatasetMeta(data_level=data_level),
    )


@pytest.fixture
def ou_spec() -> ModelSpec:
    return build_spec(ModelId.OU)


@pytest.fixture
def ou_data(ou_spec):
    """(dataset, truth) for OU over three unit times at data level 6."""
    return generate_dataset(ou_spec, horizon_T=3, data_level=6, seed=11)


@pytest.fixture
def ou_dataset(ou_data) -> MarkedDataset:
    return ou_data[0]


@pytest.fixture
def prior_spec() -> ModelSpec:
    """Weights carry no state information: filtering reproduces the prior."""
    return const_spec(c=2.0, sigma=1.0, state_free_marks=True)


@pytest.fixture
def frozen_spec() -> ModelSpec:
    """Zero diffusion: every particle follows the same deterministic path."""
    return const_spec(c=1.5, sigma=0.0, state_free_marks=True)


@pytest.fixture
def sparse_dataset() -> MarkedDataset:
    return make_dataset(
        times=[0.3, 0.5, 1.25, 2.0], marks=[0.4, -0.2, 1.1, 0.0], horizon_T=2
    )
