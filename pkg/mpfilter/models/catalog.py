"""Default parameterisations of the shipped models.

`true` values generate data, `init` values seed the gradient ascent. OU/GBM
diffusion scales and x_* are not fixed by the models' usual references and are
declared here.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from mpfilter.schemas.model import ModelId, ModelSpec, ThetaVector


@dataclass(frozen=True)
class ModelDefaults:
    true: Dict[str, float]
    init: Dict[str, float]
    fixed_params: Dict[str, float]
    # (L_trunc, P_trunc, N0) for the unbiased estimator
    upf_truncation: Tuple[int, int, int] = (10, 11, 5)
    x_star: float = 1.0
    # gradient ascent: one α_0 for every free coordinate, and the window c
    sga_alpha0: Tuple[float, ...] = (0.05,)
    sga_window: int = 5


CATALOG: Dict[ModelId, ModelDefaults] = {
    ModelId.OU: ModelDefaults(
        true={"theta_lambda": 3.5, "theta_Sigma": 1.0, "theta_b": 0.98},
        init={"theta_lambda": 1.5, "theta_Sigma": 1.5, "theta_b": 0.48},
        fixed_params={"sigma": 1.0},
        sga_alpha0=(0.2,),
    ),
    ModelId.LANGEVIN: ModelDefaults(
        true={"theta_lambda": 1.0, "theta_Sigma": 1.0},
        init={"theta_lambda": 2.0, "theta_Sigma": 2.5},
        fixed_params={"nu": 10.0},
    ),
    ModelId.NLDT: ModelDefaults(
        true={"theta_lambda": 0.222, "theta_Sigma": 1.0},
        init={"theta_lambda": 2.222, "theta_Sigma": 2.0},
        fixed_params={},
    ),
    ModelId.GBM: ModelDefaults(
        true={"theta_lambda": 0.5, "theta_Sigma": 1.0, "theta_b": 0.015},
        init={"theta_lambda": 2.5, "theta_Sigma": 2.0, "theta_b": 1.015},
        fixed_params={"sigma": 0.2},
        upf_truncation=(10, 5, 100),
    ),
    ModelId.TEST_CONST: ModelDefaults(
        true={"theta_lambda": 0.0, "theta_Sigma": 1.0},
        init={"theta_lambda": 0.0, "theta_Sigma": 2.0},
        fixed_params={"c": 1.0, "sigma": 1.0, "kappa": 0.0, "state_free_marks": 0.0},
    ),
}


def build_spec(
    model_id: ModelId,
    which: str = "true",
    x_star: Optional[float] = None,
    overrides: Optional[Dict[str, Optional[float]]] = None,
    fixed_overrides: Optional[Dict[str, float]] = None,
    intensity_band: Optional[Tuple[float, float]] = None,
) -> ModelSpec:
    """Assemble a ModelSpec from catalogue defaults; `None` overrides are ignored."""
    defaults = CATALOG[model_id]
    values = dict(defaults.true if which == "true" else defaults.init)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    fixed = dict(defaults.fixed_params)
    fixed.update(fixed_overrides or {})
    theta = ThetaVector(
        theta_b=values.get("theta_b"),
        theta_lambda=values["theta_lambda"],
        theta_Sigma=values["theta_Sigma"],
        fixed_params=fixed,
    )
    return ModelSpec(
        model_id=model_id,
        x_star=defaults.x_star if x_star is None else x_star,
        theta=theta,
        intensity_band=intensity_band,
    )
