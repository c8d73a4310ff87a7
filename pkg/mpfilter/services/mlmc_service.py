"""Multilevel and randomised unbiased particle filter estimators.

The multilevel estimator adds independent coupled level differences to a base
filter. The unbiased estimator draws the level L and the particle-schedule index
P at random and reweights a single coupled sum by their probabilities.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from mpfilter.config import settings
from mpfilter.exceptions.filter_exceptions import ConfigurationError
from mpfilter.logging_config import get_logger
from mpfilter.rng import Seed, as_factory
from mpfilter.schemas.dataset import MarkedDataset
from mpfilter.schemas.estimator import MlAllocation, Randomization
from mpfilter.schemas.model import ModelSpec
from mpfilter.services.filter_service import (
    PhiLike,
    WeightedCloud,
    normalize_log_weights,
    resolve_test_functions,
    run_cpf,
    run_pf,
)
from mpfilter.services.replicate_service import run_replicates

logger = get_logger()


def mlpf_allocate(
    epsilon: float, l0: int = 0, constant_C: Optional[float] = None
) -> MlAllocation:
    """Finest level with Δ_L <= ε and N_l = ceil(C Δ_l^{3/4} ε^{-5/2})."""
    if not 0 < epsilon < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}.")
    if l0 < 0:
        raise ConfigurationError(f"l0 must be nonnegative, got {l0}.")
    C = settings.mlpf_constant if constant_C is None else constant_C
    if C <= 0:
        raise ConfigurationError(
            f"The allocation constant must be positive, got {C}."
        )
    L = max(l0, math.ceil(math.log2(1.0 / epsilon)))
    # exponents in base 2 keep dyadic ε exact
    log2_eps = math.log2(epsilon)
    N_levels = tuple(
        max(1, math.ceil(C * 2.0 ** (-0.75 * level - 2.5 * log2_eps)))
        for level in range(l0, L + 1)
    )
    return MlAllocation(
        l0=l0, L=L, N_levels=N_levels, epsilon=epsilon, constant_C=C
    )


@dataclass
class MlpfOutput:
    allocation: MlAllocation
    times: np.ndarray
    estimates: Dict[str, np.ndarray]
    cost_steps: int
    cumulative_cost: np.ndarray
    level_costs: Dict[int, int] = field(default_factory=dict)

    def estimate_at(self, t: int, name: Optional[str] = None) -> float:
        key = name or next(iter(self.estimates))
        return float(self.estimates[key][t - 1])


def run_mlpf(
    spec: ModelSpec,
    dataset: MarkedDataset,
    T: int,
    alloc: MlAllocation,
    test_functions: Sequence[PhiLike] = ("identity",),
    seed: Optional[Seed] = None,
    quadrature: Optional[str] = None,
) -> MlpfOutput:
    """Base filter at l0 plus coupled differences at l0+1..L.

    Every level draws from its own stream family, so the base term is exactly
    `run_pf` with the same seed.
    """
    seed = settings.default_seed if seed is None else seed
    logger.info(
        "mlpf_run_started", l0=alloc.l0, L=alloc.L, N_levels=alloc.N_levels
    )
    base = run_pf(
        spec,
        alloc.l0,
        alloc.N_levels[0],
        dataset,
        T,
        test_functions,
        seed,
        quadrature,
    )
    estimates = {name: values.copy() for name, values in base.estimates.items()}
    cumulative = base.cumulative_cost.copy()
    level_costs = {alloc.l0: base.cost_steps}
    for level in alloc.levels[1:]:
        diff = run_cpf(
            spec,
            level,
            alloc.particles(level),
            dataset,
            T,
            test_functions,
            seed,
            quadrature,
        )
        for name in estimates:
            estimates[name] += diff.estimates[name]
        cumulative += diff.cumulative_cost
        level_costs[level] = diff.cost_steps
    total = sum(level_costs.values())
    logger.info("mlpf_run_completed", L=alloc.L, cost_steps=total)
    return MlpfOutput(
        allocation=alloc,
        times=base.times,
        estimates=estimates,
        cost_steps=total,
        cumulative_cost=cumulative,
        level_costs=level_costs,
    )


def _proportional(values: np.ndarray) -> tuple:
    pmf = values / values.sum()
    return tuple(float(q) for q in pmf)


def build_randomization(
    l0: int = 0,
    L_trunc: Optional[int] = None,
    P_trunc: Optional[int] = None,
    N0: Optional[int] = None,
) -> Randomization:
    """P_L(l) ∝ log(l+2)^2 (l+1) Δ_l^{1/2}, P_P(p) ∝ log(p+2)^2 (p+1) / N_p."""
    L_trunc = settings.upf_l_trunc if L_trunc is None else L_trunc
    P_trunc = settings.upf_p_trunc if P_trunc is None else P_trunc
    N0 = settings.upf_n0 if N0 is None else N0
    if l0 < 0 or L_trunc < l0 or P_trunc < 0 or N0 < 1:
        raise ConfigurationError(
            f"Invalid truncation (l0={l0}, L_trunc={L_trunc}, P_trunc={P_trunc}, "
            f"N0={N0})."
        )
    levels = np.arange(l0, L_trunc + 1, dtype=float)
    ps = np.arange(0, P_trunc + 1, dtype=float)
    level_mass = np.log(levels + 2.0) ** 2 * (levels + 1.0) * 2.0 ** (-levels / 2.0)
    particle_mass = np.log(ps + 2.0) ** 2 * (ps + 1.0) / (N0 * 2.0**ps)
    return Randomization(
        l0=l0,
        L_trunc=L_trunc,
        P_trunc=P_trunc,
        N0=N0,
        level_pmf=_proportional(level_mass),
        particle_pmf=_proportional(particle_mass),
    )


def pooled_estimate(
    clouds: Sequence[WeightedCloud], phi: PhiLike = "identity"
) -> float:
    """Self-normalised estimate from the union of independent clouds.

    Mixing the clouds' empirical measures with weights (N_q - N_{q-1}) / N_p is
    the same as pooling every particle once.
    """
    fn = next(iter(resolve_test_functions([phi]).values()))
    log_weights = np.concatenate([c.log_weights for c in clouds])
    endpoints = np.concatenate([c.endpoints for c in clouds])
    w = normalize_log_weights(log_weights)
    return float(np.dot(w, fn(endpoints)))


@dataclass(frozen=True)
class XiSample:
    value: float
    p: int
    cost_steps: int


def _draw_p(rand: Randomization, streams) -> int:
    return rand.sample_p(streams.generator("particle_index"))


def _debiased(partials: List[float], P: int, rand: Randomization) -> float:
    previous = partials[P - 1] if P > 0 else 0.0
    return (partials[P] - previous) / rand.particle_probability(P)


def compute_xi0(
    spec: ModelSpec,
    dataset: MarkedDataset,
    T: int,
    rand: Randomization,
    phi: PhiLike = "identity",
    seed: Optional[Seed] = None,
    quadrature: Optional[str] = None,
) -> XiSample:
    streams = as_factory(settings.default_seed if seed is None else seed).child(
        "unbiased", rand.l0
    )
    P = _draw_p(rand, streams)
    clouds: List[WeightedCloud] = []
    partials: List[float] = []
    cost = 0
    for q in range(P + 1):
        out = run_pf(
            spec,
            rand.l0,
            rand.new_particles(q),
            dataset,
            T,
            [phi],
            streams.child("cloud", q),
            quadrature,
        )
        clouds.append(out.terminal)
        partials.append(pooled_estimate(clouds, phi))
        cost += out.cost_steps
    return XiSample(_debiased(partials, P, rand), P, cost)


def compute_xil(
    spec: ModelSpec,
    dataset: MarkedDataset,
    T: int,
    level: int,
    rand: Randomization,
    phi: PhiLike = "identity",
    seed: Optional[Seed] = None,
    quadrature: Optional[str] = None,
) -> XiSample:
    if not rand.l0 < level <= rand.L_trunc:
        raise ConfigurationError(
            f"Level {level} must lie in ({rand.l0}, {rand.L_trunc}]."
        )
    streams = as_factory(settings.default_seed if seed is None else seed).child(
        "unbiased", level
    )
    P = _draw_p(rand, streams)
    fine: List[WeightedCloud] = []
    coarse: List[WeightedCloud] = []
    partials: List[float] = []
    cost = 0
    for q in range(P + 1):
        out = run_cpf(
            spec,
            level,
            rand.new_particles(q),
            dataset,
            T,
            [phi],
            streams.child("cloud", q),
            quadrature,
        )
        fine.append(out.terminal)
        coarse.append(out.coarse_terminal)
        partials.append(pooled_estimate(fine, phi) - pooled_estimate(coarse, phi))
        cost += out.cost_steps
    return XiSample(_debiased(partials, P, rand), P, cost)


@dataclass(frozen=True)
class UpfReplicate:
    replicate: int
    level: int
    p: int
    xi: float
    weighted_value: float
    cost_steps: int


@dataclass
class UpfResult:
    mean: float
    replicates: List[UpfReplicate]
    cost_steps: int

    @property
    def values(self) -> np.ndarray:
        return np.array([r.weighted_value for r in self.replicates])

    @property
    def standard_error(self) -> float:
        if len(self.replicates) < 2:
            return float("nan")
        return float(np.std(self.values, ddof=1) / math.sqrt(len(self.replicates)))


def upf_estimate(
    spec: ModelSpec,
    dataset: MarkedDataset,
    T: int,
    rand: Randomization,
    phi: PhiLike = "identity",
    M: int = 1,
    seed: Optional[Seed] = None,
    quadrature: Optional[str] = None,
    workers: Optional[int] = None,
) -> UpfResult:
    if M < 1:
        raise ConfigurationError(f"M must be at least 1, got {M}.")
    root = as_factory(settings.default_seed if seed is None else seed).child("upf")

    def replicate(i: int) -> UpfReplicate:
        streams = root.child("replicate", i)
        level = rand.sample_level(streams.generator("level"))
        if level == rand.l0:
            xi = compute_xi0(spec, dataset, T, rand, phi, streams, quadrature)
        else:
            xi = compute_xil(spec, dataset, T, level, rand, phi, streams, quadrature)
        return UpfReplicate(
            replicate=i,
            level=level,
            p=xi.p,
            xi=xi.value,
            weighted_value=xi.value / rand.level_probability(level),
            cost_steps=xi.cost_steps,
        )

    logger.info("upf_run_started", M=M, L_trunc=rand.L_trunc, P_trunc=rand.P_trunc)
    replicates = run_replicates(replicate, M, workers)
    # exactly rounded, so the mean does not depend on replicate order
    mean = math.fsum(r.weighted_value for r in replicates) / M
    cost = sum(r.cost_steps for r in replicates)
    logger.info("upf_run_completed", M=M, mean=mean, cost_steps=cost)
    return UpfResult(mean=mean, replicates=replicates, cost_steps=cost)

