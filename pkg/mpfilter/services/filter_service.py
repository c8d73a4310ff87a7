"""Bootstrap particle filter and the coupled (level l / l-1) particle filter.

Both filters resample at every unit time. The estimate at integer time t is
taken from the cloud propagated over [t-1, t], weighted by G_{t-1}, before it
is resampled.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from mpfilter.config import settings
from mpfilter.exceptions.filter_exceptions import (
    ConfigurationError,
    DegenerateWeightsError,
)
from mpfilter.logging_config import get_logger
from mpfilter.rng import Seed, as_factory
from mpfilter.schemas.dataset import MarkedDataset
from mpfilter.schemas.model import ModelSpec
from mpfilter.services.path_service import (
    PathBatch,
    coupled_euler_batch,
    euler_batch,
)
from mpfilter.services.potential_service import PotentialContext
from mpfilter.validators.weights_validator import (
    NormalizedWeightsValidator,
    WeightsValidator,
)

logger = get_logger()

TestFunction = Callable[[np.ndarray], np.ndarray]
PhiLike = Union[str, TestFunction]


def _identity(x: np.ndarray) -> np.ndarray:
    return x


def _square(x: np.ndarray) -> np.ndarray:
    return x * x


TEST_FUNCTIONS: Dict[str, TestFunction] = {"identity": _identity, "square": _square}


def resolve_test_functions(
    test_functions: Sequence[PhiLike],
) -> Dict[str, TestFunction]:
    resolved: Dict[str, TestFunction] = {}
    for phi in test_functions:
        if isinstance(phi, str):
            if phi not in TEST_FUNCTIONS:
                raise ConfigurationError(
                    f"Unknown test function {phi!r}; "
                    f"choose from {sorted(TEST_FUNCTIONS)}."
                )
            resolved[phi] = TEST_FUNCTIONS[phi]
        else:
            resolved[getattr(phi, "__name__", f"phi_{len(resolved)}")] = phi
    if not resolved:
        raise ConfigurationError("At least one test function is required.")
    return resolved


def normalize_log_weights(
    log_weights: np.ndarray, unit_time: Optional[int] = None
) -> np.ndarray:
    top = np.max(log_weights)
    if not np.isfinite(top):
        raise DegenerateWeightsError(
            "Every particle weight is zero or undefined", unit_time=unit_time
        )
    w = np.exp(log_weights - top)
    return w / w.sum()


def effective_sample_size(log_weights: np.ndarray) -> float:
    w = normalize_log_weights(np.asarray(log_weights, dtype=float))
    return float(1.0 / np.sum(w * w))


def estimate(weights, endpoints, phi: PhiLike = "identity") -> float:
    """Self-normalised weighted mean of φ at the endpoint states."""
    w = np.asarray(weights, dtype=float)
    WeightsValidator().validate(w)
    fn = next(iter(resolve_test_functions([phi]).values()))
    values = fn(np.asarray(endpoints, dtype=float))
    return float(np.dot(w, values) / w.sum())


def _categorical(probabilities: np.ndarray, draws: int, rng) -> np.ndarray:
    cdf = np.cumsum(probabilities)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(draws), side="right")
    return np.minimum(idx, probabilities.shape[0] - 1)


def multinomial_resample(normalized_weights, N_draws: int, rng) -> np.ndarray:
    w = np.asarray(normalized_weights, dtype=float)
    WeightsValidator().validate(w)
    return _categorical(w, N_draws, rng)


def maximal_coupling_resample(
    W1, W2, N: int, rng
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw N index pairs whose marginals are W1 and W2 and which agree as often as
    possible. Non-meeting pairs are drawn independently from the residuals."""
    W1 = np.asarray(W1, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    validator = NormalizedWeightsValidator()
    validator.validate(W1)
    validator.validate(W2)
    common = np.minimum(W1, W2)
    overlap = float(common.sum())
    met = rng.random(N) < overlap
    residual_1 = np.maximum(W1 - common, 0.0)
    residual_2 = np.maximum(W2 - common, 0.0)
    if residual_1.sum() <= 0 or residual_2.sum() <= 0:
        met[:] = True
    a1 = np.empty(N, dtype=np.int64)
    a2 = np.empty(N, dtype=np.int64)
    n_met = int(met.sum())
    if n_met:
        shared = _categorical(common, n_met, rng)
        a1[met] = shared
        a2[met] = shared
    if n_met < N:
        rest = ~met
        a1[rest] = _categorical(residual_1, N - n_met, rng)
        a2[rest] = _categorical(residual_2, N - n_met, rng)
    return a1, a2, met


@dataclass(frozen=True)
class WeightedCloud:
    """Endpoints x_t with log G_{t-1}; optionally the path pairs (u_{t-2}, u_{t-1})."""

    log_weights: np.ndarray
    endpoints: np.ndarray
    current: Optional[PathBatch] = None
    previous: Optional[PathBatch] = None

    def __len__(self) -> int:
        return int(self.endpoints.shape[0])

    def normalized_weights(self) -> np.ndarray:
        return normalize_log_weights(self.log_weights)

    def estimate(self, phi: PhiLike = "identity") -> float:
        return estimate(self.normalized_weights(), self.endpoints, phi)


@dataclass
class ParticleSystem:
    level: int
    unit_time: int
    endpoints: np.ndarray
    log_weights: np.ndarray
    current: Optional[PathBatch] = None
    previous: Optional[PathBatch] = None
    cost_steps: int = 0

    @property
    def N(self) -> int:
        return int(self.endpoints.shape[0])

    def normalized_weights(self) -> np.ndarray:
        return normalize_log_weights(self.log_weights, self.unit_time)

    def cloud(self) -> WeightedCloud:
        return WeightedCloud(
            self.log_weights, self.endpoints, self.current, self.previous
        )


@dataclass
class CoupledSystem:
    fine: ParticleSystem
    coarse: ParticleSystem
    # whether each pair shared its ancestor at the last coupled resampling
    met: Optional[np.ndarray] = None


@dataclass
class FilterOutput:
    level: int
    particles: int
    times: np.ndarray
    estimates: Dict[str, np.ndarray]
    cost_steps: int
    cumulative_cost: np.ndarray
    log_normalizer: np.ndarray
    terminal: WeightedCloud
    coarse_terminal: Optional[WeightedCloud] = None
    meet_rates: List[float] = field(default_factory=list)

    def estimate_at(self, t: int, name: Optional[str] = None) -> float:
        key = name or next(iter(self.estimates))
        return float(self.estimates[key][t - 1])


def _check_run(N: int, T: int, dataset: MarkedDataset) -> None:
    if N < 1:
        raise ConfigurationError(f"Need at least one particle, got N={N}.")
    if T < 1 or T > dataset.horizon_T:
        raise ConfigurationError(
            f"T must lie in 1..{dataset.horizon_T} (the data horizon), got {T}."
        )


def _keep_paths(N: int, ctx: PotentialContext) -> bool:
    return N * (ctx.steps + 1) <= settings.max_stored_states


def _join(batches: List[PathBatch]) -> PathBatch:
    first = batches[0]
    return PathBatch(
        first.level,
        first.start_time,
        np.concatenate([b.states for b in batches]),
        np.concatenate([b.increments for b in batches]),
    )


def _advance(
    ctx: PotentialContext, starts: np.ndarray, p: int, rng, keep: bool
) -> ParticleSystem:
    """Propagate over [p, p + 1] in particle chunks and weigh by G_p."""
    n = starts.shape[0]
    endpoints = np.empty(n)
    log_weights = np.empty(n)
    kept = []
    for lo in range(0, n, settings.chunk_particles):
        hi = min(n, lo + settings.chunk_particles)
        batch = euler_batch(ctx.spec, ctx.level, p, starts[lo:hi], rng)
        log_weights[lo:hi] = ctx.log_unit_potential(p, batch.states)
        endpoints[lo:hi] = batch.endpoints
        if keep:
            kept.append(batch)
    return ParticleSystem(
        ctx.level, p, endpoints, log_weights, _join(kept) if keep else None
    )


def _advance_coupled(
    fine_ctx: PotentialContext,
    coarse_ctx: PotentialContext,
    starts_fine: np.ndarray,
    starts_coarse: np.ndarray,
    p: int,
    rng,
    keep: bool,
) -> CoupledSystem:
    n = starts_fine.shape[0]
    out = {
        "fine": (np.empty(n), np.empty(n), []),
        "coarse": (np.empty(n), np.empty(n), []),
    }
    for lo in range(0, n, settings.chunk_particles):
        hi = min(n, lo + settings.chunk_particles)
        pair = coupled_euler_batch(
            fine_ctx.spec,
            fine_ctx.level,
            p,
            starts_fine[lo:hi],
            starts_coarse[lo:hi],
            rng,
        )
        for (name, ctx), batch in zip(
            (("fine", fine_ctx), ("coarse", coarse_ctx)), pair
        ):
            endpoints, log_weights, kept = out[name]
            log_weights[lo:hi] = ctx.log_unit_potential(p, batch.states)
            endpoints[lo:hi] = batch.endpoints
            if keep:
                kept.append(batch)
    systems = {}
    for name, ctx in (("fine", fine_ctx), ("coarse", coarse_ctx)):
        endpoints, log_weights, kept = out[name]
        systems[name] = ParticleSystem(
            ctx.level, p, endpoints, log_weights, _join(kept) if keep else None
        )
    return CoupledSystem(systems["fine"], systems["coarse"])


def _debug_enabled() -> bool:
    return logging.getLogger(__name__).isEnabledFor(logging.DEBUG)


def _log_increment(log_weights: np.ndarray) -> float:
    return float(logsumexp(log_weights) - math.log(log_weights.shape[0]))


def run_pf(
    spec: ModelSpec,
    level: int,
    N: int,
    dataset: MarkedDataset,
    T: int,
    test_functions: Sequence[PhiLike] = ("identity",),
    seed: Optional[Seed] = None,
    quadrature: Optional[str] = None,
) -> FilterOutput:
    _check_run(N, T, dataset)
    phis = resolve_test_functions(test_functions)
    ctx = PotentialContext(spec, dataset, level, quadrature)
    streams = as_factory(settings.default_seed if seed is None else seed).child(
        "pf", level
    )
    keep = _keep_paths(N, ctx)
    logger.info("pf_run_started", level=level, particles=N, T=T)

    estimates = {name: np.empty(T) for name in phis}
    log_normalizer = np.empty(T)
    cumulative_cost = np.empty(T, dtype=np.int64)
    starts = np.full(N, spec.x_star, dtype=float)
    previous: Optional[PathBatch] = None
    cost = 0
    running = 0.0
    for p in range(T):
        system = _advance(ctx, starts, p, streams.generator("propagate", p), keep)
        system.previous = previous
        cost += N * ctx.steps
        system.cost_steps = cost
        cumulative_cost[p] = cost
        weights = system.normalized_weights()
        running += _log_increment(system.log_weights)
        log_normalizer[p] = running
        for name, phi in phis.items():
            estimates[name][p] = estimate(weights, system.endpoints, phi)
        if _debug_enabled():
            logger.debug(
                "pf_step", unit_time=p, ess=effective_sample_size(system.log_weights)
            )
        if p == T - 1:
            break
        idx = multinomial_resample(weights, N, streams.generator("resample", p))
        starts = system.endpoints[idx]
        previous = system.current.take(idx) if system.current is not None else None

    logger.info("pf_run_completed", level=level, particles=N, cost_steps=cost)
    return FilterOutput(
        level=level,
        particles=N,
        times=np.arange(1, T + 1),
        estimates=estimates,
        cost_steps=cost,
        cumulative_cost=cumulative_cost,
        log_normalizer=log_normalizer,
        terminal=system.cloud(),
    )


def run_cpf(
    spec: ModelSpec,
    level: int,
    N: int,
    dataset: MarkedDataset,
    T: int,
    test_functions: Sequence[PhiLike] = ("identity",),
    seed: Optional[Seed] = None,
    quadrature: Optional[str] = None,
) -> FilterOutput:
    """Level-difference estimates π^l_t(φ) - π^{l-1}_t(φ) from one coupled run."""
    if level < 1:
        raise ConfigurationError(f"The coupled filter needs level >= 1, got {level}.")
    _check_run(N, T, dataset)
    phis = resolve_test_functions(test_functions)
    fine_ctx = PotentialContext(spec, dataset, level, quadrature)
    coarse_ctx = PotentialContext(spec, dataset, level - 1, fine_ctx.quadrature)
    streams = as_factory(settings.default_seed if seed is None else seed).child(
        "cpf", level
    )
    keep = _keep_paths(N, fine_ctx)
    per_unit = N * (fine_ctx.steps + coarse_ctx.steps)
    logger.info("cpf_run_started", level=level, particles=N, T=T)

    estimates = {name: np.empty(T) for name in phis}
    log_normalizer = np.empty(T)
    cumulative_cost = np.empty(T, dtype=np.int64)
    starts_fine = np.full(N, spec.x_star, dtype=float)
    starts_coarse = starts_fine.copy()
    previous: Tuple[Optional[PathBatch], Optional[PathBatch]] = (None, None)
    meet_rates: List[float] = []
    met = None
    cost = 0
    running = 0.0
    for p in range(T):
        coupled = _advance_coupled(
            fine_ctx,
            coarse_ctx,
            starts_fine,
            starts_coarse,
            p,
            streams.generator("propagate", p),
            keep,
        )
        coupled.met = met
        coupled.fine.previous, coupled.coarse.previous = previous
        cost += per_unit
        coupled.fine.cost_steps = coupled.coarse.cost_steps = cost
        cumulative_cost[p] = cost
        w_fine = coupled.fine.normalized_weights()
        w_coarse = coupled.coarse.normalized_weights()
        running += _log_increment(coupled.fine.log_weights)
        log_normalizer[p] = running
        for name, phi in phis.items():
            estimates[name][p] = estimate(
                w_fine, coupled.fine.endpoints, phi
            ) - estimate(w_coarse, coupled.coarse.endpoints, phi)
        if p == T - 1:
            break
        a1, a2, met = maximal_coupling_resample(
            w_fine, w_coarse, N, streams.generator("resample", p)
        )
        meet_rates.append(float(met.mean()))
        starts_fine = coupled.fine.endpoints[a1]
        starts_coarse = coupled.coarse.endpoints[a2]
        if coupled.fine.current is not None:
            previous = (coupled.fine.current.take(a1), coupled.coarse.current.take(a2))

    logger.info(
        "cpf_run_completed",
        level=level,
        particles=N,
        cost_steps=cost,
        mean_meet_rate=float(np.mean(meet_rates)) if meet_rates else None,
    )
    return FilterOutput(
        level=level,
        particles=N,
        times=np.arange(1, T + 1),
        estimates=estimates,
        cost_steps=cost,
        cumulative_cost=cumulative_cost,
        log_normalizer=log_normalizer,
        terminal=coupled.fine.cloud(),
        coarse_terminal=coupled.coarse.cloud(),
        meet_rates=meet_rates,
    )
