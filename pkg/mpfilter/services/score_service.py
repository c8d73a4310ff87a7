"""Online score estimation with an O(N^2) backward recursion, and the windowed
stochastic gradient ascent built on it.

Each particle carries F, the backward-smoothed additive functional of the
path-space log density. Per unit time the recursion is

    F_k^i = sum_j w_ij (F_{k-1}^j + mu_k(x̌^j, u_k^i)),
    w_ij ∝ ḡ(x̌^j, x^i_{k+Δ}) m(x̌^j, x^i_{k+Δ}),

where x̌^j are the resampled endpoints at time k and only the first sub-step
of u_k^i depends on j.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

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
from mpfilter.schemas.sga import SgaConfig
from mpfilter.services.filter_service import (
    multinomial_resample,
    normalize_log_weights,
)
from mpfilter.services.path_service import (
    PathBatch,
    Trajectory,
    UnitPath,
    euler_batch,
    interpolate_states,
)
from mpfilter.services.potential_service import PotentialContext

logger = get_logger()

# entries of the (j, i) backward matrix processed per block
_BLOCK_ENTRIES = 1 << 20


def _drift_term(ctx: PotentialContext, x, z) -> np.ndarray:
    """∇b(x) Z / σ(x), taken as 0 where the diffusion vanishes."""
    model = ctx.model
    x = np.asarray(x, dtype=float)
    sigma = np.broadcast_to(model.diffusion(x), np.broadcast(x, z).shape)
    z = np.broadcast_to(z, sigma.shape)
    scaled = np.divide(z, sigma, out=np.zeros(sigma.shape), where=sigma != 0.0)
    return model.drift_gradient(x) * scaled[..., None]


def _mu_head(
    ctx: PotentialContext, p: int, x_left, x_right, z=None
) -> np.ndarray:
    """First sub-step terms of mu_p; the only part that depends on the left state.

    Without `z` the Brownian increment is the one implied by the Euler step
    from x_left to x_right.
    """
    model = ctx.model
    x_left = np.asarray(x_left, dtype=float)
    x_right = np.asarray(x_right, dtype=float)
    if z is None:
        sigma = model.diffusion(x_left)
        resid = x_right - x_left - model.drift(x_left) * ctx.delta
        z = np.divide(
            resid,
            sigma,
            out=np.zeros(np.broadcast(resid, sigma).shape),
            where=sigma != 0.0,
        )
    shape = np.broadcast(x_left, x_right).shape + (len(model.free),)
    out = np.broadcast_to(_drift_term(ctx, x_left, z), shape)
    if ctx.quadrature == "left":
        out = out - ctx.delta * model.intensity_gradient(x_left)
    sl = ctx.dataset.window_slice(p, p + ctx.delta)
    for s, y in zip(ctx.dataset.times[sl], ctx.dataset.marks[sl]):
        frac = (s - p) / ctx.delta
        x_s = x_right if frac == 1.0 else x_left + (x_right - x_left) * frac
        out = out + model.log_mark_intensity_gradient(x_s, y)
    return np.broadcast_to(out, shape)


def _mu_tail(ctx: PotentialContext, batch: PathBatch) -> np.ndarray:
    """Terms of mu_p from sub-steps 2..n, which depend on each path alone."""
    model = ctx.model
    p = batch.start_time
    states = batch.states
    out = np.zeros((len(batch), len(model.free)))
    if states.shape[1] > 2:
        out += _drift_term(ctx, states[:, 1:-1], batch.increments[:, 1:]).sum(axis=1)
    x_quad = states[:, 1:] if ctx.quadrature == "right" else states[:, 1:-1]
    if x_quad.shape[1]:
        out -= ctx.delta * model.intensity_gradient(x_quad).sum(axis=1)
    times, marks = ctx.unit_events(p)
    later = times > p + ctx.delta
    if np.any(later):
        x_events = interpolate_states(states, ctx.level, p, times[later])
        out += model.log_mark_intensity_gradient(
            x_events, marks[later][None, :]
        ).sum(axis=1)
    return out


def mu_batch(ctx: PotentialContext, batch: PathBatch) -> np.ndarray:
    """mu_p for every path of the batch along its own increments; (N, d)."""
    ctx.check_unit(batch.start_time)
    head = _mu_head(
        ctx,
        batch.start_time,
        batch.states[:, 0],
        batch.states[:, 1],
        batch.increments[:, 0],
    )
    return head + _mu_tail(ctx, batch)


def mu_increment(
    spec: ModelSpec,
    level: int,
    unit_path: UnitPath,
    dataset: MarkedDataset,
    quadrature: Optional[str] = None,
) -> np.ndarray:
    ctx = PotentialContext(spec, dataset, level, quadrature)
    if unit_path.level != level:
        raise ConfigurationError(
            f"Path level {unit_path.level} differs from the requested level {level}."
        )
    return mu_batch(ctx, PathBatch.from_paths([unit_path]))[0]


def path_score(
    spec: ModelSpec,
    trajectory: Trajectory,
    dataset: MarkedDataset,
    quadrature: Optional[str] = None,
) -> np.ndarray:
    """θ-gradient of the discretised path-space log density over a whole trajectory."""
    ctx = PotentialContext(spec, dataset, trajectory.level, quadrature)
    model = ctx.model
    x = trajectory.states
    out = _drift_term(ctx, x[:-1], trajectory.increments).sum(axis=0)
    x_quad = x[1:] if ctx.quadrature == "right" else x[:-1]
    out = out - ctx.delta * model.intensity_gradient(x_quad).sum(axis=0)
    start = trajectory.start_time
    sl = dataset.window_slice(start, start + trajectory.units)
    if sl.stop > sl.start:
        grid = start + np.arange(x.shape[0]) * ctx.delta
        x_events = np.interp(dataset.times[sl], grid, x)
        out = out + model.log_mark_intensity_gradient(
            x_events, dataset.marks[sl]
        ).sum(axis=0)
    return out


class ScoreFilter:
    """Forward particle filter carrying backward-smoothed score functionals.

    `advance` processes one unit time; passing a spec refreshes θ from then on.
    """

    def __init__(
        self,
        spec: ModelSpec,
        level: int,
        N: int,
        dataset: MarkedDataset,
        seed: Optional[Seed] = None,
        quadrature: Optional[str] = None,
    ) -> None:
        if N < 2:
            raise ConfigurationError(f"Score estimation needs N >= 2, got {N}.")
        self.ctx = PotentialContext(spec, dataset, level, quadrature)
        self.N = N
        self.names = self.ctx.model.free
        self._streams = as_factory(
            settings.default_seed if seed is None else seed
        ).child("score", level)
        self.unit_time = 0
        self.batch: Optional[PathBatch] = None
        self.F: Optional[np.ndarray] = None
        self.log_weights: Optional[np.ndarray] = None
        self.cost_steps = 0
        self.kernel_evaluations = 0
        self.log_normalizer = 0.0
        self.last_backward: Optional[np.ndarray] = None

    @property
    def spec(self) -> ModelSpec:
        return self.ctx.spec

    @property
    def dim(self) -> int:
        return len(self.names)

    def refresh(self, spec: ModelSpec) -> None:
        if spec == self.ctx.spec:
            return
        ctx = self.ctx.with_spec(spec)
        if ctx.model.free != self.names:
            raise ConfigurationError(
                f"Free coordinates changed from {self.names} to {ctx.model.free}."
            )
        self.ctx = ctx

    def advance(self, spec: Optional[ModelSpec] = None) -> np.ndarray:
        """Process (k, k + 1] and return the score estimate at time k + 1."""
        if spec is not None:
            self.refresh(spec)
        ctx = self.ctx
        k = self.unit_time
        ctx.check_unit(k)
        if k == 0:
            starts = np.full(self.N, ctx.spec.x_star, dtype=float)
            batch = euler_batch(
                ctx.spec, ctx.level, 0, starts, self._streams.generator("propagate", 0)
            )
            F = mu_batch(ctx, batch)
        else:
            weights = normalize_log_weights(self.log_weights, k - 1)
            idx = multinomial_resample(
                weights, self.N, self._streams.generator("resample", k - 1)
            )
            starts = self.batch.endpoints[idx]
            batch = euler_batch(
                ctx.spec, ctx.level, k, starts, self._streams.generator("propagate", k)
            )
            F = self._backward_update(k, starts, self.F[idx], batch)
            self.kernel_evaluations += self.N * self.N
        self.cost_steps += self.N * ctx.steps
        self.batch = batch
        self.F = F
        self.log_weights = ctx.log_unit_potential(k, batch.states)
        self.log_normalizer += float(
            logsumexp(self.log_weights) - math.log(self.N)
        )
        self.unit_time = k + 1
        weights = normalize_log_weights(self.log_weights, k)
        return weights @ F

    def _backward_update(
        self, k: int, starts: np.ndarray, F_prev: np.ndarray, batch: PathBatch
    ) -> np.ndarray:
        ctx = self.ctx
        x_right = batch.states[:, 1]
        tail = _mu_tail(ctx, batch)
        F = np.empty_like(tail)
        block = max(1, _BLOCK_ENTRIES // self.N)
        x_left = starts[:, None]
        for lo in range(0, self.N, block):
            hi = min(self.N, lo + block)
            xr = x_right[None, lo:hi]
            log_b = ctx.log_substep_factor(k * ctx.steps, x_left, xr)
            log_b = log_b + ctx.log_transition(x_left, xr)
            top = log_b.max(axis=0)
            bad = ~np.isfinite(top)
            if np.any(bad):
                i = lo + int(np.argmax(bad))
                raise DegenerateWeightsError(
                    f"Backward weights vanish for particle {i}", unit_time=k
                )
            B = np.exp(log_b - top)
            B /= B.sum(axis=0)
            if lo == 0:
                self.last_backward = B
            head = _mu_head(ctx, k, x_left, xr)
            F[lo:hi] = (
                B.T @ F_prev + np.einsum("ji,jid->id", B, head) + tail[lo:hi]
            )
        return F


@dataclass
class ScoreOutput:
    names: Tuple[str, ...]
    times: np.ndarray
    scores: np.ndarray  # (T, d)
    cost_steps: int
    kernel_evaluations: int
    log_normalizer: np.ndarray
    # Euler sub-steps plus backward kernel evaluations up to each t
    cumulative_cost: np.ndarray

    @property
    def total_cost(self) -> int:
        return self.cost_steps + self.kernel_evaluations


def run_score_filter(
    spec: ModelSpec,
    level: int,
    N: int,
    dataset: MarkedDataset,
    T: int,
    seed: Optional[Seed] = None,
    quadrature: Optional[str] = None,
) -> ScoreOutput:
    if T < 1 or T > dataset.horizon_T:
        raise ConfigurationError(
            f"T must lie in 1..{dataset.horizon_T} (the data horizon), got {T}."
        )
    filt = ScoreFilter(spec, level, N, dataset, seed, quadrature)
    logger.info("score_run_started", level=level, particles=N, T=T, names=filt.names)
    scores = np.empty((T, filt.dim))
    log_normalizer = np.empty(T)
    cumulative = np.empty(T, dtype=np.int64)
    for t in range(T):
        scores[t] = filt.advance()
        log_normalizer[t] = filt.log_normalizer
        cumulative[t] = filt.cost_steps + filt.kernel_evaluations
    logger.info(
        "score_run_completed",
        cost_steps=filt.cost_steps,
        kernel_evaluations=filt.kernel_evaluations,
    )
    return ScoreOutput(
        names=filt.names,
        times=np.arange(1, T + 1),
        scores=scores,
        cost_steps=filt.cost_steps,
        kernel_evaluations=filt.kernel_evaluations,
        log_normalizer=log_normalizer,
        cumulative_cost=cumulative,
    )


@dataclass(frozen=True)
class SgaIteration:
    m: int
    theta: Tuple[float, ...]  # θ_m, used over the window (cm, c(m+1)]
    gradient: Tuple[float, ...]
    alpha_m: float
    projected: bool


@dataclass
class SgaResult:
    names: Tuple[str, ...]
    iterations: List[SgaIteration]
    theta_final: Tuple[float, ...]
    cost_steps: int
    kernel_evaluations: int

    def trajectory(self) -> np.ndarray:
        rows = [it.theta for it in self.iterations] + [self.theta_final]
        return np.array(rows)


def _floors(names: Tuple[str, ...], cfg: SgaConfig) -> np.ndarray:
    if cfg.floors is not None:
        if len(cfg.floors) != len(names):
            raise ConfigurationError(
                f"floors needs {len(names)} entries for {names}, got {len(cfg.floors)}."
            )
        return np.array(cfg.floors, dtype=float)
    # θ_b is unconstrained; intensity and mark variance must stay positive
    return np.array(
        [-np.inf if n == "theta_b" else settings.projection_floor for n in names]
    )


def sga_run(
    spec_template: ModelSpec,
    dataset: MarkedDataset,
    level: int,
    N: int,
    cfg: SgaConfig,
    seed: Optional[Seed] = None,
    quadrature: Optional[str] = None,
) -> SgaResult:
    """θ_{m+1} = θ_m + α_m (score at c(m+1) - score at cm), projected onto floors."""
    if dataset.horizon_T < cfg.window_c * cfg.iterations:
        raise ConfigurationError(
            f"{cfg.iterations} iterations of window {cfg.window_c} need T >= "
            f"{cfg.window_c * cfg.iterations}, data horizon is {dataset.horizon_T}."
        )
    spec = spec_template.with_theta(cfg.theta_init)
    filt = ScoreFilter(spec, level, N, dataset, seed, quadrature)
    names = filt.names
    d = len(names)
    if len(cfg.alpha0) not in (1, d):
        raise ConfigurationError(
            f"alpha0 needs 1 or {d} entries for {names}, got {len(cfg.alpha0)}."
        )
    alpha0 = np.broadcast_to(np.array(cfg.alpha0, dtype=float), (d,))
    floors = _floors(names, cfg)
    theta = np.array([spec.theta.get(n) for n in names])
    previous = np.zeros(d)
    iterations: List[SgaIteration] = []
    logger.info("sga_run_started", names=names, iterations=cfg.iterations)
    for m in range(cfg.iterations):
        for _ in range(cfg.window_c):
            score = filt.advance(spec)
        gradient = score - previous
        previous = score
        step = cfg.step_factor(m)
        proposal = theta + alpha0 * step * gradient
        updated = np.maximum(proposal, floors)
        projected = bool(np.any(updated != proposal))
        if projected:
            logger.info(
                "sga_projection_applied",
                m=m,
                coordinates=[n for n, a, b in zip(names, updated, proposal) if a != b],
            )
        iterations.append(
            SgaIteration(
                m=m,
                theta=tuple(float(v) for v in theta),
                gradient=tuple(float(g) for g in gradient),
                alpha_m=step,
                projected=projected,
            )
        )
        theta = updated
        spec = spec.with_theta(
            spec.theta.replace(**{n: float(v) for n, v in zip(names, theta)})
        )
        logger.debug("sga_iteration", m=m, theta=theta.tolist())
    logger.info("sga_run_completed", theta=theta.tolist())
    return SgaResult(
        names=names,
        iterations=iterations,
        theta_final=tuple(float(v) for v in theta),
        cost_steps=filt.cost_steps,
        kernel_evaluations=filt.kernel_evaluations,
    )
