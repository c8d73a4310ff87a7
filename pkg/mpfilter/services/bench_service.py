"""Benchmark harness: reference values, MSE-versus-cost curves and level decay
studies, with log-log rate fits. Costs are Euler sub-step counts."""

import math
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from mpfilter.config import settings
from mpfilter.exceptions.filter_exceptions import (
    ConfigurationError,
    UnderResolvedReferenceError,
)
from mpfilter.logging_config import get_logger
from mpfilter.rng import Seed, as_factory
from mpfilter.schemas.bench import (
    DecayExperiment,
    DecayRow,
    MseExperiment,
    MsePoint,
    RateFit,
    ReferenceValue,
)
from mpfilter.schemas.dataset import MarkedDataset
from mpfilter.schemas.estimator import Randomization
from mpfilter.schemas.model import ModelSpec
from mpfilter.services.filter_service import PhiLike, run_cpf, run_pf
from mpfilter.services.mlmc_service import (
    build_randomization,
    mlpf_allocate,
    run_mlpf,
    upf_estimate,
)
from mpfilter.services.replicate_service import run_replicates

logger = get_logger()

ESTIMATORS = ("pf", "mlpf", "upf")
DECAY_KINDS = ("coupling_variance", "weak_bias")


def fit_rate(log_x: Sequence[float], log_y: Sequence[float]) -> RateFit:
    x = np.asarray(log_x, dtype=float)
    y = np.asarray(log_y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ConfigurationError("A rate fit needs at least 3 matching points.")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ConfigurationError("Rate fit points must be finite.")
    line = stats.linregress(x, y)
    resid = y - (line.intercept + line.slope * x)
    return RateFit(
        points=list(zip(x.tolist(), y.tolist())),
        slope=float(line.slope),
        intercept=float(line.intercept),
        residual=float(np.sqrt(np.mean(resid * resid))),
    )


def _mean_and_error(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def reference_value(
    spec: ModelSpec,
    dataset: MarkedDataset,
    T: int,
    phi: PhiLike = "identity",
    level: Optional[int] = None,
    particles: Optional[int] = None,
    repeats: Optional[int] = None,
    seed: Optional[Seed] = None,
    tolerance: Optional[float] = None,
    quadrature: Optional[str] = None,
    workers: Optional[int] = None,
) -> ReferenceValue:
    """High-level, high-N filter estimate of π_T(φ) averaged over seeds."""
    if level is None:
        if dataset.meta.data_level is None:
            raise ConfigurationError(
                "The dataset records no data level; pass the reference level."
            )
        level = max(0, dataset.meta.data_level - 1)
    particles = settings.reference_particles if particles is None else particles
    repeats = settings.reference_repeats if repeats is None else repeats
    if repeats < 2:
        raise ConfigurationError(f"A reference needs >= 2 repeats, got {repeats}.")
    root = as_factory(settings.default_seed if seed is None else seed).child(
        "reference"
    )

    def one(r: int) -> float:
        out = run_pf(
            spec, level, particles, dataset, T, [phi], root.child(r), quadrature
        )
        return out.estimate_at(T)

    mean, error = _mean_and_error(run_replicates(one, repeats, workers))
    logger.info(
        "reference_resolved",
        level=level,
        particles=particles,
        repeats=repeats,
        mean=mean,
        standard_error=error,
    )
    if tolerance is not None and error > tolerance / 3.0:
        raise UnderResolvedReferenceError(
            f"Reference standard error {error:.3g} exceeds tolerance/3 "
            f"({tolerance / 3.0:.3g}); raise particles or repeats."
        )
    return ReferenceValue(
        mean=mean,
        standard_error=error,
        level=level,
        particles=particles,
        repeats=repeats,
    )


def _as_number(reference: Union[ReferenceValue, float]) -> float:
    return reference.mean if isinstance(reference, ReferenceValue) else float(reference)


def pf_allocation(epsilon: float, l0: int = 0) -> Tuple[int, int]:
    """Single-level (level, N) for target accuracy ε: Δ_L <= ε and N ∝ ε^{-2}."""
    if not 0 < epsilon < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}.")
    level = max(l0, math.ceil(math.log2(1.0 / epsilon)))
    N = max(1, math.ceil(settings.pf_constant * 2.0 ** (-2.0 * math.log2(epsilon))))
    return level, N


def mse_cost_experiment(
    estimator: str,
    grid: Sequence[float],
    reps: int,
    spec: ModelSpec,
    dataset: MarkedDataset,
    T: int,
    reference: Union[ReferenceValue, float],
    phi: PhiLike = "identity",
    seed: Optional[Seed] = None,
    l0: int = 0,
    rand: Optional[Randomization] = None,
    quadrature: Optional[str] = None,
    workers: Optional[int] = None,
) -> MseExperiment:
    """MSE against the reference and mean cost per grid point.

    The grid holds ε for `pf` and `mlpf` and the replicate count M for `upf`.
    """
    if estimator not in ESTIMATORS:
        raise ConfigurationError(
            f"Unknown estimator {estimator!r}; choose from {ESTIMATORS}."
        )
    if reps < 1 or not grid:
        raise ConfigurationError("Need a nonempty grid and reps >= 1.")
    truth = _as_number(reference)
    root = as_factory(settings.default_seed if seed is None else seed).child(
        "mse", estimator
    )
    if estimator == "upf" and rand is None:
        rand = build_randomization(l0)

    def runner(g: int, target: float) -> Callable[[int], Tuple[float, int]]:
        def one(r: int) -> Tuple[float, int]:
            streams = root.child(g, r)
            if estimator == "pf":
                level, N = pf_allocation(target, l0)
                out = run_pf(spec, level, N, dataset, T, [phi], streams, quadrature)
                return out.estimate_at(T), out.cost_steps
            if estimator == "mlpf":
                alloc = mlpf_allocate(target, l0)
                ml = run_mlpf(spec, dataset, T, alloc, [phi], streams, quadrature)
                return ml.estimate_at(T), ml.cost_steps
            result = upf_estimate(
                spec, dataset, T, rand, phi, int(target), streams, quadrature, 1
            )
            return result.mean, result.cost_steps

        return one

    points = []
    for g, target in enumerate(grid):
        results = run_replicates(runner(g, target), reps, workers)
        errors = np.array([est - truth for est, _ in results])
        point = MsePoint(
            target=float(target),
            mse=float(np.mean(errors * errors)),
            mean_cost=float(np.mean([cost for _, cost in results])),
            reps=reps,
        )
        logger.info("mse_point", estimator=estimator, **point.model_dump())
        points.append(point)

    fit = None
    if len(points) >= 3:
        if estimator == "upf":
            xs = [-0.5 * math.log(pt.mse) if pt.mse > 0 else math.inf for pt in points]
        else:
            xs = [-math.log(pt.target) for pt in points]
        ys = [math.log(pt.mean_cost) for pt in points]
        if all(math.isfinite(v) for v in xs):
            fit = fit_rate(xs, ys)
    return MseExperiment(estimator=estimator, reference=truth, points=points, fit=fit)


def decay_experiment(
    kind: str,
    levels: Sequence[int],
    spec: ModelSpec,
    dataset: MarkedDataset,
    T: int,
    N: int,
    reps: int,
    phi: PhiLike = "identity",
    seed: Optional[Seed] = None,
    reference: Optional[Union[ReferenceValue, float]] = None,
    quadrature: Optional[str] = None,
    workers: Optional[int] = None,
) -> DecayExperiment:
    """Per-level coupled variance or weak bias, with a log2 rate fit over levels."""
    if kind not in DECAY_KINDS:
        raise ConfigurationError(
            f"Unknown decay kind {kind!r}; choose from {DECAY_KINDS}."
        )
    if len(levels) < 4:
        raise ConfigurationError(
            f"A decay study needs >= 4 levels, got {len(levels)}."
        )
    if reps < 2:
        raise ConfigurationError(f"A decay study needs reps >= 2, got {reps}.")
    root = as_factory(settings.default_seed if seed is None else seed).child(
        "decay", kind
    )
    rows = []
    if kind == "coupling_variance":
        if min(levels) < 1:
            raise ConfigurationError("Coupled variance needs levels >= 1.")
        for level in levels:

            def one(r: int, level: int = level) -> float:
                out = run_cpf(
                    spec, level, N, dataset, T, [phi], root.child(level, r), quadrature
                )
                return out.estimate_at(T)

            values = np.array(run_replicates(one, reps, workers))
            var = float(np.var(values, ddof=1))
            rows.append(
                DecayRow(
                    level=level,
                    value=var,
                    stderr=var * math.sqrt(2.0 / (reps - 1)),
                    flagged=var <= 0.0,
                )
            )
    else:
        if reference is None:
            raise ConfigurationError("The weak-bias study needs a reference value.")
        truth = _as_number(reference)
        ref_error = (
            reference.standard_error if isinstance(reference, ReferenceValue) else 0.0
        )
        for level in levels:

            def one(r: int, level: int = level) -> float:
                out = run_pf(
                    spec, level, N, dataset, T, [phi], root.child(level, r), quadrature
                )
                return out.estimate_at(T)

            mean, error = _mean_and_error(run_replicates(one, reps, workers))
            bias = abs(mean - truth)
            mc_error = math.sqrt(error * error + ref_error * ref_error)
            rows.append(
                DecayRow(
                    level=level,
                    value=bias,
                    stderr=mc_error,
                    flagged=bias <= 0.0 or mc_error >= bias / 3.0,
                )
            )

    for row in rows:
        logger.info("decay_row", kind=kind, **row.model_dump())
    kept = [row for row in rows if not row.flagged]
    fit = None
    if len(kept) >= 3:
        fit = fit_rate([r.level for r in kept], [math.log2(r.value) for r in kept])
    else:
        logger.warning("decay_fit_skipped", kind=kind, usable_levels=len(kept))
    return DecayExperiment(kind=kind, rows=rows, fit=fit)


class ExperimentService:
    """Binds a model, a fixed dataset and a horizon for repeated benchmark runs."""

    def __init__(
        self,
        spec: ModelSpec,
        dataset: MarkedDataset,
        T: int,
        phi: PhiLike = "identity",
        seed: Optional[Seed] = None,
        quadrature: Optional[str] = None,
        workers: Optional[int] = None,
    ) -> None:
        self._spec = spec
        self._dataset = dataset
        self._T = T
        self._phi = phi
        self._seed = settings.default_seed if seed is None else seed
        self._quadrature = quadrature
        self._workers = workers
        self._references: Dict[Optional[float], ReferenceValue] = {}

    def reference(self, tolerance: Optional[float] = None) -> ReferenceValue:
        if tolerance not in self._references:
            self._references[tolerance] = reference_value(
                self._spec,
                self._dataset,
                self._T,
                self._phi,
                seed=as_factory(self._seed).child("bench"),
                tolerance=tolerance,
                quadrature=self._quadrature,
                workers=self._workers,
            )
        return self._references[tolerance]

    def mse_cost(
        self,
        estimator: str,
        grid: Sequence[float],
        reps: int,
        l0: int = 0,
        rand: Optional[Randomization] = None,
    ) -> MseExperiment:
        tolerance = None if estimator == "upf" else min(grid)
        return mse_cost_experiment(
            estimator,
            grid,
            reps,
            self._spec,
            self._dataset,
            self._T,
            self.reference(tolerance),
            self._phi,
            self._seed,
            l0,
            rand,
            self._quadrature,
            self._workers,
        )

    def decay(
        self, kind: str, levels: Sequence[int], N: int, reps: int
    ) -> DecayExperiment:
        reference = self.reference() if kind == "weak_bias" else None
        return decay_experiment(
            kind,
            levels,
            self._spec,
            self._dataset,
            self._T,
            N,
            reps,
            self._phi,
            self._seed,
            reference,
            self._quadrature,
            self._workers,
        )
