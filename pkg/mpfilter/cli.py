"""Command-line front end: `python -m mpfilter <subcommand> [flags]`.

Exit status is 0 on success, 2 for usage, configuration and data errors and 3
when a Monte Carlo run aborts on a numeric failure. CSV goes to `--out` or
stdout; logs go to stderr.
"""

import argparse
import math
import sys
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from mpfilter import __version__
from mpfilter.config import settings
from mpfilter.exceptions.filter_exceptions import (
    ConfigurationError,
    ContractError,
    DatasetParseError,
    DatasetValidationError,
    DomainError,
    NumericAbortError,
    RangeError,
)
from mpfilter.logging_config import bind_run_context, configure_logging, get_logger
from mpfilter.models.catalog import CATALOG, build_spec
from mpfilter.repositories.dataset_repository import (
    read_dataset,
    write_dataset,
    write_truth,
)
from mpfilter.repositories.output_repository import Cell, CsvOutputRepository
from mpfilter.schemas.dataset import MarkedDataset
from mpfilter.schemas.model import ModelId, ModelSpec
from mpfilter.schemas.run_config import (
    BENCH_KINDS,
    COMMANDS,
    RunConfig,
    load_config_file,
)
from mpfilter.schemas.sga import SgaConfig
from mpfilter.services.bench_service import DECAY_KINDS, ExperimentService
from mpfilter.services.filter_service import run_cpf, run_pf
from mpfilter.services.mlmc_service import (
    build_randomization,
    mlpf_allocate,
    run_mlpf,
    upf_estimate,
)
from mpfilter.services.observation_service import generate_dataset
from mpfilter.services.score_service import run_score_filter, sga_run

logger = get_logger()

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

_INVALID_ERRORS = (
    ConfigurationError,
    DatasetParseError,
    DatasetValidationError,
    DomainError,
    RangeError,
    ContractError,
)

Table = Tuple[List[str], List[Sequence[Cell]], List[str]]

_HELP = {
    "generate": "simulate a diffusion path and its marked events",
    "pf": "single-level particle filter",
    "cpf": "coupled particle filter (level l minus level l-1)",
    "mlpf": "multilevel particle filter for a target accuracy",
    "upf": "randomized unbiased particle filter",
    "score": "online score estimate of the log-likelihood",
    "sga": "stochastic gradient ascent on the static parameters",
    "bench": "MSE-versus-cost and level decay experiments",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpfilter",
        description="Particle filters for diffusions observed via marked events.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        # SUPPRESS keeps omitted flags out of the namespace so the config file wins
        _add_run_flags(
            sub.add_parser(
                name, help=_HELP[name], argument_default=argparse.SUPPRESS
            )
        )
    return parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override its values")
    p.add_argument("--model", help="OU, Langevin, NLDT, GBM or TestConst")
    p.add_argument("--theta-b", dest="theta_b", type=float)
    p.add_argument("--theta-lambda", dest="theta_lambda", type=float)
    p.add_argument("--theta-sigma", dest="theta_sigma", type=float)
    p.add_argument("--x-star", dest="x_star", type=float)
    p.add_argument("--T", dest="T", type=int, help="number of unit times")
    p.add_argument("--level", type=int)
    p.add_argument("--data-level", dest="data_level", type=int)
    p.add_argument("--l0", type=int)
    p.add_argument("--particles", type=int)
    p.add_argument("--eps", help="comma-separated target accuracies")
    p.add_argument("--M", dest="M", type=int, help="unbiased replicates")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--truth-out", dest="truth_out")
    p.add_argument("--quadrature", choices=("left", "right"))
    p.add_argument("--phi", choices=("identity", "square"))
    p.add_argument("--levels", help="comma-separated levels for decay studies")
    p.add_argument("--kind", choices=BENCH_KINDS)
    p.add_argument("--iterations", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--alpha0", help="one step size, or one per coordinate")
    p.add_argument("--beta", type=float)
    p.add_argument("--l-trunc", dest="l_trunc", type=int)
    p.add_argument("--p-trunc", dest="p_trunc", type=int)
    p.add_argument("--n0", type=int)
    p.add_argument("--workers", type=int)


def resolve_config(namespace: argparse.Namespace) -> RunConfig:
    flags = dict(vars(namespace))
    command = flags.pop("command")
    config_path = flags.pop("config", None)
    values = load_config_file(config_path) if config_path else {}
    values.update(flags)
    return RunConfig.model_validate({"command": command, **values})


# --- model and data plumbing -------------------------------------------------


def _intensity_band() -> Optional[Tuple[float, float]]:
    if not settings.clip_intensity:
        return None
    return settings.intensity_floor, settings.intensity_cap


def _theta_flags(cfg: RunConfig) -> Dict[str, Optional[float]]:
    return {
        "theta_b": cfg.theta_b,
        "theta_lambda": cfg.theta_lambda,
        "theta_Sigma": cfg.theta_sigma,
    }


def _model_id(cfg: RunConfig, dataset: Optional[MarkedDataset]) -> ModelId:
    if cfg.model is not None:
        return cfg.model
    if dataset is not None and dataset.meta.model_id is not None:
        return dataset.meta.model_id
    return ModelId.OU


def _spec(
    cfg: RunConfig, dataset: Optional[MarkedDataset] = None, which: str = "true"
) -> ModelSpec:
    """Catalogue defaults, then the dataset's recorded θ, then flags."""
    model_id = _model_id(cfg, dataset)
    overrides: Dict[str, Optional[float]] = {}
    fixed: Dict[str, float] = {}
    x_star = cfg.x_star
    meta = dataset.meta if dataset is not None else None
    if meta is not None and meta.model_id in (None, model_id):
        if meta.theta_true is not None:
            fixed.update(meta.theta_true.fixed_params)
            if which == "true":
                overrides.update(
                    theta_b=meta.theta_true.theta_b,
                    theta_lambda=meta.theta_true.theta_lambda,
                    theta_Sigma=meta.theta_true.theta_Sigma,
                )
        if x_star is None:
            x_star = meta.x_star
    overrides.update({k: v for k, v in _theta_flags(cfg).items() if v is not None})
    return build_spec(model_id, which, x_star, overrides, fixed, _intensity_band())


def _dataset(cfg: RunConfig) -> MarkedDataset:
    if cfg.data is None:
        raise ConfigurationError(f"`{cfg.command}` needs --data.")
    return read_dataset(cfg.data)


def _horizon(cfg: RunConfig, dataset: MarkedDataset) -> int:
    T = dataset.horizon_T if cfg.T is None else cfg.T
    if T > dataset.horizon_T:
        raise ConfigurationError(
            f"--T {T} exceeds the data horizon T={dataset.horizon_T}."
        )
    return T


def _level(cfg: RunConfig, dataset: MarkedDataset) -> int:
    if cfg.level is not None:
        return cfg.level
    if dataset.meta.data_level is None:
        raise ConfigurationError(
            "The dataset records no data_level; pass --level explicitly."
        )
    return max(0, dataset.meta.data_level - settings.data_level_offset)


def _single_eps(cfg: RunConfig) -> float:
    if not cfg.eps or len(cfg.eps) != 1:
        raise ConfigurationError(f"`{cfg.command}` needs exactly one --eps value.")
    return cfg.eps[0]


# --- subcommands -------------------------------------------------------------


def _generate(cfg: RunConfig) -> Optional[Table]:
    if cfg.out is None:
        raise ConfigurationError("`generate` needs --out for the dataset file.")
    spec = _spec(cfg)
    T = settings.bench_horizon if cfg.T is None else cfg.T
    data_level = settings.data_level if cfg.data_level is None else cfg.data_level
    dataset, truth = generate_dataset(spec, T, data_level, cfg.seed)
    write_dataset(dataset, cfg.out)
    if cfg.truth_out is not None:
        write_truth(truth, cfg.truth_out)
    return None


def _filter_table(times, estimates, cumulative) -> List[Sequence[Cell]]:
    return [(int(t), float(e), int(c)) for t, e, c in zip(times, estimates, cumulative)]


def _pf(cfg: RunConfig) -> Table:
    dataset = _dataset(cfg)
    level = _level(cfg, dataset)
    out = run_pf(
        _spec(cfg, dataset),
        level,
        cfg.particles,
        dataset,
        _horizon(cfg, dataset),
        [cfg.phi],
        cfg.seed,
        cfg.quadrature,
    )
    rows = _filter_table(out.times, out.estimates[cfg.phi], out.cumulative_cost)
    return ["t", "estimate", "cost_steps"], rows, [f"resolved level={level}"]


def _cpf(cfg: RunConfig) -> Table:
    dataset = _dataset(cfg)
    level = _level(cfg, dataset)
    out = run_cpf(
        _spec(cfg, dataset),
        level,
        cfg.particles,
        dataset,
        _horizon(cfg, dataset),
        [cfg.phi],
        cfg.seed,
        cfg.quadrature,
    )
    rows = _filter_table(out.times, out.estimates[cfg.phi], out.cumulative_cost)
    return ["t", "estimate", "cost_steps"], rows, [f"resolved level={level}"]


def _mlpf(cfg: RunConfig) -> Table:
    dataset = _dataset(cfg)
    alloc = mlpf_allocate(_single_eps(cfg), cfg.l0)
    out = run_mlpf(
        _spec(cfg, dataset),
        dataset,
        _horizon(cfg, dataset),
        alloc,
        [cfg.phi],
        cfg.seed,
        cfg.quadrature,
    )
    rows = _filter_table(out.times, out.estimates[cfg.phi], out.cumulative_cost)
    extra = [
        f"allocation L={alloc.L} N_levels={','.join(map(str, alloc.N_levels))}"
    ]
    return ["t", "estimate", "cost_steps"], rows, extra


def _upf(cfg: RunConfig) -> Table:
    dataset = _dataset(cfg)
    spec = _spec(cfg, dataset)
    L_trunc, P_trunc, N0 = CATALOG[spec.model_id].upf_truncation
    rand = build_randomization(
        cfg.l0,
        L_trunc if cfg.l_trunc is None else cfg.l_trunc,
        P_trunc if cfg.p_trunc is None else cfg.p_trunc,
        N0 if cfg.n0 is None else cfg.n0,
    )
    result = upf_estimate(
        spec,
        dataset,
        _horizon(cfg, dataset),
        rand,
        cfg.phi,
        cfg.M,
        cfg.seed,
        cfg.quadrature,
        cfg.workers,
    )
    rows: List[Sequence[Cell]] = [
        (r.replicate, r.level, r.p, r.xi, r.weighted_value, r.cost_steps)
        for r in result.replicates
    ]
    rows.append(("summary", None, None, None, result.mean, result.cost_steps))
    extra = [
        f"truncation L_trunc={rand.L_trunc} P_trunc={rand.P_trunc} N0={rand.N0}",
        f"standard_error={result.standard_error!r}",
    ]
    columns = ["replicate", "L", "p", "xi", "weighted_value", "cost_steps"]
    return columns, rows, extra


def _score(cfg: RunConfig) -> Table:
    dataset = _dataset(cfg)
    level = _level(cfg, dataset)
    out = run_score_filter(
        _spec(cfg, dataset),
        level,
        cfg.particles,
        dataset,
        _horizon(cfg, dataset),
        cfg.seed,
        cfg.quadrature,
    )
    rows: List[Sequence[Cell]] = []
    for t, score, cost in zip(out.times, out.scores, out.cumulative_cost):
        for name, value in zip(out.names, score):
            rows.append((int(t), float(value), name, int(cost)))
    extra = [f"resolved level={level}", f"coordinates={','.join(out.names)}"]
    return ["t", "estimate", "coordinate", "cost_steps"], rows, extra


def _sga(cfg: RunConfig) -> Table:
    dataset = _dataset(cfg)
    level = _level(cfg, dataset)
    template = _spec(cfg, dataset, which="init")
    T = _horizon(cfg, dataset)
    defaults = CATALOG[_model_id(cfg, dataset)]
    window = defaults.sga_window if cfg.window is None else cfg.window
    alpha0 = tuple(cfg.alpha0) if cfg.alpha0 else defaults.sga_alpha0
    iterations = cfg.iterations if cfg.iterations is not None else T // window
    if iterations < 1 or iterations * window > T:
        raise ConfigurationError(
            f"{iterations} iterations of window {window} do not fit in T={T}."
        )
    sga_cfg = SgaConfig(
        alpha0=alpha0,
        beta=cfg.beta,
        window_c=window,
        iterations=iterations,
        theta_init=template.theta,
    )
    result = sga_run(
        template, dataset, level, cfg.particles, sga_cfg, cfg.seed, cfg.quadrature
    )
    d = len(result.names)
    columns = (
        ["m"]
        + [f"theta_{i}" for i in range(1, d + 1)]
        + [f"score_{i}" for i in range(1, d + 1)]
        + ["alpha_m"]
    )
    rows: List[Sequence[Cell]] = [
        (it.m, *it.theta, *it.gradient, it.alpha_m) for it in result.iterations
    ]
    rows.append((iterations, *result.theta_final, *([None] * d), None))
    extra = [
        f"resolved level={level}",
        f"coordinates={','.join(result.names)}",
        f"resolved window={window} alpha0={','.join(map(repr, alpha0))}",
        f"cost_steps={result.cost_steps}",
        f"kernel_evaluations={result.kernel_evaluations}",
    ]
    return columns, rows, extra


def _fit_line(fit) -> str:
    if fit is None:
        return "fit=none"
    return (
        f"fit slope={fit.slope!r} intercept={fit.intercept!r} "
        f"residual={fit.residual!r}"
    )


def _bench(cfg: RunConfig) -> Table:
    if cfg.kind is None:
        raise ConfigurationError(f"`bench` needs --kind, one of {BENCH_KINDS}.")
    dataset = _dataset(cfg)
    T = min(settings.bench_horizon, dataset.horizon_T) if cfg.T is None else cfg.T
    if T > dataset.horizon_T:
        raise ConfigurationError(
            f"--T {T} exceeds the data horizon T={dataset.horizon_T}."
        )
    service = ExperimentService(
        _spec(cfg, dataset), dataset, T, cfg.phi, cfg.seed, cfg.quadrature, cfg.workers
    )
    if cfg.kind in DECAY_KINDS:
        if not cfg.levels:
            raise ConfigurationError(f"`bench --kind {cfg.kind}` needs --levels.")
        decay = service.decay(cfg.kind, cfg.levels, cfg.particles, cfg.reps)
        rows: List[Sequence[Cell]] = [
            (r.level, r.value, r.stderr, r.flagged) for r in decay.rows
        ]
        return ["level", "value", "stderr", "flagged"], rows, [_fit_line(decay.fit)]

    if not cfg.eps:
        raise ConfigurationError(f"`bench --kind {cfg.kind}` needs --eps.")
    rand = None
    grid: List[float] = list(cfg.eps)
    if cfg.kind == "upf":
        model_defaults = CATALOG[_model_id(cfg, dataset)].upf_truncation
        rand = build_randomization(
            cfg.l0,
            model_defaults[0] if cfg.l_trunc is None else cfg.l_trunc,
            model_defaults[1] if cfg.p_trunc is None else cfg.p_trunc,
            model_defaults[2] if cfg.n0 is None else cfg.n0,
        )
        # MSE of order ε^2 needs of order ε^{-2} unbiased replicates
        grid = [float(math.ceil(e**-2)) for e in cfg.eps]
    experiment = service.mse_cost(cfg.kind, grid, cfg.reps, cfg.l0, rand)
    rows = [(p.target, p.mse, p.mean_cost, p.reps) for p in experiment.points]
    extra = [f"reference={experiment.reference!r}", _fit_line(experiment.fit)]
    return ["target", "mse", "mean_cost", "reps"], rows, extra


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig], Optional[Table]]] = {
    "generate": _generate,
    "pf": _pf,
    "cpf": _cpf,
    "mlpf": _mlpf,
    "upf": _upf,
    "score": _score,
    "sga": _sga,
    "bench": _bench,
}


def _fail(status: int, message: str) -> int:
    sys.stderr.write(f"mpfilter: error: {message}\n")
    return status


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        namespace = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse has already printed usage (2) or help (0)
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK

    configure_logging()
    try:
        cfg = resolve_config(namespace)
        bind_run_context(command=cfg.command, seed=cfg.seed)
        logger.info("run_started", version=__version__)
        table = COMMAND_HANDLERS[cfg.command](cfg)
        if table is not None:
            columns, rows, extra = table
            repo = CsvOutputRepository(cfg.provenance_lines() + extra)
            repo.write(columns, rows, cfg.out)
    except ValidationError as exc:
        logger.error("invalid_configuration", errors=exc.error_count())
        return _fail(EXIT_INVALID, str(exc))
    except _INVALID_ERRORS as exc:
        logger.error("run_rejected", error_type=type(exc).__name__)
        return _fail(EXIT_INVALID, exc.message)
    except NumericAbortError as exc:
        logger.error("numeric_abort", error_type=type(exc).__name__)
        return _fail(EXIT_NUMERIC, exc.message)
    except OSError as exc:
        logger.error("io_failed", error=str(exc))
        return _fail(EXIT_INVALID, str(exc))
    logger.info("run_completed")
    return EXIT_OK
