from pathlib import Path
from typing import Dict, List, Union

from mpfilter.exceptions.filter_exceptions import DatasetParseError
from mpfilter.logging_config import get_logger
from mpfilter.schemas.dataset import DatasetMeta, MarkedDataset
from mpfilter.schemas.model import ModelId, ThetaVector

logger = get_logger()

PathLike = Union[str, Path]

_THETA_KEYS = ("theta_b", "theta_lambda", "theta_Sigma")
_FIXED_PREFIX = "fixed."


def fmt(value: float) -> str:
    """17 significant digits: enough for a lossless float round trip."""
    return format(float(value), ".17g")


class DatasetRepository:
    """Reads and writes the `# key=value` header + `s,y` rows dataset format."""

    def write(self, dataset: MarkedDataset, path: PathLike) -> None:
        lines = [f"# {key}={value}" for key, value in self._header(dataset).items()]
        lines += [f"{fmt(s)},{fmt(y)}" for s, y in zip(dataset.times, dataset.marks)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info("dataset_written", path=str(path), events=len(dataset))

    def read(self, path: PathLike) -> MarkedDataset:
        header: Dict[str, str] = {}
        times: List[float] = []
        marks: List[float] = []
        text = Path(path).read_text(encoding="utf-8")
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line == "s,y":
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    continue
                key, value = body.split("=", 1)
                header[key.strip()] = value.strip()
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DatasetParseError(
                    f"expected 's,y', found {len(parts)} fields", line=lineno
                )
            try:
                times.append(float(parts[0]))
                marks.append(float(parts[1]))
            except ValueError as exc:
                raise DatasetParseError(f"non-numeric value ({exc})", line=lineno)
        if "T" not in header:
            raise DatasetParseError("missing '# T=' header")
        try:
            horizon = int(header["T"])
            meta = self._meta(header)
        except ValueError as exc:
            raise DatasetParseError(f"malformed header value ({exc})")
        dataset = MarkedDataset(horizon_T=horizon, times=times, marks=marks, meta=meta)
        logger.info("dataset_read", path=str(path), events=len(dataset), T=horizon)
        return dataset

    def _header(self, dataset: MarkedDataset) -> Dict[str, str]:
        meta = dataset.meta
        header: Dict[str, str] = {}
        if meta.model_id is not None:
            header["model_id"] = meta.model_id.value
        if meta.theta_true is not None:
            for key in _THETA_KEYS:
                value = getattr(meta.theta_true, key)
                if value is not None:
                    header[key] = fmt(value)
            for key, value in sorted(meta.theta_true.fixed_params.items()):
                header[_FIXED_PREFIX + key] = fmt(value)
        if meta.x_star is not None:
            header["x_star"] = fmt(meta.x_star)
        header["T"] = str(dataset.horizon_T)
        if meta.data_level is not None:
            header["data_level"] = str(meta.data_level)
        if meta.seed is not None:
            header["seed"] = str(meta.seed)
        return header

    def _meta(self, header: Dict[str, str]) -> DatasetMeta:
        theta = None
        if "theta_lambda" in header and "theta_Sigma" in header:
            theta = ThetaVector(
                theta_b=float(header["theta_b"]) if "theta_b" in header else None,
                theta_lambda=float(header["theta_lambda"]),
                theta_Sigma=float(header["theta_Sigma"]),
                fixed_params={
                    k[len(_FIXED_PREFIX) :]: float(v)
                    for k, v in header.items()
                    if k.startswith(_FIXED_PREFIX)
                },
            )
        return DatasetMeta(
            model_id=ModelId(header["model_id"]) if "model_id" in header else None,
            theta_true=theta,
            x_star=float(header["x_star"]) if "x_star" in header else None,
            data_level=int(header["data_level"]) if "data_level" in header else None,
            seed=int(header["seed"]) if "seed" in header else None,
        )


def write_dataset(dataset: MarkedDataset, path: PathLike) -> None:
    DatasetRepository().write(dataset, path)


def read_dataset(path: PathLike) -> MarkedDataset:
    return DatasetRepository().read(path)


def write_truth(trajectory, path: PathLike) -> None:
    """Dump a grid trajectory as `t,x` rows; filters never read it."""
    n = 1 << trajectory.level
    lines = [f"# level={trajectory.level}", "t,x"]
    for k, x in enumerate(trajectory.states):
        lines.append(f"{fmt(trajectory.start_time + k / n)},{fmt(x)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("truth_written", path=str(path), points=len(trajectory.states))
