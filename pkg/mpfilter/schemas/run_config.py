"""Per-invocation parameters of the command-line front end.

Values are layered: settings defaults, then a `--config` file of `key=value`
lines, then command-line flags. Everything is validated before any compute.
"""

from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from mpfilter import __version__
from mpfilter.config import settings
from mpfilter.exceptions.filter_exceptions import ConfigurationError
from mpfilter.schemas.model import ModelId

COMMANDS = ("generate", "pf", "cpf", "mlpf", "upf", "score", "sga", "bench")
BENCH_KINDS = ("pf", "mlpf", "upf", "coupling_variance", "weak_bias")

_LIST_FIELDS = ("eps", "levels", "alpha0")


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal["generate", "pf", "cpf", "mlpf", "upf", "score", "sga", "bench"]
    model: Optional[ModelId] = None
    theta_b: Optional[float] = None
    theta_lambda: Optional[float] = None
    theta_sigma: Optional[float] = None
    x_star: Optional[float] = None
    T: Optional[int] = Field(None, ge=1)
    level: Optional[int] = Field(None, ge=0)
    data_level: Optional[int] = Field(None, ge=0)
    l0: int = Field(0, ge=0)
    particles: int = Field(1000, ge=1)
    eps: Optional[List[float]] = None
    M: int = Field(1, ge=1)
    reps: int = Field(10, ge=1)
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0)
    data: Optional[Path] = None
    out: Optional[Path] = None
    truth_out: Optional[Path] = None
    quadrature: Literal["left", "right"] = Field(
        default_factory=lambda: settings.quadrature
    )
    phi: Literal["identity", "square"] = "identity"
    levels: Optional[List[int]] = None
    kind: Optional[
        Literal["pf", "mlpf", "upf", "coupling_variance", "weak_bias"]
    ] = None
    iterations: Optional[int] = Field(None, ge=1)
    window: Optional[int] = Field(None, ge=1)
    alpha0: Optional[List[float]] = None
    beta: float = Field(0.6, gt=0.5, le=1.0)
    l_trunc: Optional[int] = Field(None, ge=0)
    p_trunc: Optional[int] = Field(None, ge=0)
    n0: Optional[int] = Field(None, ge=1)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)

    @field_validator(*_LIST_FIELDS, mode="before")
    @classmethod
    def split_commas(cls, v):
        if isinstance(v, str):
            return [part.strip() for part in v.split(",") if part.strip()]
        return v

    @field_validator("model", mode="before")
    @classmethod
    def model_by_name(cls, v):
        if isinstance(v, str):
            for model_id in ModelId:
                if model_id.value.lower() == v.strip().lower():
                    return model_id
        return v

    @field_validator("eps")
    @classmethod
    def eps_in_unit_interval(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and (not v or any(not 0 < e < 1 for e in v)):
            raise ValueError("eps entries must lie in (0, 1)")
        return v

    def provenance_lines(self) -> List[str]:
        lines = [f"mpfilter version={__version__}", f"seed={self.seed}"]
        for name, value in self.model_dump().items():
            if name == "seed":
                continue
            lines.append(f"{name}={_render(value)}")
        return lines


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, ModelId):
        return value.value
    if isinstance(value, (list, tuple)):
        return ",".join(_render(v) for v in value)
    return str(value)


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse `key=value` lines; `#` starts a comment and dashes in keys become `_`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"Cannot read config file {path}: {exc}")
    known = set(RunConfig.model_fields) - {"command"}
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip().lstrip("-").replace("-", "_")
        if key not in known:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values
