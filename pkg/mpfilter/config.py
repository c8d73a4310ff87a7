from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", env_prefix="MPFILTER_"
    )

    environment: str = "development"
    log_level: str = "INFO"

    default_seed: int = 1
    quadrature: Literal["left", "right"] = "right"

    # Intensity band; only applied when clip_intensity is set
    clip_intensity: bool = False
    intensity_floor: float = 1e-3
    intensity_cap: float = 1e3

    # Synthetic data resolution and the default filter level below it
    data_level: int = 10
    data_level_offset: int = 3

    # Reference filter used as ground truth for MSE / bias studies
    reference_particles: int = 1_000_000
    reference_repeats: int = 20

    mlpf_constant: float = 1.0
    pf_constant: float = 1.0

    upf_l_trunc: int = 10
    upf_p_trunc: int = 11
    upf_n0: int = 5

    projection_floor: float = 1e-4
    bench_horizon: int = 10
    workers: int = 1  # >1 runs replicates on a thread pool

    # Particles propagated per Euler batch; bounds peak memory of large filters
    chunk_particles: int = 1 << 16
    # Full unit paths of the terminal cloud are kept only below this many states
    max_stored_states: int = 1 << 24


settings = Settings()
