"""System and experiment configuration.

Two public models:

    SystemConfig:
        Frozen ``pydantic`` model with every physical and problem parameter
        (linear SNR, distances, path loss, target rate, power levels,
        weights, truncation bound). All core math takes one of these.

    ExperimentSpec:
        ``pydantic-settings`` model driving the CLI: a base configuration in
        dB plus SNR grid, policy kinds, solver/simulation knobs and output
        paths. Built by :func:`load_experiment_spec` from a flat
        ``key = value`` file, ``NOMA_AOI_*`` environment variables and CLI
        overrides.

dB <-> linear conversion happens here and nowhere in the math modules.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from enum import StrEnum
from pathlib import Path
from typing import Annotated, Any, Self

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, NoDecode, SettingsConfigDict

from noma_aoi.errors import ConfigError

_WEIGHT_SUM_ATOL = 1e-9


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio from dB to linear scale."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    """Convert a positive linear power ratio to dB."""
    if value <= 0:
        raise ValueError(f"linear value must be positive, got {value!r}")
    return 10.0 * math.log10(value)


class PolicyKind(StrEnum):
    """Tag carried by every policy table."""

    OPTIMAL_ADAPTIVE = "optimal-adaptive"
    SUBOPTIMAL = "suboptimal"
    OMA_ONLY = "oma-only-optimal"
    NOMA_ONLY = "noma-only-optimal"
    CUSTOM = "custom"


EXPERIMENT_KINDS: tuple[PolicyKind, ...] = (
    PolicyKind.OPTIMAL_ADAPTIVE,
    PolicyKind.SUBOPTIMAL,
    PolicyKind.OMA_ONLY,
    PolicyKind.NOMA_ONLY,
)


class SystemConfig(BaseModel):
    """Physical and problem parameters of the two-client downlink.

    Args:
        rho: Linear transmit SNR ``P / sigma^2``.
        d1: Normalized distance of the near client.
        d2: Normalized distance of the far client. Must exceed ``d1``.
        tau: Path-loss exponent.
        rate: Target rate ``R`` in bits/s/Hz, shared by both clients.
        n_levels: Power quantization count ``N``; the far client gets
            ``a / N`` of the power under action ``a``.
        w1: AoI weight of client 1.
        w2: AoI weight of client 2. ``w1 + w2`` must equal 1.
        m_trunc: Truncation bound applied to both ages.

    Example:
        >>> cfg = SystemConfig.from_db(snr_db=18.0, d1=2.0, d2=4.0)
        >>> round(cfg.rho, 3)
        63.096
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    rho: float = Field(gt=0, allow_inf_nan=False)
    d1: float = Field(default=2.0, gt=0, allow_inf_nan=False)
    d2: float = Field(default=4.0, gt=0, allow_inf_nan=False)
    tau: float = Field(default=2.0, gt=0, allow_inf_nan=False)
    rate: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    n_levels: int = Field(default=10, ge=2)
    w1: float = Field(default=0.5, gt=0, allow_inf_nan=False)
    w2: float = Field(default=0.5, gt=0, allow_inf_nan=False)
    m_trunc: int = Field(default=100, ge=2)

    @model_validator(mode="after")
    def _check_ordering_and_weights(self) -> Self:
        if not self.d1 < self.d2:
            raise ValueError(f"client 1 must be the near client: need d1 < d2, got d1={self.d1}, d2={self.d2}")
        if abs(self.w1 + self.w2 - 1.0) > _WEIGHT_SUM_ATOL:
            raise ValueError(f"weights must sum to 1, got w1={self.w1}, w2={self.w2}")
        return self

    @classmethod
    def from_db(cls, *, snr_db: float, **kwargs: Any) -> SystemConfig:
        """Build a config from a transmit SNR given in dB."""
        return cls(rho=db_to_linear(snr_db), **kwargs)

    @property
    def snr_db(self) -> float:
        return linear_to_db(self.rho)

    @property
    def weights(self) -> tuple[float, float]:
        return (self.w1, self.w2)

    def replace(self, **changes: Any) -> SystemConfig:
        """Return a validated copy with some fields changed."""
        return type(self).model_validate({**self.model_dump(), **changes})


def _parse_grid(text: str) -> list[float]:
    """Parse ``"8, 9.5, 12"`` or an inclusive ``"start:stop:step"`` range."""
    text = text.strip()
    if ":" in text:
        parts = [p.strip() for p in text.split(":")]
        if len(parts) != 3:
            raise ValueError(f"grid range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError(f"grid step must be positive, got {step!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(max(count, 0))]
    return [float(p) for p in text.split(",") if p.strip()]


class ExperimentSpec(BaseSettings):
    """Everything an experiment run needs, with reference-configuration defaults.

    Precedence when built via :func:`load_experiment_spec`: CLI flags, then
    the config file, then ``NOMA_AOI_*`` environment variables, then the
    defaults below.
    """

    model_config = SettingsConfigDict(env_prefix="NOMA_AOI_", extra="forbid", frozen=True)

    # ── base system (dB at this boundary) ──
    snr_db: float = 18.0
    d1: float = 2.0
    d2: float = 4.0
    tau: float = 2.0
    rate: float = 1.0
    n_levels: int = 10
    w1: float = 0.5
    w2: float = 0.5
    m_trunc: int = 100

    # ── experiment ──
    snr_grid_db: Annotated[list[float], NoDecode] = Field(default_factory=lambda: [float(x) for x in range(8, 31)])
    policy_kinds: Annotated[list[PolicyKind], NoDecode] = Field(default_factory=lambda: list(EXPERIMENT_KINDS))

    # ── solver ──
    eliminate: bool = True
    tol: float = Field(default=1e-9, gt=0)
    max_iter: int = Field(default=1_000_000, ge=1)
    step_size: float = Field(default=1.0, gt=0, le=1)
    max_kernel_entries: int = Field(default=5_000_000, ge=1)
    subadditivity_m: int = Field(default=8, ge=2, le=10)

    # ── simulation ──
    sim_horizon: int = Field(default=100_000, ge=0)
    sim_seed: int = Field(default=0, ge=0)

    # ── execution / outputs ──
    workers: int = Field(default=1, ge=1)
    out_dir: Path = Path("artifacts/outputs")
    sweep_file: str = "sweep.csv"

    @field_validator("snr_grid_db", mode="before")
    @classmethod
    def _split_grid(cls, value: object) -> object:
        return _parse_grid(value) if isinstance(value, str) else value

    @field_validator("policy_kinds", mode="before")
    @classmethod
    def _split_kinds(cls, value: object) -> object:
        if isinstance(value, str):
            return [p.strip() for p in value.split(",") if p.strip()]
        return value

    @field_validator("snr_grid_db")
    @classmethod
    def _grid_increasing(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("snr_grid_db must not be empty")
        if any(b <= a for a, b in zip(value, value[1:], strict=False)):
            raise ValueError(f"snr_grid_db must be strictly increasing, got {value}")
        return value

    @field_validator("policy_kinds")
    @classmethod
    def _known_kinds(cls, value: list[PolicyKind]) -> list[PolicyKind]:
        if not value:
            raise ValueError("at least one policy kind must be selected")
        if PolicyKind.CUSTOM in value:
            raise ValueError("'custom' policies cannot be produced by an experiment run")
        # canonical order, no duplicates
        return [k for k in EXPERIMENT_KINDS if k in value]

    def system_config(self, snr_db: float | None = None) -> SystemConfig:
        """Materialize the base configuration, optionally at another SNR."""
        return SystemConfig.from_db(
            snr_db=self.snr_db if snr_db is None else snr_db,
            d1=self.d1,
            d2=self.d2,
            tau=self.tau,
            rate=self.rate,
            n_levels=self.n_levels,
            w1=self.w1,
            w2=self.w2,
            m_trunc=self.m_trunc,
        )

    def echo(self) -> dict[str, str]:
        """Flat string view of every field, for metadata sidecars."""
        out: dict[str, str] = {}
        for key, value in self.model_dump(mode="json").items():
            if isinstance(value, list):
                out[key] = ",".join(str(v) for v in value)
            else:
                out[key] = str(value)
        return out


def load_experiment_spec(
    config_path: Path | None = None,
    overrides: Mapping[str, object] | None = None,
) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from a config file plus overrides.

    Args:
        config_path: Optional flat ``key = value`` file (``#`` comments).
        overrides: Values taking precedence over the file; ``None`` values
            are ignored so unset CLI flags can be passed straight through.

    Raises:
        ConfigError: If the file is missing or has a key without a value.
        pydantic.ValidationError: If any value is invalid or a key is unknown.
    """
    values: dict[str, object] = {}
    if config_path is not None:
        if not config_path.is_file():
            raise ConfigError(f"config file not found: {config_path}")
        for key, value in dotenv_values(config_path).items():
            if value is None:
                raise ConfigError(f"config key {key!r} has no value")
            values[key.strip().lower()] = value
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec(**values)
