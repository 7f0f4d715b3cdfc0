"""Shared option types and error handling for the CLI commands."""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated

import typer
from pydantic import ValidationError
from rich.console import Console

from noma_aoi.config import ExperimentSpec, load_experiment_spec
from noma_aoi.errors import ConfigError, NomaAoIError

console = Console()
err_console = Console(stderr=True)

EXIT_FAILURE = 1
EXIT_CONFIG = 2

ConfigOpt = Annotated[
    Path | None,
    typer.Option("--config", "-c", help="Flat `key = value` config file.", dir_okay=False),
]
SnrOpt = Annotated[float | None, typer.Option("--snr-db", help="Transmit SNR in dB.")]
TruncOpt = Annotated[int | None, typer.Option("--m-trunc", "-m", help="Age truncation bound.")]
OutDirOpt = Annotated[Path | None, typer.Option("--out-dir", "-o", help="Directory for CSV outputs.")]
SetOpt = Annotated[
    list[str] | None,
    typer.Option("--set", help="Override any config key, e.g. --set d2=6 (repeatable)."),
]


def parse_overrides(pairs: list[str] | None) -> dict[str, str]:
    """Turn ``["key=value", ...]`` into a dict; keys are lowercased."""
    out: dict[str, str] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        out[key.strip().lower()] = value.strip()
    return out


def build_spec(config: Path | None, sets: list[str] | None, **flags: object) -> ExperimentSpec:
    """Config file, then ``--set`` pairs, then dedicated flags (highest)."""
    overrides: dict[str, object] = dict(parse_overrides(sets))
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return load_experiment_spec(config, overrides)


def _one_line(err: Exception) -> str:
    if isinstance(err, ValidationError):
        parts = [f"{'.'.join(str(x) for x in e['loc']) or 'config'}: {e['msg']}" for e in err.errors()]
        return "; ".join(parts)
    return " ".join(str(err).split())


def _report(err: Exception, code: int) -> typer.Exit:
    err_console.print(f"error: {type(err).__name__}: {_one_line(err)}", markup=False, highlight=False, soft_wrap=True)
    return typer.Exit(code=code)


@contextmanager
def cli_errors() -> Iterator[None]:
    """Report package errors as ``error: <Class>: <message>`` and exit nonzero."""
    try:
        yield
    except (ConfigError, ValidationError) as err:
        raise _report(err, EXIT_CONFIG) from None
    except NomaAoIError as err:
        raise _report(err, EXIT_FAILURE) from None
