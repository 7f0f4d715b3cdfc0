"""Batch commands: ``map`` (policy-map CSVs) and ``sweep`` (SNR sweep table)."""

from __future__ import annotations

from typing import Annotated

import pandas as pd
import typer

from noma_aoi.cli._common import ConfigOpt, OutDirOpt, SetOpt, SnrOpt, TruncOpt, build_spec, cli_errors, console
from noma_aoi.experiments import run_policy_map, run_sweep, sweep_is_monotone

KindsOpt = Annotated[
    str | None, typer.Option("--kinds", help="Comma list of policy kinds, e.g. optimal-adaptive,suboptimal.")
]


def policy_map(
    config: ConfigOpt = None,
    snr_db: SnrOpt = None,
    m_trunc: TruncOpt = None,
    out_dir: OutDirOpt = None,
    kinds: KindsOpt = None,
    sets: SetOpt = None,
) -> None:
    """Write one policy-map CSV per policy kind at a single SNR."""
    with cli_errors():
        spec = build_spec(config, sets, snr_db=snr_db, m_trunc=m_trunc, out_dir=out_dir, policy_kinds=kinds)
        for path in run_policy_map(spec):
            console.print(f"wrote {path}")


def sweep(
    config: ConfigOpt = None,
    grid: Annotated[str | None, typer.Option("--grid", help="SNR grid in dB: '8,12,16' or '8:30:1'.")] = None,
    m_trunc: TruncOpt = None,
    out_dir: OutDirOpt = None,
    kinds: KindsOpt = None,
    workers: Annotated[int | None, typer.Option("--workers", "-j", min=1, help="Worker processes.")] = None,
    horizon: Annotated[int | None, typer.Option("--horizon", min=0, help="Simulated slots (0 skips).")] = None,
    seed: Annotated[int | None, typer.Option("--seed", min=0, help="Parent simulation seed.")] = None,
    sets: SetOpt = None,
) -> None:
    """Evaluate every policy kind across an SNR grid into one CSV table."""
    with cli_errors():
        spec = build_spec(
            config,
            sets,
            snr_grid_db=grid,
            m_trunc=m_trunc,
            out_dir=out_dir,
            policy_kinds=kinds,
            workers=workers,
            sim_horizon=horizon,
            sim_seed=seed,
        )
        path = run_sweep(spec)
        console.print(f"wrote {path}")
        for policy, monotone in sweep_is_monotone(pd.read_csv(path, dtype=str)).items():
            if not monotone:
                console.print(f"[yellow]review:[/yellow] {policy} AoI increases somewhere along the SNR grid")
