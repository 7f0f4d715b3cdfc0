"""Single-configuration commands: ``solve``, ``verify`` and ``simulate``."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated

import typer
from rich.table import Table

from noma_aoi.channel import OutageTable, compute_outage_table
from noma_aoi.cli._common import (
    EXIT_FAILURE,
    ConfigOpt,
    SetOpt,
    SnrOpt,
    TruncOpt,
    build_spec,
    cli_errors,
    console,
)
from noma_aoi.config import PolicyKind
from noma_aoi.errors import ConvergenceError
from noma_aoi.evaluation import evaluate_policy
from noma_aoi.experiments import policy_actions, run_verify, simulate_policy, solve_policy, validate_outages
from noma_aoi.mdp import build_truncated_kernel

KindOpt = Annotated[PolicyKind, typer.Option("--kind", "-k", help="Policy to construct.")]


def _outage_table(outage: OutageTable) -> Table:
    table = Table(title="Outage probabilities")
    for col in ("action", "mode", "p_fail_1", "p_fail_2"):
        table.add_column(col, justify="right")
    for row in outage.as_frame().itertuples(index=False):
        cells = ["-" if isinstance(v, float) and math.isnan(v) else f"{v:.5f}" for v in (row.p_fail_1, row.p_fail_2)]
        table.add_row(str(row.action), row.mode, *cells)
    return table


def solve(
    config: ConfigOpt = None,
    snr_db: SnrOpt = None,
    m_trunc: TruncOpt = None,
    sets: SetOpt = None,
    kind: KindOpt = PolicyKind.OPTIMAL_ADAPTIVE,
    out: Annotated[Path | None, typer.Option("--out", help="Write the policy map CSV here.")] = None,
    dump_kernel: Annotated[
        Path | None, typer.Option("--dump-kernel", help="Write the truncated kernel as CSV (debugging).")
    ] = None,
    show_outage: Annotated[bool, typer.Option("--show-outage", help="Print the outage table.")] = False,
) -> None:
    """Construct one policy and report its average AoI."""
    with cli_errors():
        spec = build_spec(config, sets, snr_db=snr_db, m_trunc=m_trunc)
        cfg = spec.system_config()
        outage = compute_outage_table(cfg)
        if show_outage:
            console.print(_outage_table(outage))
        if dump_kernel is not None:
            kernel = build_truncated_kernel(
                cfg, outage, policy_actions(spec, cfg, kind), max_entries=spec.max_kernel_entries
            )
            console.print(f"kernel written to {kernel.dump(dump_kernel)}")

        run = solve_policy(spec, kind, cfg, outage)
        analytic = evaluate_policy(run.policy, outage, cfg.weights)

        summary = Table(title=f"{kind} @ {cfg.snr_db:.4g} dB, m={cfg.m_trunc}", show_header=False)
        summary.add_column("key")
        summary.add_column("value", justify="right")
        if run.solver is not None:
            lo, hi = run.solver.j_bounds
            summary.add_row("J*", f"{run.solver.j_star:.9f}")
            summary.add_row("bounds", f"[{lo:.9f}, {hi:.9f}]")
            summary.add_row("iterations", str(run.solver.iterations))
            summary.add_row("final span", f"{run.solver.final_span:.3e}")
        summary.add_row("analytic AoI", f"{analytic:.9f}")
        for a, count in run.policy.action_counts().items():
            summary.add_row(f"a={a}", f"{count} states")
        console.print(summary)

        if out is not None:
            console.print(f"policy map written to {run.policy.to_csv(out)}")
        if not run.converged:
            raise ConvergenceError(f"solver stopped after {spec.max_iter} iterations; result is partial")


def verify(
    config: ConfigOpt = None,
    snr_db: SnrOpt = None,
    m_trunc: TruncOpt = None,
    sets: SetOpt = None,
    mc_samples: Annotated[
        int, typer.Option("--mc-samples", min=0, help="Also check outages by Monte Carlo (0 skips).")
    ] = 0,
    seed: Annotated[int, typer.Option("--seed", min=0, help="Seed for the Monte-Carlo check.")] = 0,
) -> None:
    """Check switching structure and the monotone-policy conditions."""
    with cli_errors():
        spec = build_spec(config, sets, snr_db=snr_db, m_trunc=m_trunc)
        report = run_verify(spec)
        ok = report.passed

        console.print(f"optimal switching:    {'pass' if report.optimal_switching.passed else 'FAIL'}")
        for left, right in report.optimal_switching.violations[:10]:
            console.print(f"  violation {left} -> {right}")
        sub = report.suboptimal_switching
        console.print(f"lookahead switching:  {'pass' if sub.passed else f'{len(sub.violations)} violations'}")
        add = report.subadditivity
        console.print(
            f"conditions (m={report.subadditivity_m}): "
            f"{'pass' if add.passed else f'FAIL ({add.n_violations} violations)'}"
        )
        for ce in add.counterexamples[:10]:
            console.print(f"  ({ce.condition}) k={ce.k} s+={ce.s_plus} s-={ce.s_minus} a+={ce.a_plus} a-={ce.a_minus}")

        if mc_samples > 0:
            for estimate, agrees in validate_outages(spec.system_config(), mc_samples, seed):
                console.print(
                    f"outage a={estimate.action}: p1={estimate.p_fail_1} p2={estimate.p_fail_2} "
                    f"{'ok' if agrees else 'MISMATCH'}"
                )
                ok = ok and agrees

    if not ok:
        raise typer.Exit(code=EXIT_FAILURE)


def simulate(
    seed: Annotated[int, typer.Option("--seed", min=0, help="RNG seed (required).")],
    config: ConfigOpt = None,
    snr_db: SnrOpt = None,
    m_trunc: TruncOpt = None,
    sets: SetOpt = None,
    kind: KindOpt = PolicyKind.OPTIMAL_ADAPTIVE,
    horizon: Annotated[int | None, typer.Option("--horizon", min=1, help="Slots to simulate.")] = None,
    policy_csv: Annotated[
        Path | None, typer.Option("--policy-csv", help="Simulate a policy map read from CSV instead.")
    ] = None,
    out: Annotated[Path | None, typer.Option("--out", help="Also write the key=value record here.")] = None,
) -> None:
    """Simulate a policy slot by slot and print a key=value record."""
    with cli_errors():
        spec = build_spec(config, sets, snr_db=snr_db, m_trunc=m_trunc, sim_horizon=horizon)
        report = simulate_policy(spec, seed, kind=kind, policy_csv=policy_csv)
        record = report.to_record()
        console.print(record, end="", markup=False, highlight=False)
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(record, encoding="utf-8")
