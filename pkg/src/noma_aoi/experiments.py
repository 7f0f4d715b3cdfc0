"""Experiment orchestration behind the CLI verbs.

Every function here takes an :class:`ExperimentSpec` and writes plain text
outputs: policy maps as ``delta1,delta2,action`` CSVs, the SNR sweep as
one CSV table, and ``key=value`` sidecars echoing the full configuration.
"""

from __future__ import annotations

from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import pandas as pd
from loguru import logger

from noma_aoi.channel import MonteCarloOutage, OutageTable, compute_outage_table, monte_carlo_outage
from noma_aoi.config import ExperimentSpec, PolicyKind, SystemConfig
from noma_aoi.errors import ConfigError, ConvergenceError, NomaAoIError
from noma_aoi.evaluation import SimReport, evaluate_policy, simulate
from noma_aoi.mdp import build_truncated_kernel
from noma_aoi.policies import (
    PolicyTable,
    SubadditivityReport,
    SwitchingReport,
    build_suboptimal_policy,
    restrict_action_set,
    verify_subadditivity,
    verify_switching,
)
from noma_aoi.solver import SolverResult, rvi_solve
from noma_aoi.utils.seed import make_rng, spawn_seeds

SWEEP_COLUMNS = ("snr_db", "policy", "j_star_or_na", "analytic_aoi", "simulated_aoi", "escape_freq")
FAIL = "FAIL"
NA = "NA"
META_SUFFIX = ".meta"


def fmt(value: float) -> str:
    """Fixed six significant digits for every number written to CSV."""
    return f"{value:#.6g}"


def write_record(path: Path, record: Mapping[str, object]) -> Path:
    """Write ``key=value`` lines in insertion order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k}={v}\n" for k, v in record.items()), encoding="utf-8")
    return path


# ── single policy ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class PolicyRun:
    """One constructed policy; ``solver`` is ``None`` for the lookahead policy."""

    kind: PolicyKind
    policy: PolicyTable
    solver: SolverResult | None = None

    @property
    def j_star(self) -> float | None:
        return None if self.solver is None else self.solver.j_star

    @property
    def converged(self) -> bool:
        return self.solver is None or self.solver.converged


def policy_actions(spec: ExperimentSpec, cfg: SystemConfig, kind: PolicyKind) -> tuple[int, ...]:
    """Action set a policy kind optimizes over."""
    if kind is PolicyKind.OMA_ONLY:
        return restrict_action_set(cfg, "oma-only")
    if kind is PolicyKind.NOMA_ONLY:
        return restrict_action_set(cfg, "noma-only")
    return restrict_action_set(cfg, "full", eliminate=spec.eliminate)


def solve_policy(
    spec: ExperimentSpec,
    kind: PolicyKind,
    cfg: SystemConfig | None = None,
    outage: OutageTable | None = None,
) -> PolicyRun:
    """Build the policy of ``kind`` at ``cfg`` (defaults to the spec's base config)."""
    kind = PolicyKind(kind)
    if kind is PolicyKind.CUSTOM:
        raise ConfigError("custom policies are read from CSV, not constructed")
    cfg = spec.system_config() if cfg is None else cfg
    outage = compute_outage_table(cfg) if outage is None else outage
    if kind is PolicyKind.SUBOPTIMAL:
        return PolicyRun(kind=kind, policy=build_suboptimal_policy(cfg, outage))

    kernel = build_truncated_kernel(
        cfg, outage, policy_actions(spec, cfg, kind), max_entries=spec.max_kernel_entries
    )
    result = rvi_solve(
        kernel,
        cfg.weights,
        tol=spec.tol,
        max_iter=spec.max_iter,
        step_size=spec.step_size,
        kind=kind,
    )
    logger.info(
        "{} at {:.4g} dB: J*={:.6f} ({} iterations{})",
        kind,
        cfg.snr_db,
        result.j_star,
        result.iterations,
        "" if result.converged else ", NOT converged",
    )
    return PolicyRun(kind=kind, policy=result.policy, solver=result)


def map_path(spec: ExperimentSpec, kind: PolicyKind) -> Path:
    return spec.out_dir / f"policy_{kind}.csv"


def run_policy_map(spec: ExperimentSpec) -> list[Path]:
    """Write one policy-map CSV per requested kind plus a ``.meta`` sidecar.

    Raises:
        ConvergenceError: If any solve hit ``max_iter``; all maps are still
            written and the sidecar carries ``status=partial``.
    """
    cfg = spec.system_config()
    outage = compute_outage_table(cfg)
    record: dict[str, object] = dict(spec.echo())
    paths: list[Path] = []
    stalled: list[str] = []
    for kind in spec.policy_kinds:
        run = solve_policy(spec, kind, cfg, outage)
        paths.append(run.policy.to_csv(map_path(spec, kind)))
        if run.solver is not None:
            record[f"{kind}.j_star"] = f"{run.solver.j_star:.10g}"
            record[f"{kind}.iterations"] = run.solver.iterations
            record[f"{kind}.final_span"] = f"{run.solver.final_span:.3e}"
            record[f"{kind}.converged"] = str(run.solver.converged).lower()
            if not run.solver.converged:
                stalled.append(str(kind))
        record[f"{kind}.actions_used"] = ",".join(str(a) for a in run.policy.used_actions())
    record["status"] = "partial" if stalled else "complete"
    paths.append(write_record(spec.out_dir / f"policy_map{META_SUFFIX}", record))
    if stalled:
        raise ConvergenceError(
            f"solver did not reach tol={spec.tol:g} within {spec.max_iter} iterations for {', '.join(stalled)}; "
            f"maps in {spec.out_dir} are marked partial"
        )
    return paths


# ── SNR sweep ────────────────────────────────────────────────────────────────


def _sweep_row(
    spec: ExperimentSpec, snr_db: float, kind: PolicyKind, cfg: SystemConfig, outage: OutageTable, seed: int
) -> dict[str, str]:
    row = {"snr_db": fmt(snr_db), "policy": str(kind)}
    try:
        run = solve_policy(spec, kind, cfg, outage)
        if not run.converged:
            raise ConvergenceError(f"{kind} did not converge within {spec.max_iter} iterations")
        analytic = evaluate_policy(run.policy, outage, cfg.weights)
        row["j_star_or_na"] = NA if run.j_star is None else fmt(run.j_star)
        row["analytic_aoi"] = fmt(analytic)
        if spec.sim_horizon > 0:
            report = simulate(run.policy, cfg, outage, spec.sim_horizon, seed)
            row["simulated_aoi"] = fmt(report.avg_weighted_aoi)
            row["escape_freq"] = fmt(report.escape_freq)
        else:
            row["simulated_aoi"] = row["escape_freq"] = NA
    except NomaAoIError as err:
        logger.warning("sweep point {} dB / {} failed: {}: {}", snr_db, kind, type(err).__name__, err)
        row.update(dict.fromkeys(SWEEP_COLUMNS[2:], FAIL))
    return row


def sweep_point(spec: ExperimentSpec, snr_db: float, seeds: list[int]) -> list[dict[str, str]]:
    """All policy rows of one SNR point, in canonical kind order."""
    cfg = spec.system_config(snr_db)
    outage = compute_outage_table(cfg)
    return [
        _sweep_row(spec, snr_db, kind, cfg, outage, seed)
        for kind, seed in zip(spec.policy_kinds, seeds, strict=True)
    ]


def run_sweep(spec: ExperimentSpec) -> Path:
    """Solve, evaluate and simulate every (SNR, policy kind) pair; write one CSV.

    Rows come out ordered by SNR then policy kind whatever ``workers`` is.
    Failing points get ``FAIL`` markers and the sweep continues.
    """
    n_kinds = len(spec.policy_kinds)
    seeds = spawn_seeds(spec.sim_seed, len(spec.snr_grid_db) * n_kinds)
    per_point = [seeds[i * n_kinds : (i + 1) * n_kinds] for i in range(len(spec.snr_grid_db))]

    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(sweep_point, [spec] * len(per_point), spec.snr_grid_db, per_point))
    else:
        chunks = [sweep_point(spec, snr, s) for snr, s in zip(spec.snr_grid_db, per_point, strict=True)]

    frame = pd.DataFrame([row for chunk in chunks for row in chunk], columns=list(SWEEP_COLUMNS))
    path = spec.out_dir / spec.sweep_file
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    write_record(path.with_suffix(path.suffix + META_SUFFIX), spec.echo())
    n_fail = int((frame["analytic_aoi"] == FAIL).sum())
    logger.info("sweep written to {} ({} rows, {} failed)", path, len(frame), n_fail)
    return path


def sweep_is_monotone(frame: pd.DataFrame) -> dict[str, bool]:
    """Per policy: is ``analytic_aoi`` nonincreasing along the SNR grid?

    Failed points are skipped.
    """
    out: dict[str, bool] = {}
    for policy, group in frame.groupby("policy", sort=False):
        values = pd.to_numeric(group["analytic_aoi"], errors="coerce").dropna().to_numpy()
        out[str(policy)] = bool((values[1:] <= values[:-1] * (1 + 1e-9)).all())
    return out


# ── simulation and structural checks ─────────────────────────────────────────


def simulate_policy(
    spec: ExperimentSpec,
    seed: int,
    *,
    kind: PolicyKind = PolicyKind.OPTIMAL_ADAPTIVE,
    policy_csv: Path | None = None,
) -> SimReport:
    """Simulate a constructed policy (or one read from CSV) at the base config."""
    cfg = spec.system_config()
    outage = compute_outage_table(cfg)
    policy = PolicyTable.from_csv(policy_csv) if policy_csv is not None else solve_policy(spec, kind, cfg, outage).policy
    return simulate(policy, cfg, outage, max(spec.sim_horizon, 1), seed)


@dataclass(frozen=True)
class VerifyReport:
    optimal_switching: SwitchingReport
    suboptimal_switching: SwitchingReport
    subadditivity: SubadditivityReport
    subadditivity_m: int

    @property
    def passed(self) -> bool:
        # the lookahead policy's structure is reported, never required
        return self.optimal_switching.passed and self.subadditivity.passed


def run_verify(spec: ExperimentSpec) -> VerifyReport:
    """Structural checks at the base config.

    The optimal and lookahead policies are checked for switching structure
    on the full grid; the monotone-policy conditions are checked on a
    ``subadditivity_m`` grid over the eliminated action set.
    """
    cfg = spec.system_config()
    outage = compute_outage_table(cfg)
    optimal = solve_policy(spec, PolicyKind.OPTIMAL_ADAPTIVE, cfg, outage)
    if not optimal.converged:
        raise ConvergenceError(f"optimal policy did not converge within {spec.max_iter} iterations")
    suboptimal = build_suboptimal_policy(cfg, outage)

    small = cfg.replace(m_trunc=spec.subadditivity_m)
    kernel = build_truncated_kernel(small, outage, restrict_action_set(small, "full", eliminate=True))
    return VerifyReport(
        optimal_switching=verify_switching(optimal.policy),
        suboptimal_switching=verify_switching(suboptimal),
        subadditivity=verify_subadditivity(kernel, cfg.weights),
        subadditivity_m=spec.subadditivity_m,
    )


def validate_outages(cfg: SystemConfig, n_samples: int, seed: int) -> list[tuple[MonteCarloOutage, bool]]:
    """Monte-Carlo estimate for every feasible action, paired with a 3-sigma verdict."""
    table = compute_outage_table(cfg)
    out: list[tuple[MonteCarloOutage, bool]] = []
    for a, child in zip(table.actions, spawn_seeds(seed, len(table.actions)), strict=True):
        estimate = monte_carlo_outage(cfg, a, n_samples, make_rng(child))
        out.append((estimate, estimate.agrees_with(table)))
    return out
