"""Tests for the Typer CLI (exit codes, error lines, written files)."""

from __future__ import annotations

from collections.abc import Iterator
from pathlib import Path

import pytest
from loguru import logger
from typer.testing import CliRunner

from noma_aoi.cli import app

runner = CliRunner()


@pytest.fixture(autouse=True)
def _silence_logs() -> Iterator[None]:
    # the app callback points loguru at the runner's stderr
    yield
    logger.remove()
    logger.disable("noma_aoi")


def test_help_lists_commands() -> None:
    result = runner.invoke(app, ["--help"])
    assert result.exit_code == 0
    for verb in ("solve", "verify", "map", "sweep", "simulate"):
        assert verb in result.output


class TestSolve:
    def test_reports_and_writes_map(self, tmp_path: Path) -> None:
        out = tmp_path / "policy.csv"
        result = runner.invoke(app, ["solve", "-m", "10", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "J*" in result.output
        assert "analytic AoI" in result.output
        assert out.read_text().startswith("delta1,delta2,action")

    def test_lookahead_kind(self) -> None:
        result = runner.invoke(app, ["solve", "-m", "10", "--kind", "suboptimal", "--show-outage"])
        assert result.exit_code == 0, result.output
        assert "J*" not in result.output
        assert "Outage probabilities" in result.output

    def test_dump_kernel(self, tmp_path: Path) -> None:
        path = tmp_path / "kernel.csv"
        result = runner.invoke(app, ["solve", "-m", "4", "--dump-kernel", str(path)])
        assert result.exit_code == 0, result.output
        assert path.read_text().startswith("delta1,delta2,action,next1,next2,prob")

    def test_invalid_value_exits_with_config_code(self) -> None:
        result = runner.invoke(app, ["solve", "--set", "d1=5"])
        assert result.exit_code == 2
        assert "error: ValidationError:" in result.output

    def test_malformed_set(self) -> None:
        result = runner.invoke(app, ["solve", "--set", "d1"])
        assert result.exit_code == 2
        assert "error: ConfigError: --set expects key=value" in result.output

    def test_missing_config_file(self, tmp_path: Path) -> None:
        result = runner.invoke(app, ["solve", "-c", str(tmp_path / "missing.conf")])
        assert result.exit_code == 2
        assert "error: ConfigError: config file not found" in result.output

    def test_non_convergence_exits_with_failure(self) -> None:
        result = runner.invoke(app, ["solve", "-m", "10", "--set", "max_iter=2"])
        assert result.exit_code == 1
        assert "error:" in result.output


class TestSimulate:
    def test_seed_is_required(self) -> None:
        result = runner.invoke(app, ["simulate", "-m", "10"])
        assert result.exit_code == 2

    def test_prints_record(self, tmp_path: Path) -> None:
        out = tmp_path / "sim.txt"
        args = ["simulate", "--seed", "3", "-m", "10", "--horizon", "500", "--kind", "suboptimal", "--out", str(out)]
        result = runner.invoke(app, args)
        assert result.exit_code == 0, result.output
        assert "horizon=500" in result.output
        assert "seed=3" in result.output
        assert out.read_text().splitlines()[0] == "horizon=500"

    def test_unreadable_policy_csv(self, tmp_path: Path) -> None:
        path = tmp_path / "p.csv"
        path.write_text("a,b\n1,2\n")
        result = runner.invoke(app, ["simulate", "--seed", "0", "--policy-csv", str(path)])
        assert result.exit_code == 2
        assert "lacks columns" in result.output


class TestBatchCommands:
    def test_map(self, tmp_path: Path) -> None:
        result = runner.invoke(app, ["map", "-m", "10", "-o", str(tmp_path), "--kinds", "suboptimal,oma-only-optimal"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "policy_suboptimal.csv").is_file()
        assert (tmp_path / "policy_oma-only-optimal.csv").is_file()
        assert (tmp_path / "policy_map.meta").is_file()

    def test_sweep(self, tmp_path: Path) -> None:
        args = ["sweep", "--grid", "12,18", "-m", "10", "-o", str(tmp_path), "--kinds", "suboptimal", "--horizon", "0"]
        result = runner.invoke(app, args)
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "snr_db,policy,j_star_or_na,analytic_aoi,simulated_aoi,escape_freq"
        assert len(lines) == 3

    def test_sweep_rejects_bad_grid(self, tmp_path: Path) -> None:
        result = runner.invoke(app, ["sweep", "--grid", "18,12", "-o", str(tmp_path)])
        assert result.exit_code == 2
        assert "strictly increasing" in result.output


def test_verify_prints_each_check() -> None:
    result = runner.invoke(app, ["verify", "-m", "20", "--set", "subadditivity_m=4"])
    assert result.exit_code in (0, 1), result.output
    assert "optimal switching:" in result.output
    assert "lookahead switching:" in result.output
    assert "conditions (m=4): pass" in result.output
