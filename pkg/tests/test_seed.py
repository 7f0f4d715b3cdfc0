"""Tests for noma_aoi.utils.seed module."""

from __future__ import annotations

import numpy as np
import pytest

from noma_aoi.utils.seed import SeedConfig, make_rng, spawn_seeds


class TestValidation:
    """Seed value validation for make_rng, spawn_seeds and SeedConfig."""

    @pytest.mark.parametrize("bad_seed", [-1, -100, -999])
    def test_make_rng_rejects_negative(self, bad_seed: int) -> None:
        with pytest.raises(ValueError, match="non-negative integer"):
            make_rng(bad_seed)

    @pytest.mark.parametrize("bad_seed", [42.0, "42", None, [42], True])
    def test_make_rng_rejects_non_int(self, bad_seed: object) -> None:
        with pytest.raises(ValueError, match="non-negative integer"):
            make_rng(bad_seed)  # type: ignore[arg-type]

    @pytest.mark.parametrize("bad_seed", [-1, 3.14, "oops"])
    def test_seed_config_rejects_invalid(self, bad_seed: object) -> None:
        with pytest.raises(ValueError, match="non-negative integer"):
            SeedConfig(seed=bad_seed)  # type: ignore[arg-type]

    def test_seed_config_accepts_zero(self) -> None:
        config = SeedConfig(seed=0)
        assert config.seed == 0

    def test_spawn_rejects_negative_count(self) -> None:
        with pytest.raises(ValueError, match="non-negative"):
            spawn_seeds(0, -1)


class TestStreams:
    """Explicit generators; global NumPy state is never touched."""

    def test_reproducibility(self) -> None:
        first = make_rng(42).random(10).tolist()
        second = make_rng(42).random(10).tolist()
        assert first == second

    def test_different_seeds_differ(self) -> None:
        assert make_rng(42).random(10).tolist() != make_rng(99).random(10).tolist()

    def test_global_state_untouched(self) -> None:
        np.random.seed(7)
        expected = np.random.rand(3).tolist()
        np.random.seed(7)
        make_rng(123).random(100)
        assert np.random.rand(3).tolist() == expected

    def test_seed_config_rng(self) -> None:
        assert SeedConfig(seed=5).rng().integers(1_000, size=4).tolist() == make_rng(5).integers(1_000, size=4).tolist()


class TestSpawnSeeds:
    """Child seeds for parallel replications."""

    def test_stable(self) -> None:
        assert spawn_seeds(3, 5) == spawn_seeds(3, 5)

    def test_distinct_children(self) -> None:
        children = spawn_seeds(0, 50)
        assert len(set(children)) == 50
        assert all(isinstance(c, int) and c >= 0 for c in children)

    def test_prefix_property(self) -> None:
        assert spawn_seeds(11, 8)[:3] == spawn_seeds(11, 3)

    def test_empty(self) -> None:
        assert spawn_seeds(1, 0) == []


class TestSeedConfig:
    """Verify SeedConfig dataclass behavior."""

    def test_frozen(self) -> None:
        config = SeedConfig(seed=42)
        with pytest.raises(AttributeError):
            config.seed = 99  # type: ignore[misc]
