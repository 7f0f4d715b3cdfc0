"""Policy tables, baselines and structural checks.

Public symbols:

    PolicyTable:
        Deterministic stationary policy on the ``m x m`` age grid, stored as
        an integer array indexed ``[delta1 - 1, delta2 - 1]``.

    suboptimal_action / build_suboptimal_policy:
        One-step lookahead: pick the action minimizing the expected cost of
        the next slot, ``1 + w1 p1(a) delta1 + w2 p2(a) delta2`` (``p`` are
        failure probabilities, 1 for an unserved client).

    restrict_action_set:
        OMA-only / NOMA-only / custom action subsets for the baselines.

    verify_switching / extract_boundaries:
        Monotonicity check (nondecreasing in ``delta2``, nonincreasing in
        ``delta1``) and the compressed per-row boundary form.

    verify_subadditivity:
        Exhaustive check, on a small kernel, of the sufficient conditions
        for a monotone optimal policy under the ``delta2`` ordering.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from loguru import logger

from noma_aoi.channel import OutageTable, feasible_actions, noma_actions
from noma_aoi.config import PolicyKind, SystemConfig
from noma_aoi.errors import ConfigError, InstanceTooLargeError, StructureError
from noma_aoi.mdp import AoIState, TransitionKernel, grid_ages, reward_vector

# Relative slack under which two action scores count as tied.
TIE_RTOL = 1e-12
MAX_SUBADDITIVITY_M = 10
_MAX_REPORTED = 100


def argmin_smallest(scores: np.ndarray, actions: Sequence[int]) -> np.ndarray:
    """Column-wise argmin over ``scores[action, state]``, ties -> smallest action.

    ``actions`` must be ascending so the first tied row is the smallest.
    """
    best = scores.min(axis=0)
    tied = scores <= best + TIE_RTOL * np.maximum(1.0, np.abs(best))
    return np.asarray(actions)[np.argmax(tied, axis=0)]


# ── policy table ─────────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Stationary deterministic policy on the truncated grid.

    Args:
        m: Truncation bound.
        actions: ``(m, m)`` integer array, ``actions[d1 - 1, d2 - 1]``.
        kind: Which construction produced the table.
    """

    m: int
    actions: np.ndarray
    kind: PolicyKind = PolicyKind.CUSTOM

    def __post_init__(self) -> None:
        arr = np.array(self.actions, dtype=np.int64)
        if arr.shape != (self.m, self.m):
            raise ValueError(f"policy array must have shape ({self.m}, {self.m}), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "actions", arr)
        object.__setattr__(self, "kind", PolicyKind(self.kind))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return self.m == other.m and self.kind == other.kind and np.array_equal(self.actions, other.actions)

    __hash__ = None  # type: ignore[assignment]

    def __call__(self, delta1: int, delta2: int) -> int:
        """Action at ``(delta1, delta2)``; ages beyond the grid use the edge."""
        return int(self.actions[min(delta1, self.m) - 1, min(delta2, self.m) - 1])

    def flat(self) -> np.ndarray:
        """Actions in state-index order (row-major, ``delta1`` then ``delta2``)."""
        return self.actions.ravel()

    def used_actions(self) -> tuple[int, ...]:
        return tuple(int(a) for a in np.unique(self.actions))

    def action_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.actions, return_counts=True)
        return {int(a): int(c) for a, c in zip(values, counts, strict=True)}

    @classmethod
    def from_flat(cls, m: int, flat: np.ndarray, kind: PolicyKind = PolicyKind.CUSTOM) -> PolicyTable:
        return cls(m=m, actions=np.asarray(flat).reshape(m, m), kind=kind)

    @classmethod
    def constant(cls, m: int, a: int, kind: PolicyKind = PolicyKind.CUSTOM) -> PolicyTable:
        return cls(m=m, actions=np.full((m, m), a), kind=kind)

    def to_frame(self) -> pd.DataFrame:
        d1, d2 = grid_ages(self.m)
        return pd.DataFrame({"delta1": d1, "delta2": d2, "action": self.flat()})

    def to_csv(self, path: Path) -> Path:
        """Write ``delta1,delta2,action`` rows, row-major in ``delta1`` then ``delta2``."""
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    @classmethod
    def from_csv(cls, path: Path, kind: PolicyKind = PolicyKind.CUSTOM) -> PolicyTable:
        """Read a map written by :meth:`to_csv` (row order does not matter).

        Raises:
            ConfigError: If the file does not describe a complete square grid.
        """
        frame = pd.read_csv(path)
        missing = {"delta1", "delta2", "action"} - set(frame.columns)
        if missing:
            raise ConfigError(f"policy CSV {path} lacks columns {sorted(missing)}")
        m = int(frame["delta1"].max())
        if len(frame) != m * m or int(frame["delta2"].max()) != m:
            raise ConfigError(f"policy CSV {path} does not cover a full {m}x{m} grid")
        arr = np.full((m, m), -1, dtype=np.int64)
        arr[frame["delta1"].to_numpy() - 1, frame["delta2"].to_numpy() - 1] = frame["action"].to_numpy()
        if (arr < 0).any():
            raise ConfigError(f"policy CSV {path} has duplicate or missing states")
        return cls(m=m, actions=arr, kind=kind)


# ── action subsets ───────────────────────────────────────────────────────────


def restrict_action_set(
    cfg: SystemConfig,
    subset: Literal["full", "oma-only", "noma-only"] | Sequence[int],
    *,
    eliminate: bool = False,
) -> tuple[int, ...]:
    """Action list for a baseline or a custom restriction.

    Args:
        cfg: System configuration.
        subset: ``"oma-only"`` -> ``(0, N)``; ``"noma-only"`` -> the NOMA
            splits only; ``"full"`` -> every feasible action; a sequence is
            intersected with the feasible set.
        eliminate: Apply action elimination to ``"full"``/``"noma-only"``.

    Raises:
        ConfigError: If the result is empty or ``subset`` is unknown.
    """
    full = feasible_actions(cfg)
    if isinstance(subset, str):
        if subset == "full":
            acts = feasible_actions(cfg, eliminate=eliminate)
        elif subset == "oma-only":
            acts = (0, cfg.n_levels)
        elif subset == "noma-only":
            acts = noma_actions(cfg, eliminate=eliminate)
        else:
            raise ConfigError(f"unknown action subset {subset!r}; use full, oma-only, noma-only or a list")
    else:
        acts = tuple(a for a in full if a in set(subset))
    if not acts:
        raise ConfigError(f"action subset {subset!r} has no feasible action for N={cfg.n_levels}, R={cfg.rate}")
    return acts


# ── one-step lookahead policy ────────────────────────────────────────────────


def expected_next_reward(s: AoIState, a: int, outage: OutageTable, weights: tuple[float, float]) -> float:
    """Expected cost of the next slot after taking ``a`` in ``s``."""
    w1, w2 = weights
    p1, p2 = outage.p_fail(a)
    return 1.0 + w1 * p1 * s.delta1 + w2 * p2 * s.delta2


def suboptimal_action(
    s: AoIState,
    outage: OutageTable,
    weights: tuple[float, float],
    actions: Sequence[int] | None = None,
) -> int:
    """Greedy one-step action at ``s``; ties go to the smallest action."""
    acts = sorted(outage.actions if actions is None else actions)
    scores = np.array([[expected_next_reward(s, a, outage, weights)] for a in acts])
    return int(argmin_smallest(scores, acts)[0])


def build_suboptimal_policy(
    cfg: SystemConfig,
    outage: OutageTable,
    actions: Sequence[int] | None = None,
) -> PolicyTable:
    """Tabulate :func:`suboptimal_action` over the whole ``m x m`` grid."""
    acts = sorted(outage.actions if actions is None else actions)
    d1, d2 = grid_ages(cfg.m_trunc)
    fails = np.array([outage.p_fail(a) for a in acts])  # (A, 2)
    scores = 1.0 + cfg.w1 * fails[:, :1] * d1[None, :] + cfg.w2 * fails[:, 1:] * d2[None, :]
    flat = argmin_smallest(scores, acts)
    return PolicyTable.from_flat(cfg.m_trunc, flat, kind=PolicyKind.SUBOPTIMAL)


# ── switching structure ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class SwitchingReport:
    """Outcome of :func:`verify_switching`; violations are adjacent state pairs."""

    passed: bool
    violations: list[tuple[AoIState, AoIState]] = field(default_factory=list)


def verify_switching(p: PolicyTable) -> SwitchingReport:
    """Check unit-step monotonicity of a policy map.

    Along a row (fixed ``delta1``) actions must not decrease as ``delta2``
    grows; along a column (fixed ``delta2``) they must not increase as
    ``delta1`` grows. Unit steps suffice by transitivity.
    """
    arr = p.actions
    violations: list[tuple[AoIState, AoIState]] = []
    for i, j in zip(*np.nonzero(arr[:, 1:] < arr[:, :-1]), strict=True):
        violations.append((AoIState(int(i) + 1, int(j) + 1), AoIState(int(i) + 1, int(j) + 2)))
    for i, j in zip(*np.nonzero(arr[1:, :] > arr[:-1, :]), strict=True):
        violations.append((AoIState(int(i) + 1, int(j) + 1), AoIState(int(i) + 2, int(j) + 1)))
    if violations:
        logger.debug("{} policy has {} switching violations", p.kind, len(violations))
    return SwitchingReport(passed=not violations, violations=violations)


@dataclass(frozen=True)
class SwitchingBoundary:
    """Per-row decision boundaries of a switching-type policy.

    Row ``delta1`` starts with ``start_actions[delta1 - 1]`` at ``delta2 = 1``
    and switches to ``switch_actions[delta1 - 1][k]`` from
    ``delta2 = thresholds[delta1 - 1][k]`` on.
    """

    m: int
    kind: PolicyKind
    start_actions: tuple[int, ...]
    thresholds: tuple[tuple[int, ...], ...]
    switch_actions: tuple[tuple[int, ...], ...]

    def reconstruct(self) -> PolicyTable:
        arr = np.empty((self.m, self.m), dtype=np.int64)
        for i in range(self.m):
            arr[i, :] = self.start_actions[i]
            for delta2, a in zip(self.thresholds[i], self.switch_actions[i], strict=True):
                arr[i, delta2 - 1 :] = a
        return PolicyTable(m=self.m, actions=arr, kind=self.kind)

    @property
    def n_thresholds(self) -> int:
        return sum(len(row) for row in self.thresholds)


def extract_boundaries(p: PolicyTable) -> SwitchingBoundary:
    """Compress a switching-type policy into its per-row thresholds.

    Raises:
        StructureError: If ``p`` fails :func:`verify_switching`.
    """
    report = verify_switching(p)
    if not report.passed:
        first = report.violations[0]
        raise StructureError(
            f"{p.kind} policy is not switching-type ({len(report.violations)} violations, "
            f"first between {first[0]} and {first[1]}); boundaries are undefined"
        )
    arr = p.actions
    thresholds: list[tuple[int, ...]] = []
    switches: list[tuple[int, ...]] = []
    for row in arr:
        change = np.nonzero(row[1:] != row[:-1])[0] + 1
        thresholds.append(tuple(int(j) + 1 for j in change))
        switches.append(tuple(int(row[j]) for j in change))
    return SwitchingBoundary(
        m=p.m,
        kind=p.kind,
        start_actions=tuple(int(a) for a in arr[:, 0]),
        thresholds=tuple(thresholds),
        switch_actions=tuple(switches),
    )


# ── monotone-optimality conditions ───────────────────────────────────────────


@dataclass(frozen=True)
class Counterexample:
    """One violated inequality; ``k`` is the ``delta2`` tail threshold."""

    condition: Literal["a", "b", "d"]
    k: int | None
    s_plus: AoIState
    s_minus: AoIState
    a_plus: int | None = None
    a_minus: int | None = None


@dataclass(frozen=True)
class SubadditivityReport:
    passed: bool
    n_violations: int
    counterexamples: list[Counterexample] = field(default_factory=list)


def tail_masses(kernel: TransitionKernel) -> np.ndarray:
    """``q[a, d1-1, d2-1, k-1] = P(next delta2 >= k | (d1, d2), a)`` for ``k = 1..m``."""
    m = kernel.m
    next_d2 = kernel.next_state % m + 1  # (A, S, 4)
    ks = np.arange(1, m + 1)
    tails = ((next_d2[..., None] >= ks) * kernel.prob[..., None]).sum(axis=2)  # (A, S, m)
    return tails.reshape(kernel.n_actions, m, m, m)


def verify_subadditivity(
    kernel: TransitionKernel,
    weights: tuple[float, float] = (0.5, 0.5),
    *,
    atol: float = 1e-12,
    max_m: int = MAX_SUBADDITIVITY_M,
) -> SubadditivityReport:
    """Exhaustively check the monotone-policy conditions under the ``delta2`` order.

    States are compared at equal ``delta1``; ``s+ >= s-`` when
    ``delta2+ >= delta2-``.

    * a: the cost is nondecreasing in ``s``;
    * b: every tail mass ``q(k|s,a)`` is nondecreasing in ``s``;
    * d: ``q(k|s+,a+) + q(k|s-,a-) <= q(k|s+,a-) + q(k|s-,a+)`` for
      ``a+ >= a-``.

    The cost does not depend on the action, so subadditivity of the cost
    holds identically and is not checked.

    Raises:
        InstanceTooLargeError: If ``kernel.m > max_m``.
    """
    m = kernel.m
    if m > max_m:
        raise InstanceTooLargeError(f"subadditivity check is exhaustive; needs m <= {max_m}, got m={m}")
    acts = kernel.actions
    found: list[Counterexample] = []
    total = 0

    # a) cost along delta2
    cost = reward_vector(m, *weights).reshape(m, m)
    bad_a = np.argwhere(cost[:, 1:] < cost[:, :-1] - atol)
    total += len(bad_a)
    for i, j in bad_a[:_MAX_REPORTED]:
        found.append(Counterexample("a", None, AoIState(i + 1, j + 2), AoIState(i + 1, j + 1)))

    q = tail_masses(kernel)  # (A, d1, d2, k)

    # b) q(k | (d1, d2+), a) >= q(k | (d1, d2-), a) for d2+ > d2-
    diff_b = q[:, :, :, None, :] - q[:, :, None, :, :]  # [a, d1, d2+, d2-, k]
    upper = np.triu(np.ones((m, m), dtype=bool), k=1).T  # d2+ > d2-
    bad_b = np.argwhere((diff_b < -atol) & upper[None, None, :, :, None])
    total += len(bad_b)
    for ka, i, jp, jm, k in bad_b[: max(0, _MAX_REPORTED - len(found))]:
        found.append(
            Counterexample("b", int(k) + 1, AoIState(i + 1, jp + 1), AoIState(i + 1, jm + 1), acts[ka], acts[ka])
        )

    # d) subadditivity in (s, a)
    # lhs - rhs = [q(s+,a+) - q(s-,a+)] - [q(s+,a-) - q(s-,a-)]
    gain = diff_b  # [a, d1, d2+, d2-, k] = q(s+, a) - q(s-, a)
    excess = gain[:, None] - gain[None, :]  # [a+, a-, d1, d2+, d2-, k]
    act_upper = np.triu(np.ones((len(acts), len(acts)), dtype=bool), k=1).T  # a+ > a-
    mask = act_upper[:, :, None, None, None, None] & upper[None, None, None, :, :, None]
    bad_d = np.argwhere((excess > atol) & mask)
    total += len(bad_d)
    for kp, km, i, jp, jm, k in bad_d[: max(0, _MAX_REPORTED - len(found))]:
        found.append(
            Counterexample("d", int(k) + 1, AoIState(i + 1, jp + 1), AoIState(i + 1, jm + 1), acts[kp], acts[km])
        )

    if total:
        logger.warning("monotone-policy conditions violated in {} places", total)
    return SubadditivityReport(passed=total == 0, n_violations=total, counterexamples=found)
