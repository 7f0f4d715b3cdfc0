"""The AoI Markov decision process and its truncation.

State ``(delta1, delta2)`` holds both clients' ages. Each slot the
scheduler picks an action, every served client independently succeeds
with probability ``1 - p_fail``, a successful client's age resets to 1
and every other age grows by 1. The one-stage cost is charged on the
current state, ``w1*delta1 + w2*delta2``, whatever the action.

For computation the ages are clamped at ``m`` (saturating truncation), so
the state space is the ``m x m`` grid. States are indexed row-major in
``delta1`` then ``delta2``: ``index = (delta1 - 1) * m + (delta2 - 1)``.

Every (state, action) pair has at most four successors, always stored in
the fixed outcome order

    0: both succeed         -> (1, 1)
    1: only client 1        -> (1, delta2 + 1)
    2: only client 2        -> (delta1 + 1, 1)
    3: both fail            -> (delta1 + 1, delta2 + 1)

with zero mass on outcomes the action cannot produce (OMA serves one
client, so two of its four slots are empty).
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from noma_aoi.channel import OutageTable
from noma_aoi.config import SystemConfig
from noma_aoi.errors import ConfigError, InstanceTooLargeError

DEFAULT_MAX_KERNEL_ENTRIES = 5_000_000
STOCHASTIC_ATOL = 1e-12
N_OUTCOMES = 4


@dataclass(frozen=True, order=True)
class AoIState:
    """Pair of instantaneous ages, both at least 1."""

    delta1: int
    delta2: int

    def __post_init__(self) -> None:
        for name in ("delta1", "delta2"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")

    def index(self, m: int) -> int:
        """Row-major position on the ``m x m`` grid."""
        if self.delta1 > m or self.delta2 > m:
            raise ValueError(f"state {self} lies outside the truncated grid m={m}")
        return (self.delta1 - 1) * m + (self.delta2 - 1)

    @classmethod
    def from_index(cls, index: int, m: int) -> AoIState:
        return cls(int(index) // m + 1, int(index) % m + 1)


def grid_ages(m: int) -> tuple[np.ndarray, np.ndarray]:
    """``(delta1, delta2)`` arrays for all ``m*m`` states in index order."""
    ages = np.arange(1, m + 1)
    return np.repeat(ages, m), np.tile(ages, m)


def reward(s: AoIState, w1: float, w2: float) -> float:
    """One-stage cost ``w1*delta1 + w2*delta2`` (action independent)."""
    return w1 * s.delta1 + w2 * s.delta2


def reward_vector(m: int, w1: float, w2: float) -> np.ndarray:
    """:func:`reward` for every truncated state, in index order."""
    d1, d2 = grid_ages(m)
    return w1 * d1 + w2 * d2


def outcome_probabilities(a: int, outage: OutageTable) -> tuple[float, float, float, float]:
    """Masses of the four outcomes under ``a``, in the module's fixed order."""
    p1, p2 = outage.p_fail(a)
    s1, s2 = 1.0 - p1, 1.0 - p2
    return (s1 * s2, s1 * p2, p1 * s2, p1 * p2)


def outcome_targets(m: int) -> np.ndarray:
    """``(m*m, 4)`` successor indices of every state, ages clamped at ``m``."""
    d1, d2 = grid_ages(m)
    inc1, inc2 = np.minimum(d1 + 1, m), np.minimum(d2 + 1, m)
    return np.stack(
        [
            np.zeros_like(d1),  # (1, 1)
            inc2 - 1,  # (1, delta2 + 1)
            (inc1 - 1) * m,  # (delta1 + 1, 1)
            (inc1 - 1) * m + (inc2 - 1),  # (delta1 + 1, delta2 + 1)
        ],
        axis=1,
    )


def successors(s: AoIState, a: int, outage: OutageTable, m: int) -> list[tuple[AoIState, float]]:
    """Next-state distribution of ``s`` under ``a``, ages clamped at ``m``.

    Zero-mass outcomes are dropped and outcomes that land on the same
    clamped state are merged.

    Example:
        >>> table = OutageTable.from_values(10, oma1=0.25, oma2=0.5)
        >>> successors(AoIState(3, 5), 0, table, m=10)
        [(AoIState(delta1=1, delta2=6), 0.75), (AoIState(delta1=4, delta2=6), 0.25)]
    """
    inc1, inc2 = min(s.delta1 + 1, m), min(s.delta2 + 1, m)
    targets = (AoIState(1, 1), AoIState(1, inc2), AoIState(inc1, 1), AoIState(inc1, inc2))
    merged: dict[AoIState, float] = {}
    for target, mass in zip(targets, outcome_probabilities(a, outage), strict=True):
        if mass > 0.0:
            merged[target] = merged.get(target, 0.0) + mass
    return list(merged.items())


@dataclass(frozen=True)
class TransitionKernel:
    """Sparse transition law on the truncated grid.

    Args:
        m: Truncation bound; there are ``m*m`` states.
        actions: Actions in ascending order; row ``k`` of the arrays
            belongs to ``actions[k]``.
        next_state: ``(n_actions, n_states, 4)`` successor indices.
        prob: ``(n_actions, n_states, 4)`` successor masses (zero allowed).
    """

    m: int
    actions: tuple[int, ...]
    next_state: np.ndarray
    prob: np.ndarray

    def __post_init__(self) -> None:
        expected = (len(self.actions), self.m * self.m, N_OUTCOMES)
        if self.next_state.shape != expected or self.prob.shape != expected:
            raise ValueError(
                f"kernel arrays must have shape {expected}, got {self.next_state.shape} and {self.prob.shape}"
            )
        if list(self.actions) != sorted(set(self.actions)):
            raise ValueError(f"actions must be strictly ascending, got {self.actions}")
        self.next_state.setflags(write=False)
        self.prob.setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.m * self.m

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def action_index(self, a: int) -> int:
        try:
            return self.actions.index(a)
        except ValueError:
            raise ConfigError(f"action {a} not in kernel actions {self.actions}") from None

    def successors(self, s: AoIState, a: int) -> list[tuple[AoIState, float]]:
        """Nonzero successors of ``(s, a)``, duplicates merged."""
        k, i = self.action_index(a), s.index(self.m)
        merged: dict[int, float] = {}
        for j, p in zip(self.next_state[k, i], self.prob[k, i], strict=True):
            if p > 0.0:
                merged[int(j)] = merged.get(int(j), 0.0) + float(p)
        return [(AoIState.from_index(j, self.m), p) for j, p in merged.items()]

    def row_sums(self) -> np.ndarray:
        return self.prob.sum(axis=2)

    def is_stochastic(self, atol: float = STOCHASTIC_ATOL) -> bool:
        return bool(np.all(self.prob >= 0.0)) and bool(np.allclose(self.row_sums(), 1.0, rtol=0.0, atol=atol))

    def to_frame(self) -> pd.DataFrame:
        """One row per nonzero transition: ``delta1,delta2,action,next1,next2,prob``."""
        k, i, slot = np.nonzero(self.prob > 0.0)
        j = self.next_state[k, i, slot]
        return pd.DataFrame(
            {
                "delta1": i // self.m + 1,
                "delta2": i % self.m + 1,
                "action": np.asarray(self.actions)[k],
                "next1": j // self.m + 1,
                "next2": j % self.m + 1,
                "prob": self.prob[k, i, slot],
            }
        )

    def dump(self, path: Path) -> Path:
        """Write :meth:`to_frame` as CSV (debugging aid, not a stable format)."""
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.12g")
        return path

    @classmethod
    def from_rows(
        cls,
        m: int,
        rows: Mapping[tuple[AoIState, int], Sequence[tuple[AoIState, float]]],
    ) -> TransitionKernel:
        """Assemble a kernel from explicit successor lists (at most 4 each).

        Every ``(state, action)`` pair of the grid must be present.
        """
        actions = tuple(sorted({a for _, a in rows}))
        next_state = np.zeros((len(actions), m * m, N_OUTCOMES), dtype=np.int64)
        prob = np.zeros((len(actions), m * m, N_OUTCOMES))
        seen = np.zeros((len(actions), m * m), dtype=bool)
        for (s, a), succ in rows.items():
            if len(succ) > N_OUTCOMES:
                raise ValueError(f"at most {N_OUTCOMES} successors per pair, got {len(succ)} for {s}, a={a}")
            k, i = actions.index(a), s.index(m)
            seen[k, i] = True
            next_state[k, i, :] = i
            for slot, (target, p) in enumerate(succ):
                next_state[k, i, slot] = target.index(m)
                prob[k, i, slot] = p
        if not seen.all():
            raise ValueError("rows must cover every (state, action) pair of the grid")
        return cls(m=m, actions=actions, next_state=next_state, prob=prob)


def build_truncated_kernel(
    cfg: SystemConfig,
    outage: OutageTable,
    actions: Sequence[int] | None = None,
    *,
    max_entries: int = DEFAULT_MAX_KERNEL_ENTRIES,
) -> TransitionKernel:
    """Enumerate every truncated state under every action.

    Args:
        cfg: System configuration; ``cfg.m_trunc`` is the truncation bound.
        outage: Failure probabilities; must cover every requested action.
        actions: Action subset; defaults to all actions in ``outage``.
        max_entries: Cap on ``m*m * n_actions`` (memory guard).

    Raises:
        InstanceTooLargeError: If the kernel would exceed ``max_entries``.
        ConfigError: If an action is missing from ``outage``.
    """
    m = cfg.m_trunc
    acts = tuple(sorted(set(outage.actions if actions is None else actions)))
    if not acts:
        raise ConfigError("kernel needs at least one action")
    entries = m * m * len(acts)
    if entries > max_entries:
        raise InstanceTooLargeError(
            f"kernel with m={m} and {len(acts)} actions has {entries} (state, action) rows, "
            f"above the cap of {max_entries}; lower m_trunc or raise max_kernel_entries"
        )

    next_state = np.broadcast_to(outcome_targets(m), (len(acts), m * m, N_OUTCOMES)).copy()
    masses = np.array([outcome_probabilities(a, outage) for a in acts])  # (A, 4)
    prob = np.broadcast_to(masses[:, None, :], next_state.shape).copy()

    kernel = TransitionKernel(m=m, actions=acts, next_state=next_state, prob=prob)
    logger.debug("kernel built: m={}, actions={}, rows={}", m, acts, entries)
    return kernel
