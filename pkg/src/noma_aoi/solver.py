"""Average-cost solvers on the truncated kernel.

``rvi_solve`` runs synchronous relative value iteration on

    J* + h(s) = w1*delta1 + w2*delta2 + min_a sum_s' p(s'|s, a) h(s')

with ``h`` pinned to 0 at a reference state. ``enumerate_policies_oracle``
is the brute-force check used on tiny grids: it evaluates every
deterministic stationary policy exactly and keeps the cheapest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger

from noma_aoi.config import PolicyKind
from noma_aoi.errors import ConfigError, InstanceTooLargeError
from noma_aoi.mdp import AoIState, TransitionKernel, reward_vector
from noma_aoi.policies import PolicyTable, argmin_smallest

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1_000_000
_LOG_EVERY = 10_000

ORACLE_MAX_M = 3
ORACLE_MAX_ACTIONS = 6
_ORACLE_CHUNK = 16_384
_SINGULAR_DET = 1e-12
_CESARO_SQUARINGS = 60


@dataclass(frozen=True)
class SolverResult:
    """Outcome of :func:`rvi_solve`.

    Args:
        j_star: Optimal average cost per slot.
        h: Differential values in state-index order, ``h[reference] == 0``.
        policy: Greedy policy extracted from ``h``.
        iterations: Bellman updates performed.
        final_span: Span of the last value increment.
        converged: False when ``max_iter`` ran out first.
        j_bounds: ``(lower, upper)`` bounds on the optimal average cost from
            the last Bellman difference.
    """

    j_star: float
    h: np.ndarray
    policy: PolicyTable
    iterations: int
    final_span: float
    converged: bool
    j_bounds: tuple[float, float]


def span(v: np.ndarray) -> float:
    """``max(v) - min(v)``; a seminorm, blind to constant shifts."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("span of an empty vector is undefined")
    return float(v.max() - v.min())


def _check_weights(weights: tuple[float, float]) -> tuple[float, float]:
    w1, w2 = weights
    if w1 <= 0 or w2 <= 0 or abs(w1 + w2 - 1.0) > 1e-9:
        raise ConfigError(f"weights must be positive and sum to 1, got {weights!r}")
    return float(w1), float(w2)


def q_values(kernel: TransitionKernel, v: np.ndarray, weights: tuple[float, float]) -> np.ndarray:
    """State-action values ``r(s) + E[v(s') | s, a]`` with shape ``(n_actions, n_states)``.

    The four outcome terms are summed in their fixed slot order.
    """
    r = reward_vector(kernel.m, *weights)
    return r[None, :] + (kernel.prob * v[kernel.next_state]).sum(axis=2)


def greedy_policy(
    kernel: TransitionKernel,
    h: np.ndarray,
    weights: tuple[float, float],
    kind: PolicyKind = PolicyKind.OPTIMAL_ADAPTIVE,
) -> PolicyTable:
    """Policy minimizing the one-step lookahead on ``h``; ties -> smallest action."""
    flat = argmin_smallest(q_values(kernel, h, weights), kernel.actions)
    return PolicyTable.from_flat(kernel.m, flat, kind=kind)


def rvi_solve(
    kernel: TransitionKernel,
    weights: tuple[float, float],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    reference: AoIState = AoIState(1, 1),  # noqa: B008
    *,
    step_size: float = 1.0,
    kind: PolicyKind = PolicyKind.OPTIMAL_ADAPTIVE,
) -> SolverResult:
    """Relative value iteration with synchronous updates.

    Each sweep computes ``Tv`` for every state from the previous iterate,
    moves ``v`` by ``step_size * (Tv - v)`` and subtracts the reference
    value. Iteration stops when the span of that increment drops below
    ``tol``.

    A ``step_size`` below 1 mixes in a self-loop, which leaves the optimal
    policy and average cost unchanged and lets the iteration settle on
    nearly periodic chains (error-free OMA alternation at very high SNR).

    Args:
        kernel: Truncated transition law.
        weights: ``(w1, w2)``, positive and summing to 1.
        tol: Stopping threshold on the increment span.
        max_iter: Iteration cap; hitting it returns ``converged=False``.
        reference: State whose differential value is pinned to 0.
        step_size: Relaxation factor in ``(0, 1]``.
        kind: Tag for the returned policy.

    Raises:
        ConfigError: On invalid ``tol``, ``max_iter``, ``step_size`` or weights.
    """
    if tol <= 0:
        raise ConfigError(f"tol must be positive, got {tol!r}")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be at least 1, got {max_iter!r}")
    if not 0 < step_size <= 1:
        raise ConfigError(f"step_size must lie in (0, 1], got {step_size!r}")
    weights = _check_weights(weights)
    ref = reference.index(kernel.m)

    v = np.zeros(kernel.n_states)
    diff = np.zeros_like(v)
    increment = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        tv = q_values(kernel, v, weights).min(axis=0)
        diff = tv - v
        increment = step_size * span(diff)
        if increment < tol:
            converged = True
            break
        w = v + step_size * diff
        v = w - w[ref]
        if it % _LOG_EVERY == 0:
            logger.debug("rvi iter {}: span={:.3e}, J in [{:.9f}, {:.9f}]", it, increment, diff.min(), diff.max())

    if not converged:
        logger.warning(
            "rvi stopped after {} iterations with span {:.3e} (tol {:.1e}); result is not converged",
            it,
            increment,
            tol,
        )
    else:
        logger.debug("rvi converged in {} iterations, J*={:.9f}", it, diff[ref])

    h = v.copy()
    h.setflags(write=False)
    return SolverResult(
        j_star=float(diff[ref]),
        h=h,
        policy=greedy_policy(kernel, h, weights, kind=kind),
        iterations=it,
        final_span=float(increment),
        converged=converged,
        j_bounds=(float(diff.min()), float(diff.max())),
    )


# ── brute-force oracle ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class OracleResult:
    best_cost: float
    best_policy: PolicyTable
    n_policies: int


def dense_kernel(kernel: TransitionKernel) -> np.ndarray:
    """``(n_actions, n_states, n_states)`` transition matrices; small grids only."""
    n_a, n_s = kernel.n_actions, kernel.n_states
    dense = np.zeros((n_a, n_s, n_s))
    rows = np.broadcast_to(np.arange(n_s)[None, :, None], kernel.next_state.shape)
    acts = np.broadcast_to(np.arange(n_a)[:, None, None], kernel.next_state.shape)
    np.add.at(dense, (acts, rows, kernel.next_state), kernel.prob)
    return dense


def _stationary_costs(chains: np.ndarray, r: np.ndarray, ref: int) -> np.ndarray:
    """Long-run average cost from ``ref`` for a batch of chains ``(B, S, S)``."""
    n_b, n_s, _ = chains.shape
    system = np.transpose(chains, (0, 2, 1)) - np.eye(n_s)
    system[:, -1, :] = 1.0
    costs = np.empty(n_b)

    regular = np.abs(np.linalg.det(system)) > _SINGULAR_DET
    if regular.any():
        rhs = np.zeros((int(regular.sum()), n_s, 1))
        rhs[:, -1, 0] = 1.0
        theta = np.linalg.solve(system[regular], rhs)[..., 0]
        costs[regular] = theta @ r

    # several closed classes: Cesaro limit of the lazy chain started at ref
    if (~regular).any():
        lazy = 0.5 * (chains[~regular] + np.eye(n_s))
        for _ in range(_CESARO_SQUARINGS):
            lazy = lazy @ lazy
        costs[~regular] = lazy[:, ref, :] @ r
    return costs


def enumerate_policies_oracle(
    kernel: TransitionKernel,
    weights: tuple[float, float],
    reference: AoIState = AoIState(1, 1),  # noqa: B008
) -> OracleResult:
    """Exact average cost of every stationary deterministic policy; keep the best.

    Policies are enumerated as mixed-radix numbers over the state index
    (state 0 most significant), so among exact ties the first policy in
    that order wins. Chains with more than one closed class are charged
    their long-run cost from ``reference``.

    Raises:
        InstanceTooLargeError: If ``m > 3`` or there are more than 6 actions.
    """
    if kernel.m > ORACLE_MAX_M or kernel.n_actions > ORACLE_MAX_ACTIONS:
        raise InstanceTooLargeError(
            f"policy enumeration needs m <= {ORACLE_MAX_M} and at most {ORACLE_MAX_ACTIONS} actions, "
            f"got m={kernel.m} with {kernel.n_actions} actions"
        )
    weights = _check_weights(weights)
    n_a, n_s = kernel.n_actions, kernel.n_states
    dense = dense_kernel(kernel)
    r = reward_vector(kernel.m, *weights)
    ref = reference.index(kernel.m)
    radix = n_a ** np.arange(n_s - 1, -1, -1)
    total = n_a**n_s

    best_cost, best_code = np.inf, 0
    for start in range(0, total, _ORACLE_CHUNK):
        codes = np.arange(start, min(start + _ORACLE_CHUNK, total))
        digits = (codes[:, None] // radix[None, :]) % n_a  # (B, S)
        chains = dense[digits, np.arange(n_s)[None, :]]  # (B, S, S)
        costs = _stationary_costs(chains, r, ref)
        k = int(np.argmin(costs))
        if costs[k] < best_cost:
            best_cost, best_code = float(costs[k]), int(codes[k])

    digits = (best_code // radix) % n_a
    policy = PolicyTable.from_flat(kernel.m, np.asarray(kernel.actions)[digits])
    logger.debug("oracle scanned {} policies, best cost {:.9f}", total, best_cost)
    return OracleResult(best_cost=best_cost, best_policy=policy, n_policies=total)
