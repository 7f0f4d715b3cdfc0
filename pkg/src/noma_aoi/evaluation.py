"""Policy evaluation: truncated Markov chain and slot-level simulation.

Analytic route: follow a fixed policy on the ``m x m`` grid (ages that
would leave the grid are clamped, so escaped mass stays on the successor
with the same success pattern), find the stationary distribution and
average the weighted age over it. Ages really do grow past ``m``, so this
value approximates the true one from below.

Simulation route: run the untruncated age recursion slot by slot with
Bernoulli successes drawn from the outage table.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.sparse import csgraph, linalg

from noma_aoi.channel import OutageTable
from noma_aoi.config import SystemConfig
from noma_aoi.errors import SteadyStateError
from noma_aoi.mdp import outcome_probabilities, outcome_targets, reward_vector
from noma_aoi.policies import PolicyTable
from noma_aoi.utils.seed import SeedConfig

STATIONARY_TOL = 1e-10
_POWER_MAX_ITER = 500_000
_ESCAPE_WARN = 1e-4
_SIM_CHUNK = 65_536
DEFAULT_BATCHES = 20


# ── analytic evaluation ──────────────────────────────────────────────────────


def policy_chain(p: PolicyTable, outage: OutageTable) -> sparse.csr_array:
    """Row-stochastic chain on the ``m x m`` grid induced by ``p``.

    Raises:
        ConfigError: If ``p`` uses an action missing from ``outage``.
    """
    m = p.m
    n = m * m
    masses_by_action = {a: outcome_probabilities(a, outage) for a in p.used_actions()}
    masses = np.array([masses_by_action[int(a)] for a in p.flat()])  # (S, 4)
    targets = outcome_targets(m)
    rows = np.repeat(np.arange(n), targets.shape[1])
    chain = sparse.csr_array((masses.ravel(), (rows, targets.ravel())), shape=(n, n))
    chain.sum_duplicates()
    chain.eliminate_zeros()
    return chain


@dataclass(frozen=True)
class SteadyState:
    """Stationary distribution of a policy chain.

    ``m`` is ``None`` when the chain is not laid out on an age grid.
    """

    theta: np.ndarray
    residual: float
    m: int | None = None

    def __post_init__(self) -> None:
        self.theta.setflags(write=False)

    def mass_at(self, delta1: int, delta2: int) -> float:
        if self.m is None:
            raise ValueError("chain has no age-grid layout")
        return float(self.theta[(delta1 - 1) * self.m + (delta2 - 1)])


def _grid_side(n: int) -> int | None:
    side = math.isqrt(n)
    return side if side * side == n else None


def closed_classes(chain: sparse.csr_array) -> list[np.ndarray]:
    """State sets of the closed communicating classes of ``chain``."""
    n_comp, labels = csgraph.connected_components(chain, directed=True, connection="strong")
    coo = chain.tocoo()
    leaves = labels[coo.row] != labels[coo.col]
    open_labels = set(np.unique(labels[coo.row[leaves]]).tolist())
    return [np.flatnonzero(labels == c) for c in range(n_comp) if c not in open_labels]


def _residual(chain: sparse.csr_array, theta: np.ndarray) -> float:
    return float(np.abs(chain.T @ theta - theta).max())


def _direct_solve(chain: sparse.csr_array) -> np.ndarray:
    n = chain.shape[0]
    system = (chain.T - sparse.eye_array(n, format="csr")).tolil()
    system[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    theta = linalg.spsolve(system.tocsc(), rhs)
    theta = np.clip(theta, 0.0, None)
    return theta / theta.sum()


def steady_state(chain: sparse.csr_array, *, tol: float = STATIONARY_TOL) -> SteadyState:
    """Stationary distribution ``theta`` with ``theta P = theta``.

    Power iteration runs on the lazy chain ``(I + P) / 2``, which has the
    same stationary law and is aperiodic, so periodic chains (error-free
    OMA alternation) are fine. A sparse direct solve takes over if power
    iteration stalls.

    Raises:
        SteadyStateError: If the chain has more than one closed class or no
            solve reaches ``tol``.
    """
    chain = sparse.csr_array(chain)
    n = chain.shape[0]
    closed = closed_classes(chain)
    if len(closed) > 1:
        sizes = ", ".join(str(len(c)) for c in closed[:5])
        raise SteadyStateError(
            f"chain has {len(closed)} closed classes (sizes {sizes}); stationary law is not unique"
        )

    transposed = chain.T.tocsr()
    theta = np.full(n, 1.0 / n)
    residual = np.inf
    it = 0
    while it < _POWER_MAX_ITER:
        moved = transposed @ theta
        residual = float(np.abs(moved - theta).max())
        if residual < tol:
            break
        theta = 0.5 * (theta + moved)
        theta /= theta.sum()
        it += 1

    if residual >= tol:
        logger.debug("power iteration stalled at residual {:.2e}; solving directly", residual)
        theta = _direct_solve(chain)
        residual = _residual(chain, theta)
        if residual >= tol:
            raise SteadyStateError(f"stationary residual {residual:.2e} above {tol:.1e} after direct solve")
    else:
        logger.debug("power iteration converged in {} steps (residual {:.2e})", it, residual)

    return SteadyState(theta=theta, residual=residual, m=_grid_side(n))


def weighted_aoi_analytic(theta: SteadyState, weights: tuple[float, float]) -> float:
    """Stationary mean of ``w1*delta1 + w2*delta2`` on the truncated grid."""
    if theta.m is None:
        raise ValueError("chain has no age-grid layout")
    return float(theta.theta @ reward_vector(theta.m, *weights))


def evaluate_policy(p: PolicyTable, outage: OutageTable, weights: tuple[float, float]) -> float:
    """Analytic weighted AoI of ``p`` in one call."""
    return weighted_aoi_analytic(steady_state(policy_chain(p, outage)), weights)


# ── simulation ───────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SimReport:
    """Time averages of one simulated run.

    ``escape_freq`` is the fraction of slots in which some age lay beyond
    the policy grid. ``stderr`` is the batch-means standard error of
    ``avg_weighted_aoi`` (NaN with fewer than two batches).
    """

    horizon: int
    seed: int
    avg_weighted_aoi: float
    per_client_avg_aoi: tuple[float, float]
    success_counts: tuple[int, int]
    action_histogram: dict[int, int] = field(default_factory=dict)
    escape_freq: float = 0.0
    stderr: float = float("nan")

    def to_record(self) -> str:
        """``key=value`` lines, stable key order."""
        hist = ",".join(f"{a}:{c}" for a, c in sorted(self.action_histogram.items()))
        pairs = [
            ("horizon", str(self.horizon)),
            ("seed", str(self.seed)),
            ("avg_weighted_aoi", f"{self.avg_weighted_aoi:.10g}"),
            ("avg_aoi_1", f"{self.per_client_avg_aoi[0]:.10g}"),
            ("avg_aoi_2", f"{self.per_client_avg_aoi[1]:.10g}"),
            ("successes_1", str(self.success_counts[0])),
            ("successes_2", str(self.success_counts[1])),
            ("action_histogram", hist),
            ("escape_freq", f"{self.escape_freq:.6g}"),
            ("stderr", f"{self.stderr:.6g}"),
        ]
        return "\n".join(f"{k}={v}" for k, v in pairs) + "\n"


Policy = PolicyTable | Callable[[int, int], int]


def simulate(
    p: Policy,
    cfg: SystemConfig,
    outage: OutageTable,
    horizon: int,
    seed: int,
    *,
    n_batches: int = DEFAULT_BATCHES,
) -> SimReport:
    """Run the age recursion for ``horizon`` slots from ``(1, 1)``.

    Each slot charges ``w1*delta1 + w2*delta2`` on the current ages, asks
    the policy for an action (ages beyond a table's grid are looked up at
    its edge), then draws independent successes for the served clients.

    Args:
        p: Policy table or ``(delta1, delta2) -> action`` callable.
        cfg: Weights and, for callables, the grid size used for escapes.
        outage: Failure probabilities for every action the policy uses.
        horizon: Number of slots, at least 1.
        seed: Explicit RNG seed.
        n_batches: Batches for the batch-means standard error.

    Raises:
        ValueError: On a horizon below 1 or a seed that is not a non-negative integer.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon!r}")
    rng = SeedConfig(seed).rng()

    if isinstance(p, PolicyTable):
        m = p.m
        grid = p.actions.tolist()

        def choose(d1: int, d2: int) -> int:
            return grid[min(d1, m) - 1][min(d2, m) - 1]

    else:
        m = cfg.m_trunc
        choose = p

    fail: dict[int, tuple[float, float]] = {}
    hist: dict[int, int] = {}
    w1, w2 = cfg.weights
    batch_len = max(horizon // n_batches, 1)
    batch_means: list[float] = []
    batch_sum = 0.0

    d1 = d2 = 1
    sum1 = sum2 = 0
    wins1 = wins2 = 0
    escapes = 0
    t = 0
    while t < horizon:
        draws = rng.random((min(_SIM_CHUNK, horizon - t), 2)).tolist()
        for u1, u2 in draws:
            sum1 += d1
            sum2 += d2
            batch_sum += w1 * d1 + w2 * d2
            if d1 > m or d2 > m:
                escapes += 1
            a = int(choose(d1, d2))
            hist[a] = hist.get(a, 0) + 1
            if a not in fail:
                fail[a] = outage.p_fail(a)
            p1, p2 = fail[a]
            if u1 >= p1:
                wins1 += 1
                d1 = 1
            else:
                d1 += 1
            if u2 >= p2:
                wins2 += 1
                d2 = 1
            else:
                d2 += 1
            t += 1
            if t % batch_len == 0 and len(batch_means) < n_batches - 1:
                batch_means.append(batch_sum / batch_len)
                batch_sum = 0.0

    last_len = horizon - batch_len * len(batch_means)
    if last_len > 0:
        batch_means.append(batch_sum / last_len)
    stderr = float(np.std(batch_means, ddof=1) / math.sqrt(len(batch_means))) if len(batch_means) > 1 else float("nan")

    avg1, avg2 = sum1 / horizon, sum2 / horizon
    escape_freq = escapes / horizon
    if escape_freq > _ESCAPE_WARN:
        logger.warning("ages left the {}x{} grid in {:.2e} of slots", m, m, escape_freq)
    return SimReport(
        horizon=horizon,
        seed=seed,
        avg_weighted_aoi=w1 * avg1 + w2 * avg2,
        per_client_avg_aoi=(avg1, avg2),
        success_counts=(wins1, wins2),
        action_histogram=dict(sorted(hist.items())),
        escape_freq=escape_freq,
        stderr=stderr,
    )
