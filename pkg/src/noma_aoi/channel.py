"""Physical layer: outage probabilities under Rayleigh fading.

The base station knows only channel statistics, so a transmission to
client *i* fails whenever its achievable rate falls below the common
target rate ``R``. With ``theta = 2**R - 1`` and channel power
``|h_i|^2 = d_i**(-tau) * Exp(1)``:

    OMA          P_i^O    = 1 - exp(-theta d_i^tau / rho)
    NOMA, far    P_2^N(a) = 1 - exp(-theta d_2^tau / (rho (a2 - a1 theta)))
    NOMA, near   P_1^N(a) = 1 - exp(-max{theta d_1^tau / (rho (a2 - a1 theta)),
                                         theta d_1^tau / (rho a1)})

where ``a2 = a / N`` is the far client's power share and ``a1 = 1 - a2``.
The near client must first decode (and cancel) the far client's message,
hence the ``max``.

Actions are integers ``a``: ``0`` is OMA to client 1, ``N`` is OMA to
client 2, anything in between is NOMA with share ``a / N`` to client 2.

The Monte-Carlo helpers sample fading gains and apply the same rate
events directly; they exist to validate the closed forms, not to drive
the system-level simulation.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np
import pandas as pd

from noma_aoi.config import SystemConfig
from noma_aoi.errors import ConfigError, InfeasibleActionError

# Guards float round-off in ceil/floor of exact integers (e.g. 10 * 1/2).
_INT_EPS = 1e-9


# ── action set ───────────────────────────────────────────────────────────────


def _theta(cfg: SystemConfig) -> float:
    """SNR threshold ``2**R - 1`` equivalent to the rate target."""
    return 2.0**cfg.rate - 1.0


def power_split(cfg: SystemConfig, a: int) -> tuple[float, float]:
    """Return ``(alpha1, alpha2)`` for action ``a``.

    Raises:
        InfeasibleActionError: If ``a`` is not an integer in ``[0, N]``.
    """
    n = cfg.n_levels
    if isinstance(a, bool) or not isinstance(a, (int, np.integer)) or not 0 <= a <= n:
        raise InfeasibleActionError(f"action must be an integer in [0, {n}], got {a!r}")
    return (n - int(a)) / n, int(a) / n


def _noma_gap(cfg: SystemConfig, a: int) -> float:
    """``alpha2 - alpha1 * theta``; the far message is decodable only when positive."""
    alpha1, alpha2 = power_split(cfg, a)
    return alpha2 - alpha1 * _theta(cfg)


def is_noma_feasible(cfg: SystemConfig, a: int) -> bool:
    """True when ``a`` is a valid NOMA split (both clients served)."""
    if not 0 < a < cfg.n_levels:
        return False
    _, alpha2 = power_split(cfg, a)
    return alpha2 > 0.5 and _noma_gap(cfg, a) > 0


def noma_lower_bound(cfg: SystemConfig) -> int:
    """Smallest candidate NOMA action, ``max{ceil(N/2)+1, ceil(theta N / 2**R)}``."""
    n = cfg.n_levels
    frac = _theta(cfg) / 2.0**cfg.rate
    return max(math.ceil(n / 2) + 1, math.ceil(n * frac - _INT_EPS))


def elimination_bound(cfg: SystemConfig) -> int:
    """Representative kept by action elimination, ``floor(2**R N / (2**R + 1))``.

    NOMA actions below it have both outages at least as high as at the
    representative, so they are dominated. Clamped up to
    :func:`noma_lower_bound` so elimination never adds actions.
    """
    two_r = 2.0**cfg.rate
    rep = math.floor(two_r * cfg.n_levels / (two_r + 1.0) + _INT_EPS)
    return max(rep, noma_lower_bound(cfg))


def noma_actions(cfg: SystemConfig, *, eliminate: bool = False) -> tuple[int, ...]:
    """NOMA actions (excluding the two OMA actions), ascending."""
    lo = elimination_bound(cfg) if eliminate else noma_lower_bound(cfg)
    return tuple(a for a in range(lo, cfg.n_levels) if is_noma_feasible(cfg, a))


def feasible_actions(cfg: SystemConfig, eliminate: bool = False) -> tuple[int, ...]:
    """Feasible action list ``{0} ∪ NOMA range ∪ {N}``, sorted ascending.

    An empty NOMA range is allowed: the result is then ``(0, N)``.

    Example:
        >>> feasible_actions(SystemConfig.from_db(snr_db=18.0))
        (0, 6, 7, 8, 9, 10)
    """
    return (0, *noma_actions(cfg, eliminate=eliminate), cfg.n_levels)


# ── closed-form outage ───────────────────────────────────────────────────────


def _outage(exponent: float) -> float:
    # 1 - exp(-x) without cancellation for small x
    return -math.expm1(-exponent)


def _distance(cfg: SystemConfig, client: int) -> float:
    if client == 1:
        return cfg.d1
    if client == 2:
        return cfg.d2
    raise ValueError(f"client must be 1 or 2, got {client!r}")


def oma_outage(cfg: SystemConfig, client: int) -> float:
    """Outage probability of ``client`` when served alone."""
    d = _distance(cfg, client)
    return _outage(_theta(cfg) * d**cfg.tau / cfg.rho)


def noma_outage_far(cfg: SystemConfig, a: int) -> float:
    """Outage probability of the far client (client 2) under split ``a``.

    The near client's signal is treated as interference. With ``a = N``
    (no power to client 1) this reduces exactly to ``oma_outage(cfg, 2)``.

    Raises:
        InfeasibleActionError: If ``alpha2 - alpha1 * theta <= 0``.
    """
    gap = _noma_gap(cfg, a)
    if gap <= 0:
        raise InfeasibleActionError(
            f"action {a} gives alpha2 - alpha1*(2^R-1) = {gap:.4g} <= 0; far message is undecodable"
        )
    return _outage(_theta(cfg) * cfg.d2**cfg.tau / (cfg.rho * gap))


def noma_outage_near(cfg: SystemConfig, a: int) -> float:
    """Outage probability of the near client (client 1) under split ``a``.

    Success needs both SIC stages: decode the far message treating its own
    as interference, then decode its own message interference-free.

    Raises:
        InfeasibleActionError: If the far message is undecodable or
            ``alpha1 = 0`` (``a = N`` leaves nothing for client 1).
    """
    alpha1, _ = power_split(cfg, a)
    if alpha1 <= 0:
        raise InfeasibleActionError(f"action {a} allocates no power to client 1")
    gap = _noma_gap(cfg, a)
    if gap <= 0:
        raise InfeasibleActionError(
            f"action {a} gives alpha2 - alpha1*(2^R-1) = {gap:.4g} <= 0; SIC cannot start"
        )
    base = _theta(cfg) * cfg.d1**cfg.tau / cfg.rho
    return _outage(max(base / gap, base / alpha1))


# ── outage table ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class OutageTable:
    """Per-action failure probabilities ``(p_fail_1, p_fail_2)``.

    A client that is not served by an OMA action fails with probability 1;
    :meth:`entry` reports those slots as ``None`` (not applicable).

    Args:
        n_levels: Power quantization count ``N`` the actions refer to.
        fail: Mapping ``action -> (p_fail_1, p_fail_2)``.
    """

    n_levels: int
    fail: Mapping[int, tuple[float, float]] = field(repr=False)

    def __post_init__(self) -> None:
        frozen: dict[int, tuple[float, float]] = {}
        for a, (p1, p2) in sorted(self.fail.items()):
            if not 0 <= a <= self.n_levels:
                raise ValueError(f"action {a} outside [0, {self.n_levels}]")
            for p in (p1, p2):
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"failure probability must lie in [0, 1], got {p!r} for action {a}")
            if a == 0 and p2 != 1.0:
                raise ValueError("action 0 serves client 1 only; p_fail_2 must be 1")
            if a == self.n_levels and p1 != 1.0:
                raise ValueError("action N serves client 2 only; p_fail_1 must be 1")
            frozen[int(a)] = (float(p1), float(p2))
        object.__setattr__(self, "fail", MappingProxyType(frozen))

    @classmethod
    def from_values(
        cls,
        n_levels: int,
        *,
        oma1: float,
        oma2: float,
        noma: Mapping[int, tuple[float, float]] | None = None,
    ) -> OutageTable:
        """Assemble a table from raw numbers (handy for degenerate channels)."""
        fail = {0: (oma1, 1.0), n_levels: (1.0, oma2)}
        fail.update(noma or {})
        return cls(n_levels=n_levels, fail=fail)

    @property
    def actions(self) -> tuple[int, ...]:
        return tuple(self.fail)

    def is_oma(self, a: int) -> bool:
        return a in (0, self.n_levels)

    def p_fail(self, a: int) -> tuple[float, float]:
        """Failure probabilities of both clients under ``a``.

        Raises:
            ConfigError: If the table has no entry for ``a``.
        """
        try:
            return self.fail[a]
        except KeyError:
            raise ConfigError(f"outage table has no entry for action {a}; known: {self.actions}") from None

    def entry(self, a: int) -> tuple[float | None, float | None]:
        """Like :meth:`p_fail` but with ``None`` for the unserved client."""
        p1, p2 = self.p_fail(a)
        if a == 0:
            return p1, None
        if a == self.n_levels:
            return None, p2
        return p1, p2

    def far_strictly_decreasing(self) -> bool:
        """True when ``P_2^N`` strictly decreases over the NOMA actions."""
        far = [self.fail[a][1] for a in self.actions if not self.is_oma(a)]
        return all(b < a for a, b in zip(far, far[1:], strict=False))

    def as_frame(self) -> pd.DataFrame:
        """One row per action; not-applicable entries are NaN."""
        rows = []
        for a in self.actions:
            p1, p2 = self.entry(a)
            mode = "NOMA" if not self.is_oma(a) else "OMA"
            rows.append({"action": a, "mode": mode, "p_fail_1": p1, "p_fail_2": p2})
        return pd.DataFrame(rows, columns=["action", "mode", "p_fail_1", "p_fail_2"]).astype(
            {"p_fail_1": float, "p_fail_2": float}
        )


def compute_outage_table(cfg: SystemConfig, actions: tuple[int, ...] | None = None) -> OutageTable:
    """Evaluate the closed forms once for every action.

    Defaults to the unreduced feasible set, which covers every restriction
    and the eliminated set.
    """
    acts = feasible_actions(cfg) if actions is None else actions
    n = cfg.n_levels
    fail: dict[int, tuple[float, float]] = {}
    for a in acts:
        if a == 0:
            fail[a] = (oma_outage(cfg, 1), 1.0)
        elif a == n:
            fail[a] = (1.0, oma_outage(cfg, 2))
        else:
            fail[a] = (noma_outage_near(cfg, a), noma_outage_far(cfg, a))
    return OutageTable(n_levels=n, fail=fail)


# ── Monte-Carlo oracle ───────────────────────────────────────────────────────


def sample_channel_power(
    cfg: SystemConfig,
    client: int,
    rng: np.random.Generator,
    size: int | None = None,
) -> float | np.ndarray:
    """Draw ``|h_i|^2 = d_i**(-tau) * Exp(1)`` (Rayleigh fading power).

    Only ``rng`` is mutated. Returns a float when ``size`` is ``None``.
    """
    scale = _distance(cfg, client) ** (-cfg.tau)
    draw = rng.exponential(1.0, size)
    if size is None:
        return float(draw) * scale
    return draw * scale


def binomial_stderr(p: float, n: int) -> float:
    """Standard error of an empirical frequency with ``n`` trials."""
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


@dataclass(frozen=True)
class MonteCarloOutage:
    """Empirical failure frequencies for one action (``None`` when unserved)."""

    action: int
    n_samples: int
    p_fail_1: float | None
    p_fail_2: float | None

    def stderr(self, client: int) -> float:
        p = self.p_fail_1 if client == 1 else self.p_fail_2
        if p is None:
            raise ValueError(f"client {client} is not served by action {self.action}")
        return binomial_stderr(p, self.n_samples)

    def agrees_with(self, table: OutageTable, n_sigma: float = 3.0) -> bool:
        """Compare against closed forms within ``n_sigma`` binomial standard errors."""
        for client, estimate, exact in (
            (1, self.p_fail_1, table.entry(self.action)[0]),
            (2, self.p_fail_2, table.entry(self.action)[1]),
        ):
            if estimate is None or exact is None:
                continue
            # floor the band for probabilities that are ~0 or ~1
            band = n_sigma * max(binomial_stderr(exact, self.n_samples), 1.0 / self.n_samples)
            if abs(estimate - exact) > band:
                return False
        return True


def monte_carlo_outage(
    cfg: SystemConfig,
    a: int,
    n_samples: int,
    rng: np.random.Generator,
    *,
    chunk: int = 1_000_000,
) -> MonteCarloOutage:
    """Estimate failure frequencies of action ``a`` by sampling fading gains.

    Rate events are checked as SINR thresholds (``log2(1+g) < R`` iff
    ``g < 2**R - 1``):

    * OMA: ``rho |h_i|^2 < theta``.
    * NOMA far: ``a2|h2|^2 / (a1|h2|^2 + 1/rho) < theta``.
    * NOMA near: the same test on ``|h1|^2`` (SIC stage) or
      ``a1 |h1|^2 rho < theta`` (own message).

    Both gains are drawn in every chunk regardless of ``a`` so a given
    seed produces the same gain sequence for every action.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples!r}")
    alpha1, alpha2 = power_split(cfg, a)
    theta = _theta(cfg)
    inv_rho = 1.0 / cfg.rho
    n = cfg.n_levels
    fails1 = fails2 = 0
    remaining = n_samples
    while remaining > 0:
        size = min(chunk, remaining)
        g1 = sample_channel_power(cfg, 1, rng, size)
        g2 = sample_channel_power(cfg, 2, rng, size)
        if a == 0:
            fails1 += int(np.count_nonzero(cfg.rho * g1 < theta))
        elif a == n:
            fails2 += int(np.count_nonzero(cfg.rho * g2 < theta))
        else:
            sinr22 = alpha2 * g2 / (alpha1 * g2 + inv_rho)
            sinr12 = alpha2 * g1 / (alpha1 * g1 + inv_rho)
            sinr11 = alpha1 * g1 * cfg.rho
            fails2 += int(np.count_nonzero(sinr22 < theta))
            fails1 += int(np.count_nonzero((sinr12 < theta) | (sinr11 < theta)))
        remaining -= size
    return MonteCarloOutage(
        action=a,
        n_samples=n_samples,
        p_fail_1=None if a == n else fails1 / n_samples,
        p_fail_2=None if a == 0 else fails2 / n_samples,
    )
