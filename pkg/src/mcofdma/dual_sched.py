"""Ergodic sum-rate scheduling by dual subgradient iteration.

The scheduler maximises the long-run sum rate subject to an average power
budget per cell and a proportional rate share per user. Per-cell
multipliers ``lam`` price power and per-user multipliers ``mu`` weight
rates. Given the multipliers, the per-slot problem splits into one
independent problem per carrier: choose the user vector ``u_m`` (one user
or nobody per cell) and the power vector ``p_m`` maximising

    sum over busy q of  w[u_m[q]] * rate_q(p_m) - lam[q] * p_m[q]

with rate weight ``w[k] = 1 + mu[k] - mu . phi``. After every slot the
multipliers take a projected subgradient step driven by exponentially
averaged power and rate measurements.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, EnumerationCapError
from .metrics import OUTAGE_RTOL, SlotAllocation, delivered_link_rates
from .scenario import ChannelRealization

__all__ = [
    "DualState",
    "DualSchedConfig",
    "DualRun",
    "default_power_grid",
    "rate_weight",
    "rate_weights",
    "carrier_metric",
    "power_alloc_grid",
    "select_exhaustive",
    "select_opportunistic",
    "subgradient_update",
    "run_dual_scheduler",
]


@dataclass(frozen=True)
class DualState:
    lam: np.ndarray
    mu: np.ndarray
    epsilon: float = 1e-6
    delta_lambda: float = 0.05
    delta_mu: float = 0.05

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.delta_lambda <= 0 or self.delta_mu <= 0:
            raise ValueError("step sizes must be > 0")
        if np.any(lam < self.epsilon) or np.any(mu < 0):
            raise ValueError("multipliers violate lam >= epsilon, mu >= 0")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def initial(cls, Q: int, K: int, **kwargs) -> "DualState":
        eps = kwargs.get("epsilon", 1e-6)
        return cls(lam=np.full(Q, eps), mu=np.zeros(K), **kwargs)


def default_power_grid(p_max: float, n_levels: int = 8, span: float = 1e-3) -> np.ndarray:
    """Zero plus ``n_levels`` log-spaced levels from ``span * p_max`` to ``p_max``."""
    return np.concatenate([[0.0], np.geomspace(span * p_max, p_max, n_levels)])


@dataclass(frozen=True)
class DualSchedConfig:
    """Scheduler settings.

    ``P_bar`` is the per-cell average power budget summed over carriers
    (scalar or one value per cell). ``V`` is the ``(M, Q)`` preassigned
    power matrix used by the opportunistic selector.
    """

    phi: np.ndarray
    P_bar: float | np.ndarray
    N: int
    power_grid: np.ndarray
    selection_mode: str = "exhaustive"
    V: np.ndarray | None = None
    beta: float = 0.01
    enum_cap: int = 10**6

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        grid = np.array(self.power_grid, dtype=float)
        if np.any(phi < 0) or not math.isclose(phi.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ConfigurationError("phi must be nonnegative and sum to 1", key="phi")
        if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            raise ConfigurationError("power_grid must be ascending, unique and start at 0",
                                     key="power_grid")
        if self.selection_mode not in ("exhaustive", "opportunistic"):
            raise ConfigurationError(f"unknown selection_mode {self.selection_mode!r}",
                                     key="selection_mode")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigurationError("beta must lie in (0, 1]", key="beta")
        if int(self.N) < 1:
            raise ConfigurationError("N must be >= 1", key="N")
        if np.any(np.asarray(self.P_bar, dtype=float) <= 0):
            raise ConfigurationError("P_bar must be > 0", key="P_bar")
        if self.selection_mode == "opportunistic" and self.V is None:
            raise ConfigurationError("opportunistic selection needs V", key="V")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "power_grid", grid)
        if self.V is not None:
            object.__setattr__(self, "V", np.array(self.V, dtype=float))


def rate_weights(state: DualState, phi) -> np.ndarray:
    """``1 + mu[k] - mu . phi`` for every user; may be negative."""
    return 1.0 + state.mu - float(np.dot(state.mu, phi))


def rate_weight(state: DualState, phi, k: int) -> float:
    return float(rate_weights(state, phi)[k])


def carrier_metric(ch: ChannelRealization, m: int, u_m, p_m, state: DualState, phi) -> float:
    """Weighted rate minus priced power on carrier ``m`` for one ``(u_m, p_m)``."""
    u_m = np.asarray(u_m, dtype=int)
    p_m = np.asarray(p_m, dtype=float)
    if np.any(p_m[u_m < 0] != 0):
        raise ValueError("idle cells must carry zero power")
    table = _metric_table(ch, m, u_m[None], p_m[None], rate_weights(state, phi), state.lam)
    return float(table[0, 0])


def _metric_table(ch, m, U, P, w, lam):
    """Metric for every (user vector, power vector) pair, shape (nU, nP).

    Pairs that give power to an idle cell are ``-inf``.
    """
    G = ch.gains[:, m, :]
    Q = G.shape[1]
    rx = G[:, None, :] * P[None, :, :]                      # (K, nP, Q)
    out = np.zeros((len(U), len(P)))
    invalid = np.zeros(out.shape, dtype=bool)
    for q in range(Q):
        interf = np.zeros(rx.shape[:2])
        for j in range(Q):
            if j != q:
                interf += rx[:, :, j]
        r = np.log2(1.0 + rx[:, :, q] / (interf + ch.noise_power))
        value = w[:, None] * r - lam[q] * P[None, :, q]    # (K, nP)
        users = U[:, q]
        busy = users >= 0
        out[busy] += value[users[busy]]
        invalid[~busy] |= P[None, :, q] != 0
    out[invalid] = -np.inf
    return out


@lru_cache(maxsize=64)
def _product(values: tuple, Q: int) -> np.ndarray:
    combos = list(itertools.product(values, repeat=Q))
    return np.array(combos, dtype=float).reshape(len(combos), Q)


def _user_vectors(K, Q, candidate_users=None):
    if candidate_users is None:
        return _product(tuple(range(-1, K)), Q).astype(int)
    options = [[-1] + sorted(int(k) for k in c) for c in candidate_users]
    combos = list(itertools.product(*options))
    return np.array(combos, dtype=int).reshape(len(combos), Q)


def power_alloc_grid(ch: ChannelRealization, m: int, u_m, state: DualState, phi, grid,
                     enum_cap: int = 10**6):
    """Best power vector on the grid for a fixed user vector.

    Idle cells stay at zero power; busy cells try every grid level. Ties go
    to the lexicographically smallest power vector. Returns
    ``(p_m, metric)``.
    """
    u_m = np.asarray(u_m, dtype=int)
    grid = np.asarray(grid, dtype=float)
    n_active = int(np.count_nonzero(u_m >= 0))
    if grid.size ** n_active > enum_cap:
        raise EnumerationCapError(
            f"{grid.size}^{n_active} power vectors exceed the cap of {enum_cap}; "
            "use a smaller power grid or opportunistic selection")
    sub = _product(tuple(grid), n_active)
    P = np.zeros((len(sub), len(u_m)))
    P[:, u_m >= 0] = sub
    table = _metric_table(ch, m, u_m[None], P, rate_weights(state, phi), state.lam)
    j = int(np.argmax(table[0]))
    return P[j], carrier_metric(ch, m, u_m, P[j], state, phi)


def select_exhaustive(ch: ChannelRealization, m: int, state: DualState, phi, grid,
                      candidate_users=None, enum_cap: int = 10**6):
    """Jointly best user and power vectors on carrier ``m``.

    Every user vector (each cell: nobody or one of its candidates, all
    users by default) is paired with its best grid power vector; the best
    pair wins, ties going to the lexicographically smallest user vector.
    Returns ``(u_m, p_m, metric)``.
    """
    Q, K = ch.Q, ch.K
    grid = np.asarray(grid, dtype=float)
    U = _user_vectors(K, Q, candidate_users)
    if len(U) * grid.size ** Q > enum_cap:
        raise EnumerationCapError(
            f"{len(U)} user vectors x {grid.size}^{Q} power vectors exceed the cap of "
            f"{enum_cap}; use a smaller power grid or opportunistic selection")
    P = _product(tuple(grid), Q)
    w = rate_weights(state, phi)
    best_val = -np.inf
    best = None
    chunk = max(1, 2_000_000 // (len(P) * Q * Q))
    for start in range(0, len(U), chunk):
        table = _metric_table(ch, m, U[start:start + chunk], P, w, state.lam)
        per_u = table.max(axis=1)
        i = int(np.argmax(per_u))
        if per_u[i] > best_val:
            best_val = per_u[i]
            best = (start + i, int(np.argmax(table[i])))
    u_star, p_star = U[best[0]], P[best[1]]
    return u_star.copy(), p_star.copy(), carrier_metric(ch, m, u_star, p_star, state, phi)


def select_opportunistic(ch: ChannelRealization, m: int, state: DualState, phi, V_m, grid):
    """Two-step decentralised selection on carrier ``m``.

    Every user assumes all cells radiate ``V_m``, nominates the cell giving
    it the best SINR and reports that SINR. Each cell then takes the
    nominee with the largest weighted rate, provided it beats the price of
    radiating ``V_m[q]``, and picks its power from the grid levels up to
    ``V_m[q]`` against the worst-case interference implied by ``V_m``.

    Returns ``(u_m, p_m, allocated_rate)``; the allocated rate is what the
    cell promises under worst-case interference, so it is always
    deliverable when the other cells stay within ``V_m``.
    """
    V_m = np.asarray(V_m, dtype=float)
    grid = np.asarray(grid, dtype=float)
    G = ch.gains[:, m, :]
    Q = ch.Q
    noise = ch.noise_power
    rx = G * V_m[None, :]
    worst = rx @ (1.0 - np.eye(Q))
    s = rx / (worst + noise)
    nominated = np.argmax(s, axis=1)
    w = rate_weights(state, phi)
    u = np.full(Q, -1)
    p = np.zeros(Q)
    alloc = np.zeros(Q)
    for q in range(Q):
        nominees = np.flatnonzero(nominated == q)
        if nominees.size == 0:
            continue
        score = w[nominees] * np.log2(1.0 + s[nominees, q])
        i = int(np.argmax(score))
        if score[i] - state.lam[q] * V_m[q] <= 0:
            continue
        k = int(nominees[i])
        levels = np.union1d(grid[grid <= V_m[q]], [V_m[q]])
        r = np.log2(1.0 + G[k, q] * levels / (worst[k, q] + noise))
        j = int(np.argmax(w[k] * r - state.lam[q] * levels))
        if levels[j] == 0:
            continue
        u[q], p[q], alloc[q] = k, levels[j], r[j]
    return u, p, alloc


def subgradient_update(state: DualState, measured_power, measured_rate, config: DualSchedConfig
                       ) -> DualState:
    """One projected subgradient step on both multiplier sets."""
    measured_power = np.asarray(measured_power, dtype=float)
    measured_rate = np.asarray(measured_rate, dtype=float)
    P_bar = np.broadcast_to(np.asarray(config.P_bar, dtype=float), state.lam.shape)
    lam = np.maximum(state.epsilon, state.lam - state.delta_lambda * (P_bar - measured_power))
    share = config.phi * measured_rate.sum()
    mu = np.maximum(0.0, state.mu - state.delta_mu * (measured_rate - share))
    return replace(state, lam=lam, mu=mu)


@dataclass
class DualRun:
    """Outcome of :func:`run_dual_scheduler`.

    ``avg_power`` / ``avg_rate`` are the final exponentially weighted
    estimates (W per cell, bits/s/Hz per user); ``mean_power`` /
    ``mean_rate`` are plain time averages over the run.
    """

    trace: list
    state: DualState
    avg_power: np.ndarray
    avg_rate: np.ndarray
    mean_power: np.ndarray
    mean_rate: np.ndarray
    slots: int
    outages: int = 0
    busy_links: int = 0

    @property
    def rate_share(self) -> np.ndarray:
        total = self.avg_rate.sum()
        return self.avg_rate / total if total > 0 else np.zeros_like(self.avg_rate)

    @property
    def outage_fraction(self) -> float:
        return self.outages / self.busy_links if self.busy_links else 0.0


def schedule_slot(ch: ChannelRealization, state: DualState, config: DualSchedConfig
                  ) -> SlotAllocation:
    M, Q = ch.M, ch.Q
    u = np.full((M, Q), -1)
    p = np.zeros((M, Q))
    alloc = None
    if config.selection_mode == "exhaustive":
        for m in range(M):
            u[m], p[m], _ = select_exhaustive(ch, m, state, config.phi, config.power_grid,
                                              enum_cap=config.enum_cap)
    else:
        alloc = np.zeros((M, Q))
        for m in range(M):
            u[m], p[m], alloc[m] = select_opportunistic(ch, m, state, config.phi,
                                                        config.V[m], config.power_grid)
    return SlotAllocation(u=u, p=p, allocated_rate=alloc)


def run_dual_scheduler(config: DualSchedConfig, scenario_stream: Iterable[ChannelRealization],
                       state0: DualState, *, keep_trace: bool = True) -> DualRun:
    """Run ``config.N`` slots of scheduling and multiplier updates.

    The multipliers are driven by exponentially weighted averages (factor
    ``config.beta``) of the per-cell power and per-user delivered rate;
    the averages start at the first slot's measurement.
    """
    N = int(config.N)
    trace = []
    avg_p = avg_r = None
    sum_p = sum_r = 0.0
    outages = busy = 0
    state = state0
    slots = 0
    for ch in itertools.islice(scenario_stream, N):
        if config.V is not None and config.V.shape != (ch.M, ch.Q):
            raise ConfigurationError("V must have shape (M, Q)", key="V")
        slot = schedule_slot(ch, state, config)
        link = delivered_link_rates(ch, slot)
        busy_mask = slot.u >= 0
        inst_p = slot.p.sum(axis=0)
        inst_r = np.bincount(slot.u[busy_mask], weights=link[busy_mask], minlength=ch.K)
        if slot.allocated_rate is not None:
            over = slot.allocated_rate > link * (1.0 + OUTAGE_RTOL) + 1e-15
            outages += int(np.count_nonzero(over & busy_mask))
        busy += int(np.count_nonzero(busy_mask))
        if avg_p is None:
            avg_p, avg_r = inst_p.astype(float), inst_r.astype(float)
        else:
            avg_p = (1.0 - config.beta) * avg_p + config.beta * inst_p
            avg_r = (1.0 - config.beta) * avg_r + config.beta * inst_r
        sum_p = sum_p + inst_p
        sum_r = sum_r + inst_r
        state = subgradient_update(state, avg_p, avg_r, config)
        if keep_trace:
            trace.append(slot)
        slots += 1
    if slots < N:
        raise ValueError(f"scenario stream ended after {slots} of {N} slots")
    return DualRun(trace=trace, state=state, avg_power=avg_p, avg_rate=avg_r,
                   mean_power=sum_p / slots, mean_rate=sum_r / slots, slots=slots,
                   outages=outages, busy_links=busy)
