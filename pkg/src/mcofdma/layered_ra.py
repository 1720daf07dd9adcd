"""Layered, distributed power-minimising resource allocation.

Each cell runs an exact minimum-power allocator (subcarriers to user
demand slots) against the interference it currently sees; cells take turns
until the owner maps stop changing. Load control and user switch-off force
termination when no stable allocation exists. Also provides the
minimum-feedback interference filter and the random allocation baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .powerplan import default_tags
from .radio import SinrTarget, iterative_power_control
from .scenario import RANDOM_ALLOCATION_STREAM, ChannelRealization, philox_generator

__all__ = [
    "RateRequirement",
    "CellAllocation",
    "InterferenceEstimate",
    "LayeredPolicy",
    "LayeredOutcome",
    "uniform_requirement",
    "ra_min_power_cell",
    "interference_estimate",
    "iterate_network",
    "load_control",
    "packet_scheduler_update",
    "switch_off_worst",
    "run_layered",
    "min_feedback_filter",
    "random_allocate",
    "outer_users",
]


@dataclass(frozen=True)
class RateRequirement:
    """``channels[k, q]``: subcarriers cell ``q`` owes user ``k``.

    Each user is only owed channels by its home cell; the rate this
    represents is ``B * eta0 * channels``.
    """

    channels: np.ndarray
    home_cell: np.ndarray
    eta0: float

    def __post_init__(self):
        ch = np.array(self.channels, dtype=int)
        home = np.array(self.home_cell, dtype=int)
        if ch.ndim != 2 or home.shape != (ch.shape[0],):
            raise ValueError("channels must be (K, Q) and home_cell (K,)")
        if np.any(ch < 0):
            raise ValueError("channel requirements must be >= 0")
        foreign = np.ones_like(ch, dtype=bool)
        foreign[np.arange(len(home)), home] = False
        if np.any(ch[foreign] > 0):
            raise ValueError("a user can only be owed channels by its home cell")
        ch.flags.writeable = False
        home.flags.writeable = False
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "home_cell", home)

    @property
    def total(self) -> int:
        return int(self.channels.sum())

    def replace_channels(self, channels) -> "RateRequirement":
        return RateRequirement(channels, self.home_cell, self.eta0)

    def check_fits(self, M: int):
        if np.any(self.channels.sum(axis=0) > M):
            raise ValueError(f"a cell owes more than its {M} subcarriers")


@dataclass
class CellAllocation:
    """One cell's subcarrier owners (``-1`` for idle) and powers in W.

    ``unserved`` lists users (one entry per demand slot) the cell could not
    serve within the power cap.
    """

    owner: np.ndarray
    power: np.ndarray
    unserved: tuple = ()

    @classmethod
    def empty(cls, M: int) -> "CellAllocation":
        return cls(owner=np.full(M, -1), power=np.zeros(M))

    def links(self, q: int):
        m = np.flatnonzero(self.owner >= 0)
        return [(int(self.owner[i]), int(i), q) for i in m]


@dataclass(frozen=True)
class InterferenceEstimate:
    I: np.ndarray
    censored: np.ndarray


@dataclass(frozen=True)
class LayeredPolicy:
    max_sweeps: int = 20
    rho: float = 0.9
    max_load_reductions: int = 10
    use_switch_off: bool = True
    n_best: int | None = None
    I_worst: float | None = None
    pc_tol: float = 1e-8
    pc_max_iter: int = 500


@dataclass
class LayeredOutcome:
    allocations: list
    requirement: RateRequirement
    converged: bool
    sweeps: int
    load_reductions: int = 0
    switched_off_users: list = field(default_factory=list)


def uniform_requirement(ch: ChannelRealization, channels_per_user: int, eta0: float
                        ) -> RateRequirement:
    """Owe every user ``channels_per_user`` subcarriers from its home cell,
    handing them out round-robin so no cell exceeds its ``M`` subcarriers."""
    req = np.zeros((ch.K, ch.Q), dtype=int)
    for q in range(ch.Q):
        users = np.flatnonzero(ch.home_cell == q)
        budget = ch.M
        for _ in range(channels_per_user):
            for k in users:
                if budget == 0:
                    break
                req[k, q] += 1
                budget -= 1
    return RateRequirement(req, ch.home_cell, eta0)


def _slot_costs(ch, est, users, q, gamma):
    g = ch.gains[users, :, q]
    return gamma * (ch.noise_power + est.I[users]) / g


def ra_min_power_cell(ch: ChannelRealization, est: InterferenceEstimate, req: RateRequirement,
                      q: int, target: SinrTarget, p_max: float) -> CellAllocation:
    """Minimum-power assignment of cell ``q``'s subcarriers to demand slots.

    The cost of giving subcarrier m to user k is the power needed to reach
    the SINR target under the estimated interference. Each user is expanded
    into one slot per owed channel and the slots are matched to subcarriers
    at minimum total cost. Slot/subcarrier pairs costing more than ``p_max``
    are forbidden; if that leaves some slots unmatched, the allocation
    serves as many slots as possible and lists the rest in ``unserved``.
    """
    M = ch.M
    users = np.repeat(np.arange(ch.K), req.channels[:, q])
    alloc = CellAllocation.empty(M)
    if users.size == 0:
        return alloc
    if users.size > M:
        raise ValueError(f"cell {q} owes {users.size} slots but has {M} subcarriers")
    cost = _slot_costs(ch, est, users, q, target.gamma)
    allowed = np.where(cost <= p_max, cost, np.inf)
    try:
        rows, cols = linear_sum_assignment(allowed)
    except ValueError:
        # Not every slot can be served: dummy columns absorb the rest, each
        # priced above any feasible total so the served count is maximised.
        big = users.size * p_max + 1.0
        padded = np.hstack([allowed, np.full((users.size, users.size), big)])
        rows, cols = linear_sum_assignment(padded)
    served = cols < M
    alloc.owner[cols[served]] = users[rows[served]]
    alloc.power[cols[served]] = cost[rows[served], cols[served]]
    alloc.unserved = tuple(int(k) for k in users[rows[~served]])
    return alloc


def min_feedback_filter(I_true, n_best: int, I_worst: float):
    """Keep the ``n_best`` lowest interference reports, replace the rest.

    Returns ``(values, censored)``; ties keep the lower subcarrier index.
    """
    I_true = np.asarray(I_true, dtype=float)
    if not 1 <= n_best <= I_true.size:
        raise ValueError("n_best must lie in 1..M")
    keep = np.argsort(I_true, kind="stable")[:n_best]
    censored = np.ones(I_true.size, dtype=bool)
    censored[keep] = False
    return np.where(censored, I_worst, I_true), censored


def _cell_powers(allocs, M: int) -> np.ndarray:
    return np.column_stack([a.power for a in allocs]) if allocs else np.zeros((M, 0))


def interference_estimate(ch: ChannelRealization, allocs, q: int,
                          n_best: int | None = None, I_worst: float | None = None
                          ) -> InterferenceEstimate:
    """Interference each user would report to cell ``q`` given the other
    cells' current allocations; optionally censored to the best
    ``n_best`` subcarriers per user."""
    p = _cell_powers(allocs, ch.M).copy()
    p[:, q] = 0.0
    I = np.einsum("kmj,mj->km", ch.gains, p)
    censored = np.zeros_like(I, dtype=bool)
    if n_best is not None and n_best < ch.M:
        worst = 100.0 * ch.noise_power if I_worst is None else I_worst
        for k in range(ch.K):
            I[k], censored[k] = min_feedback_filter(I[k], n_best, worst)
    return InterferenceEstimate(I=I, censored=censored)


def _settle_powers(ch, allocs, target, p_max, tol, max_iter):
    links = [link for q, a in enumerate(allocs) for link in a.links(q)]
    p, off = iterative_power_control(ch, links, target, p_max, tol, max_iter)
    settled = []
    for q, a in enumerate(allocs):
        owner = a.owner.copy()
        for m, qq in off:
            if qq == q:
                owner[m] = -1
        settled.append(CellAllocation(owner=owner, power=p[:, q].copy(), unserved=a.unserved))
    return settled, off


def iterate_network(ch: ChannelRealization, req: RateRequirement, target: SinrTarget,
                    p_max: float, max_sweeps: int = 20, *, n_best: int | None = None,
                    I_worst: float | None = None, pc_tol: float = 1e-8, pc_max_iter: int = 500):
    """Sweep the per-cell allocator over all cells until owners are stable.

    Every cell starts from its interference-free optimum. Each sweep visits
    the cells in index order, each re-solving against the others' current
    allocations. Once a sweep changes no owner, powers are settled by
    iterative power control, and the state counts as converged if every
    cell re-solved against the settled powers keeps its owners, no slot
    went unserved and no link had to be switched off.

    Returns ``(allocations, converged, sweeps_used)``.
    """
    req.check_fits(ch.M)
    Q = ch.Q
    zero = InterferenceEstimate(I=np.zeros((ch.K, ch.M)), censored=np.zeros((ch.K, ch.M), bool))
    allocs = [ra_min_power_cell(ch, zero, req, q, target, p_max) for q in range(Q)]

    def solve(q, state):
        est = interference_estimate(ch, state, q, n_best, I_worst)
        return ra_min_power_cell(ch, est, req, q, target, p_max)

    for sweep in range(1, max_sweeps + 1):
        changed = False
        for q in range(Q):
            new = solve(q, allocs)
            changed |= not np.array_equal(new.owner, allocs[q].owner)
            allocs[q] = new
        if changed:
            continue
        settled, off = _settle_powers(ch, allocs, target, p_max, pc_tol, pc_max_iter)
        if off or any(a.unserved for a in settled):
            return settled, False, sweep
        if all(np.array_equal(solve(q, settled).owner, settled[q].owner) for q in range(Q)):
            return settled, True, sweep
    return allocs, False, max_sweeps


def load_control(req: RateRequirement, rho: float) -> RateRequirement:
    """Scale every requirement by ``rho`` and round down."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    return req.replace_channels(np.floor(rho * req.channels).astype(int))


def packet_scheduler_update(req: RateRequirement, achieved, M: int | None = None
                            ) -> RateRequirement:
    """Move one channel per cell from its best-served user to its worst.

    Within each cell, a user's deficit is the cell's mean achieved rate
    minus its own. One channel goes from the most negative deficit (that
    still holds a channel) to the most positive; ties go to the lower user
    index. Each cell's channel total is preserved.
    """
    achieved = np.asarray(achieved, dtype=float)
    if np.any(achieved < 0):
        raise ValueError("achieved rates must be >= 0")
    channels = req.channels.copy()
    for q in range(channels.shape[1]):
        users = np.flatnonzero(req.home_cell == q)
        if users.size < 2:
            continue
        deficit = achieved[users].mean() - achieved[users]
        receiver = users[np.argmax(deficit)]
        if deficit.max() <= 0:
            continue
        for i in np.argsort(deficit, kind="stable"):
            donor = users[i]
            if deficit[i] >= 0 or donor == receiver:
                break
            if channels[donor, q] >= 1:
                channels[donor, q] -= 1
                channels[receiver, q] += 1
                break
    return req.replace_channels(channels)


def _user_power(allocs, K: int) -> np.ndarray:
    power = np.zeros(K)
    for a in allocs:
        busy = a.owner >= 0
        np.add.at(power, a.owner[busy], a.power[busy])
    return power


def switch_off_worst(allocs, req: RateRequirement) -> RateRequirement:
    """Drop the requirement of the user drawing the most power (lowest index
    on ties) among users that still have a requirement."""
    owed = req.channels.sum(axis=1) > 0
    if not owed.any():
        return req
    power = np.where(owed, _user_power(allocs, len(owed)), -np.inf)
    worst = int(np.argmax(power))
    channels = req.channels.copy()
    channels[worst] = 0
    return req.replace_channels(channels)


def run_layered(ch: ChannelRealization, req0: RateRequirement, target: SinrTarget, p_max: float,
                policy: LayeredPolicy = LayeredPolicy()) -> LayeredOutcome:
    """Iterate the network until stable, reducing load when it is not.

    On non-convergence the load is scaled by ``policy.rho`` up to
    ``max_load_reductions`` times; after that the most power-hungry users
    are switched off one by one (if enabled), and finally the load is
    dropped to zero, which is trivially stable.
    """
    req = req0
    sweeps = reductions = 0
    switched = []
    while True:
        if req.total == 0:
            empty = [CellAllocation.empty(ch.M) for _ in range(ch.Q)]
            return LayeredOutcome(empty, req, True, sweeps, reductions, switched)
        allocs, converged, used = iterate_network(
            ch, req, target, p_max, policy.max_sweeps, n_best=policy.n_best,
            I_worst=policy.I_worst, pc_tol=policy.pc_tol, pc_max_iter=policy.pc_max_iter)
        sweeps += used
        if converged:
            return LayeredOutcome(allocs, req, True, sweeps, reductions, switched)
        if reductions < policy.max_load_reductions:
            req = load_control(req, policy.rho)
            reductions += 1
        elif policy.use_switch_off:
            owed = req.channels.sum(axis=1) > 0
            req = switch_off_worst(allocs, req)
            switched.extend(np.flatnonzero(owed & (req.channels.sum(axis=1) == 0)).tolist())
        else:
            req = req.replace_channels(np.zeros_like(req.channels))


def outer_users(ch: ChannelRealization, fraction: float = 2.0 / 3.0) -> np.ndarray:
    """Users farther than ``fraction * cell_radius`` from their home cell."""
    d = ch.distances()[np.arange(ch.K), ch.home_cell]
    return d > fraction * ch.config.cell_radius


def random_allocate(ch: ChannelRealization, req: RateRequirement, target: SinrTarget,
                    p_max: float, drop_id: int, *, tags=None, tol: float = 1e-8,
                    max_iter: int = 500):
    """Random subcarrier assignment followed by network power control.

    Each cell hands its subcarriers to demand slots uniformly at random.
    Outer-region users of cell ``q`` only draw from sub-band ``tag(q)``
    (blocks of M/Q adjacent subcarriers). Links that cannot reach the SINR
    target after power control are switched off.

    Returns ``(allocations, switched_off)`` with ``switched_off`` a set of
    ``(m, q)`` pairs.
    """
    req.check_fits(ch.M)
    M, Q = ch.M, ch.Q
    if M % Q:
        raise ValueError("outer-band masking needs M divisible by Q")
    tags = default_tags(Q, Q) if tags is None else np.asarray(tags)
    width = M // Q
    outer = outer_users(ch)
    allocs = []
    for q in range(Q):
        rng = philox_generator(ch.config.seed, RANDOM_ALLOCATION_STREAM, 0, q, drop_id)
        order = rng.permutation(M)
        band = (order // width) == tags[q] - 1
        alloc = CellAllocation.empty(M)
        unserved = []
        slots = np.repeat(np.arange(ch.K), req.channels[:, q])
        free = np.ones(M, dtype=bool)
        for k in sorted(slots, key=lambda k: not outer[k]):
            pick = order[free[order] & (band if outer[k] else True)]
            if pick.size == 0:
                unserved.append(int(k))
                continue
            alloc.owner[pick[0]] = k
            free[pick[0]] = False
        alloc.unserved = tuple(unserved)
        allocs.append(alloc)
    links = [link for q, a in enumerate(allocs) for link in a.links(q)]
    p, off = iterative_power_control(ch, links, target, p_max, tol, max_iter)
    for q, a in enumerate(allocs):
        a.power = p[:, q].copy()
        for m, qq in off:
            if qq == q:
                a.owner[m] = -1
    return allocs, off
