"""Evaluation of allocations: delivered rates, fairness, power and outage.

Delivered rates are always recomputed from the final power matrix with
full cross-interference; scheduler-internal rate estimates only feed the
outage count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .radio import sinr_tensor
from .scenario import ChannelRealization

__all__ = ["SlotAllocation", "MetricsReport", "jain", "evaluate", "to_slot_allocation",
           "delivered_link_rates"]

# Relative slack before an allocated rate counts as an outage.
OUTAGE_RTOL = 1e-9


@dataclass
class SlotAllocation:
    """User matrix ``u[m, q]`` (``-1`` = idle) and power matrix ``p[m, q]``.

    ``allocated_rate[m, q]``, when present, is the rate the scheduler
    believed it granted on each link.
    """

    u: np.ndarray
    p: np.ndarray
    allocated_rate: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=int)
        self.p = np.asarray(self.p, dtype=float)
        if self.u.shape != self.p.shape:
            raise ValueError("u and p must have the same (M, Q) shape")
        if np.any(self.p[self.u < 0] != 0):
            raise ValueError("idle (m, q) entries must carry zero power")


@dataclass
class MetricsReport:
    sum_rate: float
    per_user_rate: np.ndarray
    jain_index: float
    per_cell_power: np.ndarray
    outage_fraction: float = 0.0
    sweeps_or_slots_used: int = 0
    duplicates_wasted_power: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def total_power(self) -> float:
        return float(np.sum(self.per_cell_power))


def jain(x) -> float:
    """Jain fairness index; 1 for an all-zero or empty vector."""
    x = np.asarray(x, dtype=float)
    s2 = float(np.sum(x * x))
    if x.size == 0 or s2 == 0.0:
        return 1.0
    return float(np.sum(x)) ** 2 / (x.size * s2)


def to_slot_allocation(allocation) -> SlotAllocation:
    """Normalise a :class:`SlotAllocation` or a per-cell sequence of
    ``CellAllocation`` into a :class:`SlotAllocation`."""
    if isinstance(allocation, SlotAllocation):
        return allocation
    cells: Sequence = list(allocation)
    u = np.column_stack([c.owner for c in cells])
    p = np.column_stack([c.power for c in cells])
    return SlotAllocation(u=u, p=np.where(u >= 0, p, 0.0))


def delivered_link_rates(ch: ChannelRealization, slot: SlotAllocation) -> np.ndarray:
    """Rate of every busy ``(m, q)`` link under the final powers, bits/s/Hz."""
    u, p = slot.u, slot.p
    s = sinr_tensor(ch, p)
    m_idx, q_idx = np.nonzero(u >= 0)
    out = np.zeros(u.shape)
    out[m_idx, q_idx] = np.log2(1.0 + s[u[m_idx, q_idx], m_idx, q_idx])
    return out


def evaluate(ch: ChannelRealization, allocation, B: float | None = None) -> MetricsReport:
    """Roll an allocation up into a :class:`MetricsReport`.

    When a user is served by several cells on one carrier, only the best
    of those links counts; the power of the others is reported as
    ``duplicates_wasted_power``.
    """
    slot = to_slot_allocation(allocation)
    B = ch.config.B if B is None else B
    link = delivered_link_rates(ch, slot)
    u = slot.u
    per_user = np.zeros(ch.K)
    wasted = 0.0
    M, Q = u.shape
    for m in range(M):
        busy = np.flatnonzero(u[m] >= 0)
        for k in np.unique(u[m, busy]):
            cells = busy[u[m, busy] == k]
            best = cells[np.argmax(link[m, cells])]
            per_user[k] += link[m, best]
            wasted += float(slot.p[m, cells].sum() - slot.p[m, best])
    outage = 0.0
    if slot.allocated_rate is not None:
        busy = u >= 0
        if busy.any():
            over = slot.allocated_rate > link * (1.0 + OUTAGE_RTOL) + 1e-15
            outage = float(np.count_nonzero(over & busy)) / float(np.count_nonzero(busy))
    per_user = B * per_user
    return MetricsReport(
        sum_rate=float(per_user.sum()),
        per_user_rate=per_user,
        jain_index=jain(per_user),
        per_cell_power=slot.p.sum(axis=0),
        outage_fraction=outage,
        duplicates_wasted_power=wasted,
    )
