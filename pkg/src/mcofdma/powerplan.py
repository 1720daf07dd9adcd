"""Power planning: Q power levels spread over Q sub-bands and Q cell types.

Cell type (tag) ``j`` uses level ``(b + j - 1) mod Q`` on sub-band ``b``
(zero-based ``b``, one-based ``j``), a cyclic Latin square: every cell uses
each level on exactly one sub-band, and on every sub-band the Q cell types
use Q distinct levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = ["PowerPlan", "build_plan", "default_levels", "default_tags",
           "planned_power", "plan_power_matrix"]


@dataclass(frozen=True)
class PowerPlan:
    levels: np.ndarray
    cell_tag: np.ndarray
    M: int

    @property
    def Q(self) -> int:
        return len(self.levels)

    @property
    def subband_size(self) -> int:
        return self.M // self.Q

    def subband(self, m: int) -> int:
        """Zero-based sub-band index of subcarrier ``m``."""
        return m // self.subband_size

    def level_index(self, m: int, q: int) -> int:
        return (self.subband(m) + int(self.cell_tag[q]) - 1) % self.Q


def default_tags(n_cells: int, Q: int) -> np.ndarray:
    return np.arange(n_cells) % Q + 1


def default_levels(Q: int, p_max: float) -> np.ndarray:
    """Halving profile ``p_max * [1, 1/2, 1/4, ...]``."""
    return p_max * 0.5 ** np.arange(Q)


def build_plan(Q: int, M: int, levels, tags=None, p_max: float | None = None) -> PowerPlan:
    """Validate and build a cyclic-shift power plan.

    ``tags`` holds one tag in ``1..Q`` per cell; by default cell ``q`` gets
    tag ``q mod Q + 1``. Raises :class:`ConfigurationError` when ``M`` is not
    a multiple of ``Q``, the level count is not ``Q``, more than one level is
    zero, or a level exceeds ``p_max``.
    """
    if Q < 1 or M % Q:
        raise ConfigurationError(f"M={M} is not divisible by Q={Q}", key="M")
    levels = np.asarray(levels, dtype=float)
    if levels.shape != (Q,):
        raise ConfigurationError(f"expected {Q} power levels, got {levels.size}", key="levels")
    if np.any(levels < 0) or not np.all(np.isfinite(levels)):
        raise ConfigurationError("power levels must be finite and >= 0", key="levels")
    if np.count_nonzero(levels == 0) > 1:
        raise ConfigurationError("at most one power level may be zero", key="levels")
    if p_max is not None and np.any(levels > p_max):
        raise ConfigurationError("power levels may not exceed p_max", key="levels")
    tags = default_tags(Q, Q) if tags is None else np.asarray(tags, dtype=int)
    if tags.ndim != 1 or np.any(tags < 1) or np.any(tags > Q):
        raise ConfigurationError(f"cell tags must lie in 1..{Q}", key="tags")
    levels.flags.writeable = False
    tags.flags.writeable = False
    return PowerPlan(levels=levels, cell_tag=tags, M=M)


def planned_power(plan: PowerPlan, m: int, q: int) -> float:
    return float(plan.levels[plan.level_index(m, q)])


def plan_power_matrix(plan: PowerPlan) -> np.ndarray:
    """Materialise the plan as an ``(M, n_cells)`` power matrix."""
    sub = np.arange(plan.M) // plan.subband_size
    idx = (sub[:, None] + plan.cell_tag[None, :] - 1) % plan.Q
    return plan.levels[idx]
