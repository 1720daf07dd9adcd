"""User-to-cell assignment per carrier under a fixed power plan.

With powers fixed, every (user, carrier, cell) triple has a known rate.
The centralized scheduler picks, per carrier, a maximum-weight matching
between users and cells (one user per cell, one cell per user). The
distributed scheduler lets each cell pick its best user on its own, which
can put one user on several cells at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .radio import interference_tensor, rate_tensor
from .scenario import GAIN_FLOOR, ChannelRealization

__all__ = [
    "AssignmentResult",
    "rates_from_plan",
    "max_weight_matching",
    "centralized_assign",
    "flat_interference",
    "distributed_assign",
    "beam_gain_hook",
    "delivered_objective",
]


@dataclass(frozen=True)
class AssignmentResult:
    """Indicator tensor ``b[k, m, q]`` and its objective ``sum(b * r)``.

    For the distributed scheduler ``objective`` uses true rates and
    ``objective_approx`` the flat-interference rates the cells decided on.
    """

    b: np.ndarray
    objective: float
    objective_approx: float | None = None

    def user_matrix(self) -> np.ndarray:
        """``u[m, q]``: user scheduled on cell q at carrier m, ``-1`` if none."""
        busy = self.b.any(axis=0)
        return np.where(busy, self.b.argmax(axis=0), -1)


def rates_from_plan(ch: ChannelRealization, p: np.ndarray) -> np.ndarray:
    """``r[k, m, q]`` in bits/s/Hz with every cell radiating ``p``."""
    return rate_tensor(ch, np.asarray(p, dtype=float))


def _best_value(w: np.ndarray) -> float:
    if w.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(w, maximize=True)
    return float(w[rows, cols].sum())


def max_weight_matching(weights):
    """Maximum-weight bipartite matching of users (rows) to cells (columns).

    Among optimal matchings the lexicographically smallest assignment
    vector is returned, comparing users in index order and, for each user,
    preferring cells in index order over being left unmatched. Zero-weight
    pairs are dropped from the result.

    Returns ``(pairs, value)`` with ``pairs`` a sorted list of ``(k, q)``.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be a finite nonnegative matrix")
    K, Q = w.shape
    best = _best_value(w)
    tol = 1e-12 * max(1.0, abs(best))
    rows = list(range(K))
    cols = list(range(Q))
    fixed = 0.0
    pairs = []
    for k in range(K):
        rows.remove(k)
        choice = None
        for q in cols:
            rest = w[np.ix_(rows, [c for c in cols if c != q])]
            if fixed + w[k, q] + _best_value(rest) >= best - tol:
                choice = q
                break
        if choice is not None:
            cols.remove(choice)
            fixed += w[k, choice]
            if w[k, choice] > 0:
                pairs.append((k, choice))
    value = float(sum(w[k, q] for k, q in pairs))
    return pairs, value


def centralized_assign(r) -> AssignmentResult:
    """Solve the joint assignment carrier by carrier.

    The two constraints (one user per cell and carrier, one cell per user
    and carrier) never couple different carriers, so the per-carrier
    matchings together are optimal for the whole tensor.
    """
    r = np.asarray(r, dtype=float)
    K, M, Q = r.shape
    b = np.zeros((K, M, Q), dtype=np.int8)
    for m in range(M):
        pairs, _ = max_weight_matching(r[:, m, :])
        for k, q in pairs:
            b[k, m, q] = 1
    return AssignmentResult(b=b, objective=float((b * r).sum()))


def flat_interference(ch: ChannelRealization, p: np.ndarray) -> np.ndarray:
    """Per-(m, q) interference level a cell can estimate from its own
    users: the mean over its home users of the true interference (all users
    when it has none)."""
    interf = interference_tensor(ch, np.asarray(p, dtype=float))
    out = np.empty((ch.M, ch.Q))
    for q in range(ch.Q):
        home = ch.home_cell == q
        users = home if home.any() else np.ones(ch.K, dtype=bool)
        out[:, q] = interf[users, :, q].mean(axis=0)
    return out


def distributed_assign(ch: ChannelRealization, p, I_flat=None) -> AssignmentResult:
    """Each cell independently schedules, per carrier, the user with the
    best flat-interference rate (lowest index on ties); silent cells
    (zero planned power) schedule nobody.

    ``I_flat`` is an ``(M, Q)`` array or scalar; by default it is
    :func:`flat_interference`.
    """
    p = np.asarray(p, dtype=float)
    if I_flat is None:
        I_flat = flat_interference(ch, p)
    I_flat = np.broadcast_to(np.asarray(I_flat, dtype=float), (ch.M, ch.Q))
    if np.any(I_flat < 0):
        raise ValueError("I_flat must be >= 0")
    approx = np.log2(1.0 + ch.gains * p[None] / (I_flat[None] + ch.noise_power))
    best = np.argmax(approx, axis=0)
    b = np.zeros(approx.shape, dtype=np.int8)
    m_idx, q_idx = np.nonzero(p > 0)
    b[best[m_idx, q_idx], m_idx, q_idx] = 1
    true = rates_from_plan(ch, p)
    return AssignmentResult(b=b, objective=float((b * true).sum()),
                            objective_approx=float((b * approx).sum()))


def delivered_objective(result: AssignmentResult, r) -> float:
    """Sum over (user, carrier) of the best serving cell's rate; extra cells
    serving the same user on that carrier add nothing."""
    return float((result.b * np.asarray(r)).max(axis=2).sum())


def beam_gain_hook(ch: ChannelRealization, gain_multiplier) -> ChannelRealization:
    """Scale ``G[k, :, q]`` by ``gain_multiplier[k, q]`` on every carrier,
    a stand-in for per-link beamforming gain."""
    mult = np.asarray(gain_multiplier, dtype=float)
    if mult.shape != (ch.K, ch.Q) or np.any(~np.isfinite(mult)) or np.any(mult < 0):
        raise ValueError("gain_multiplier must be a finite nonnegative (K, Q) array")
    return ch.with_gains(np.maximum(ch.gains * mult[:, None, :], GAIN_FLOOR))
