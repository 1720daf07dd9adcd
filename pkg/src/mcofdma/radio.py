"""Interference, SINR, rate and power-control kernels.

Power matrices are plain ``(M, Q)`` float arrays: ``p[m, q]`` is the power
cell ``q`` radiates on subcarrier ``m``. Rates are spectral efficiencies in
bits/s/Hz; multiply by the subcarrier bandwidth for bits/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ChannelRealization

__all__ = [
    "SinrTarget",
    "mai",
    "sinr",
    "rate",
    "rate_approx",
    "required_power",
    "interference_tensor",
    "sinr_tensor",
    "rate_tensor",
    "link_sinr",
    "iterative_power_control",
]


@dataclass(frozen=True)
class SinrTarget:
    """Fixed transmission format of ``eta0`` bits/s/Hz."""

    eta0: float

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError("eta0 must be > 0")

    @property
    def gamma(self) -> float:
        return 2.0 ** self.eta0 - 1.0


def mai(ch: ChannelRealization, p: np.ndarray, k: int, m: int, q: int) -> float:
    """Interference received by user ``k`` on subcarrier ``m`` when served by
    cell ``q``: every other cell's power times its gain towards ``k``."""
    total = 0.0
    for j in range(ch.Q):
        if j != q:
            total += p[m, j] * ch.gains[k, m, j]
    return float(total)


def sinr(ch: ChannelRealization, p: np.ndarray, k: int, m: int, q: int) -> float:
    return float(ch.gains[k, m, q] * p[m, q] / (mai(ch, p, k, m, q) + ch.noise_power))


def rate(ch: ChannelRealization, p: np.ndarray, k: int, m: int, q: int) -> float:
    return math.log2(1.0 + sinr(ch, p, k, m, q))


def rate_approx(G_serving: float, p_serving: float, I_flat: float, B: float, N0: float) -> float:
    """Rate under a flat interference level shared by all users of a cell."""
    if I_flat < 0:
        raise ValueError("I_flat must be >= 0")
    return math.log2(1.0 + G_serving * p_serving / (I_flat + B * N0))


def required_power(target, G: float, I: float, B: float, N0: float) -> float:
    """Power that lifts the SINR to ``target`` under interference ``I``.

    ``target`` is a :class:`SinrTarget` or a linear SINR value.
    """
    gamma = target.gamma if isinstance(target, SinrTarget) else float(target)
    if not G > 0:
        raise ValueError("channel gain must be > 0")
    return gamma * (B * N0 + I) / G


# Vectorised forms over the whole (k, m, q) grid.

def interference_tensor(ch: ChannelRealization, p: np.ndarray) -> np.ndarray:
    """``I[k, m, q]`` = sum over j != q of ``p[m, j] * G[k, m, j]``."""
    rx = ch.gains * p[None, :, :]
    Q = ch.Q
    off = 1.0 - np.eye(Q)
    return rx @ off


def sinr_tensor(ch: ChannelRealization, p: np.ndarray) -> np.ndarray:
    return ch.gains * p[None, :, :] / (interference_tensor(ch, p) + ch.noise_power)


def rate_tensor(ch: ChannelRealization, p: np.ndarray) -> np.ndarray:
    return np.log2(1.0 + sinr_tensor(ch, p))


def link_sinr(ch: ChannelRealization, p: np.ndarray, links: np.ndarray) -> np.ndarray:
    """SINR of each ``(k, m, q)`` row of ``links`` under power matrix ``p``."""
    links = np.asarray(links, dtype=int).reshape(-1, 3)
    k, m, q = links.T
    own = ch.gains[k, m, q] * p[m, q]
    return own / (link_interference(ch, p, links) + ch.noise_power)


def iterative_power_control(ch: ChannelRealization, active, target, p_max: float,
                            tol: float = 1e-8, max_iter: int = 500):
    """Capped fixed-point power control with switch-off.

    Every active link ``(k, m, q)`` repeatedly sets its power to the level
    that meets the SINR target against the current interference, capped at
    ``p_max``. When the iteration settles, links stuck at the cap below
    ``gamma * (1 - tol)`` are switched off and the iteration restarts from
    zero power. If the iteration fails to settle within ``max_iter`` the
    lowest-SINR link among the failing ones is dropped instead.

    Returns
    -------
    p : ndarray, shape (M, Q)
        Powers of the surviving links, zero elsewhere.
    switched_off : set of (m, q)
    """
    gamma = target.gamma if isinstance(target, SinrTarget) else float(target)
    links = np.asarray(sorted(tuple(map(int, a)) for a in active), dtype=int).reshape(-1, 3)
    if len({(m, q) for _, m, q in links}) != len(links):
        raise ValueError("at most one active link per (subcarrier, cell)")
    M, Q = ch.M, ch.Q
    noise = ch.noise_power
    floor = gamma * (1.0 - tol)
    switched_off = set()
    alive = np.ones(len(links), dtype=bool)

    while alive.any():
        cur = links[alive]
        k, m, q = cur.T
        own_gain = ch.gains[k, m, q]
        p = np.zeros((M, Q))
        for _ in range(max_iter):
            interf = link_interference(ch, p, cur)
            new = np.minimum(p_max, gamma * (noise + interf) / own_gain)
            old = p[m, q]
            p[m, q] = new
            change = np.max(np.abs(new - old) / np.maximum(new, np.finfo(float).tiny))
            if change < tol:
                s = link_sinr(ch, p, cur)
                if np.all((s >= floor) | (new >= p_max)):
                    break
        s = link_sinr(ch, p, cur)
        bad = s < floor
        if not bad.any():
            out = np.zeros((M, Q))
            out[m, q] = p[m, q]
            return out, switched_off
        drop = bad & (p[m, q] >= p_max)
        if not drop.any():
            drop[np.flatnonzero(bad)[np.argmin(s[bad])]] = True
        idx = np.flatnonzero(alive)[drop]
        for i in idx:
            switched_off.add((int(links[i, 1]), int(links[i, 2])))
        alive[idx] = False
    return np.zeros((M, Q)), switched_off


def link_interference(ch: ChannelRealization, p: np.ndarray, links: np.ndarray) -> np.ndarray:
    """Interference seen by each link row ``(k, m, q)``."""
    k, m, q = links.T
    rx = ch.gains[k, m, :] * p[m, :]
    rx[np.arange(len(q)), q] = 0.0
    return rx.sum(axis=1)
