"""Multi-cell geometry and fading channel generation.

Every random draw is keyed on ``(seed, drop_id, k, q)`` through a Philox
counter, so a user's channel does not depend on how many other users exist
or on the order in which drops are generated.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError

__all__ = [
    "ScenarioConfig",
    "ChannelRealization",
    "pathloss_gain",
    "generate_scenario",
    "channel_stream",
    "fading_power",
]

GAIN_FLOOR = 1e-30

# Philox key domains; the second key word separates independent streams.
_GEOMETRY = 0
_FADING = 1
RANDOM_ALLOCATION_STREAM = 2


def philox_generator(seed: int, domain: int, *counter_words: int) -> np.random.Generator:
    """Generator whose stream is fixed by ``seed``, ``domain`` and up to
    three counter words."""
    words = list(counter_words) + [0] * (3 - len(counter_words))
    counter = np.array([0, *words], dtype=np.uint64)
    key = np.array([seed, domain], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True)
class ScenarioConfig:
    Q: int
    K: int
    M: int
    B: float = 15e3
    N0: float = 3.98e-21
    cell_radius: float = 250.0
    pathloss_exponent: float = 3.5
    pathloss_ref_gain: float = 1.0
    min_distance: float = 10.0
    fading_correlation: float = 0.0
    p_max: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("Q", "K", "M"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {value!r}", key=name)
        for name in ("B", "N0", "cell_radius", "min_distance", "p_max",
                     "pathloss_ref_gain", "pathloss_exponent"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating, np.integer))
                    and math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be a finite number > 0, got {value!r}", key=name)
        if self.min_distance >= self.cell_radius:
            raise ConfigurationError("min_distance must be smaller than cell_radius",
                                     key="min_distance")
        if not 0.0 <= self.fading_correlation < 1.0:
            raise ConfigurationError("fading_correlation must lie in [0, 1)",
                                     key="fading_correlation")
        if (isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer))
                or not 0 <= self.seed < 2**64):
            raise ConfigurationError("seed must be an unsigned 64-bit integer", key="seed")

    @property
    def noise_power(self) -> float:
        """Noise power per subcarrier, B * N0, in W."""
        return self.B * self.N0


@dataclass(frozen=True)
class ChannelRealization:
    """Gain tensor ``gains[k, m, q]`` (linear power gain from cell q to user
    k on subcarrier m) plus the geometry that produced it."""

    gains: np.ndarray
    user_positions: np.ndarray
    cell_positions: np.ndarray
    home_cell: np.ndarray
    config: ScenarioConfig = field(repr=False)

    def __post_init__(self):
        for name in ("gains", "user_positions", "cell_positions", "home_cell"):
            arr = np.array(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        K, M, Q = self.gains.shape
        if (K, M, Q) != (self.config.K, self.config.M, self.config.Q):
            raise ConfigurationError("gain tensor shape does not match the configuration")

    @property
    def K(self) -> int:
        return self.gains.shape[0]

    @property
    def M(self) -> int:
        return self.gains.shape[1]

    @property
    def Q(self) -> int:
        return self.gains.shape[2]

    @property
    def noise_power(self) -> float:
        return self.config.noise_power

    def distances(self) -> np.ndarray:
        """User-to-cell distances, shape (K, Q)."""
        diff = self.user_positions[:, None, :] - self.cell_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def with_gains(self, gains: np.ndarray) -> "ChannelRealization":
        return dataclasses.replace(self, gains=np.asarray(gains, dtype=float))

    @classmethod
    def from_gains(cls, gains, *, B: float = 1.0, N0: float = 1.0, p_max: float = 1.0,
                   home_cell=None, seed: int = 0) -> "ChannelRealization":
        """Wrap a hand-built gain tensor, e.g. for tests or external traces.

        Geometry is synthetic: cells on a line, each user placed on top of
        its home cell (taken as the strongest average gain when not given).
        """
        gains = np.asarray(gains, dtype=float)
        K, M, Q = gains.shape
        cfg = ScenarioConfig(Q=Q, K=K, M=M, B=B, N0=N0, p_max=p_max, seed=seed)
        if home_cell is None:
            home_cell = np.argmax(gains.mean(axis=1), axis=1)
        home_cell = np.asarray(home_cell, dtype=int)
        cells = cell_grid(Q, cfg.cell_radius)
        users = cells[home_cell] + np.array([cfg.min_distance, 0.0])
        return cls(gains=gains, user_positions=users, cell_positions=cells,
                   home_cell=home_cell, config=cfg)


def pathloss_gain(distance, exponent: float = 3.5, ref_gain: float = 1.0,
                  min_distance: float = 0.0):
    """Power-law path gain ``ref_gain * distance**(-exponent)``.

    Accepts scalars or arrays. Raises ``ValueError`` for any distance below
    ``min_distance`` or not strictly positive.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0) or np.any(d < min_distance):
        raise ValueError(f"distance below the minimum distance {min_distance} m")
    g = ref_gain * d ** (-exponent)
    return float(g) if g.ndim == 0 else g


def cell_grid(Q: int, cell_radius: float) -> np.ndarray:
    """Cell centres on a square grid of side ceil(sqrt(Q)), spacing 2R."""
    side = math.ceil(math.sqrt(Q))
    q = np.arange(Q)
    return 2.0 * cell_radius * np.column_stack([q % side, q // side]).astype(float)


def _place_user(config: ScenarioConfig, cells: np.ndarray, drop_id: int, k: int):
    rng = philox_generator(config.seed, _GEOMETRY, 0, k, drop_id)
    anchor = cells[rng.integers(config.Q)]
    while True:
        r = config.cell_radius * math.sqrt(rng.random())
        theta = 2.0 * math.pi * rng.random()
        pos = anchor + r * np.array([math.cos(theta), math.sin(theta)])
        if np.min(np.hypot(*(cells - pos).T)) >= config.min_distance:
            return pos


def fading_power(config: ScenarioConfig, drop_id: int, slot: int = 0) -> np.ndarray:
    """Rayleigh fading power ``|h|^2`` with shape (K, M, Q).

    Each (k, q) pair owns an AR(1) chain across subcarriers,
    ``h[m+1] = rho h[m] + sqrt(1 - rho^2) w``, so ``|h|^2`` of adjacent
    subcarriers has correlation rho^2 and unit mean.
    """
    K, M, Q = config.K, config.M, config.Q
    rho = config.fading_correlation
    innov = np.empty((K, Q, M), dtype=complex)
    for k in range(K):
        for q in range(Q):
            rng = philox_generator(config.seed, _FADING, slot, (k << 32) | q, drop_id)
            z = rng.standard_normal((M, 2))
            innov[k, q] = (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)
    if rho > 0.0 and M > 1:
        innov[:, :, 1:] *= math.sqrt(1.0 - rho * rho)
        h = lfilter([1.0], [1.0, -rho], innov, axis=-1)
    else:
        h = innov
    return np.transpose(np.abs(h) ** 2, (0, 2, 1))


def _geometry(config: ScenarioConfig, drop_id: int):
    cells = cell_grid(config.Q, config.cell_radius)
    users = np.array([_place_user(config, cells, drop_id, k) for k in range(config.K)])
    dist = np.hypot(users[:, None, 0] - cells[None, :, 0], users[:, None, 1] - cells[None, :, 1])
    return cells, users, dist


def _assemble(config, cells, users, dist, fading):
    path = pathloss_gain(dist, config.pathloss_exponent, config.pathloss_ref_gain,
                         config.min_distance)
    gains = np.maximum(path[:, None, :] * fading, GAIN_FLOOR)
    return ChannelRealization(gains=gains, user_positions=users, cell_positions=cells,
                              home_cell=np.argmin(dist, axis=1), config=config)


def generate_scenario(config: ScenarioConfig, drop_id: int, *, fading: bool = True
                      ) -> ChannelRealization:
    """Draw one network realization (geometry and fading) for ``drop_id``.

    The result is a pure function of ``(config, drop_id)``. With
    ``fading=False`` the gains reduce to path loss only.
    """
    cells, users, dist = _geometry(config, drop_id)
    fad = fading_power(config, drop_id) if fading else np.ones((config.K, config.M, config.Q))
    return _assemble(config, cells, users, dist, fad)


def channel_stream(config: ScenarioConfig, drop_id: int, n_slots: int
                   ) -> Iterator[ChannelRealization]:
    """Time-varying channel for one drop: geometry fixed, fresh fading
    every slot. Slot 0 equals ``generate_scenario(config, drop_id)``."""
    cells, users, dist = _geometry(config, drop_id)
    for slot in range(n_slots):
        yield _assemble(config, cells, users, dist, fading_power(config, drop_id, slot))
