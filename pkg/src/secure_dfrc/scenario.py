"""System description, channel draws, steering vectors and transmit frames."""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from .errors import ChannelGenerationError, ContractError

CHANNEL_RETRIES = 8
RADAR_MODES = ("qpsk-random", "exact-orthogonal")


def angle_grid(resolution_deg: float = 0.1, lo: float = -90.0, hi: float = 90.0) -> np.ndarray:
    """Uniform grid over ``[lo, hi]`` with both endpoints included."""
    n = int(round((hi - lo) / resolution_deg))
    return np.linspace(lo, hi, n + 1)


@dataclasses.dataclass(frozen=True, eq=False)
class SystemConfig:
    """Array and link-budget parameters.

    ``angle_grid_deg`` defaults to ``[-90, 90]`` sampled at ``grid_resolution``
    (1801 points at the default 0.1 degree).
    """

    num_antennas: int = 10
    total_power: float = 1.0
    noise_var_lu: float = 0.01
    noise_var_eve: float = 0.01
    spacing_ratio: float = 0.5
    grid_resolution: float = 0.1
    angle_grid_deg: np.ndarray | None = None

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 2:
            raise ContractError("num_antennas must be an integer >= 2")
        if self.total_power <= 0:
            raise ContractError("total_power must be positive")
        if self.noise_var_lu <= 0 or self.noise_var_eve <= 0:
            raise ContractError("noise variances must be positive")
        if self.grid_resolution <= 0:
            raise ContractError("grid_resolution must be positive")
        grid = self.angle_grid_deg
        if grid is None:
            grid = angle_grid(self.grid_resolution)
        grid = np.array(grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ContractError("angle grid must be a nonempty 1-D sequence")
        if np.any(np.diff(grid) <= 0):
            raise ContractError("angle grid must be strictly increasing")
        if grid[0] < -90 or grid[-1] > 90:
            raise ContractError("angle grid must lie inside [-90, 90] degrees")
        grid.setflags(write=False)
        object.__setattr__(self, "angle_grid_deg", grid)

    @property
    def M(self) -> int:
        return int(self.num_antennas)

    @property
    def num_grid(self) -> int:
        return self.angle_grid_deg.size

    def replace(self, **changes) -> "SystemConfig":
        if "grid_resolution" in changes and "angle_grid_deg" not in changes:
            changes["angle_grid_deg"] = None
        return dataclasses.replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, SystemConfig):
            return NotImplemented
        return (self.num_antennas == other.num_antennas
                and self.total_power == other.total_power
                and self.noise_var_lu == other.noise_var_lu
                and self.noise_var_eve == other.noise_var_eve
                and self.spacing_ratio == other.spacing_ratio
                and self.grid_resolution == other.grid_resolution
                and np.array_equal(self.angle_grid_deg, other.angle_grid_deg))

    __hash__ = None


@dataclasses.dataclass(frozen=True)
class Target:
    """A radar target that is also treated as a potential eavesdropper."""

    angle_deg: float
    path_loss: complex = 1.0
    angle_uncertainty_deg: float = 0.0

    def __post_init__(self):
        if not -90.0 < self.angle_deg < 90.0:
            raise ContractError(f"target angle {self.angle_deg} outside (-90, 90)")
        if abs(self.path_loss) <= 0:
            raise ContractError("target path loss must be nonzero")
        if self.angle_uncertainty_deg < 0:
            raise ContractError("angle uncertainty must be nonnegative")
        object.__setattr__(self, "path_loss", complex(self.path_loss))


@dataclasses.dataclass(frozen=True, eq=False)
class Scenario:
    """Channel matrix plus target list on top of a :class:`SystemConfig`.

    Row ``k`` of ``channel`` is ``h_k^H``, so ``channel @ R @ channel^H`` has
    the per-user received powers ``h_k^H R h_k`` on its diagonal.
    """

    config: SystemConfig
    channel: np.ndarray
    targets: tuple[Target, ...] = ()

    def __post_init__(self):
        H = np.array(self.channel, dtype=complex)
        if H.ndim == 1:
            H = H[None, :]
        K, M = H.shape
        if M != self.config.M:
            raise ContractError(f"channel has {M} columns, config has {self.config.M} antennas")
        if not 1 <= K <= M:
            raise ContractError(f"need 1 <= K <= M, got K={K}, M={M}")
        if np.linalg.matrix_rank(H) < K:
            raise ContractError("channel matrix must have full row rank")
        H.setflags(write=False)
        object.__setattr__(self, "channel", H)
        object.__setattr__(self, "targets", tuple(self.targets))

    @property
    def num_users(self) -> int:
        return self.channel.shape[0]

    @property
    def num_targets(self) -> int:
        return len(self.targets)

    def user_channel(self, k: int) -> np.ndarray:
        """``h_k`` as a column-free 1-D vector."""
        return np.conj(self.channel[k])

    def with_targets(self, targets: Sequence[Target]) -> "Scenario":
        return Scenario(self.config, self.channel, tuple(targets))

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.config == other.config and np.array_equal(self.channel, other.channel)
                and self.targets == other.targets)

    __hash__ = None


@dataclasses.dataclass(frozen=True)
class PrecoderPair:
    comm: np.ndarray     # M x K
    radar: np.ndarray    # M x M

    @property
    def covariance(self) -> np.ndarray:
        return self.comm @ self.comm.conj().T + self.radar @ self.radar.conj().T


@dataclasses.dataclass(frozen=True)
class TransmitFrame:
    radar_symbols: np.ndarray     # M x N
    comm_symbols: np.ndarray      # K x N
    transmit_signal: np.ndarray   # M x N

    @property
    def num_symbols(self) -> int:
        return self.transmit_signal.shape[1]


def steering_vector(config: SystemConfig, angle_deg: float) -> np.ndarray:
    """Unit-norm ULA response toward ``angle_deg``."""
    angle_deg = float(angle_deg)
    if not -90.0 <= angle_deg <= 90.0:
        raise ContractError(f"angle {angle_deg} outside [-90, 90] degrees")
    return steering_matrix(config, [angle_deg])[:, 0]


def steering_matrix(config: SystemConfig, angles_deg) -> np.ndarray:
    """Steering vectors for several angles stacked as columns (M x L)."""
    ang = np.atleast_1d(np.asarray(angles_deg, dtype=float))
    if np.any(ang < -90.0) or np.any(ang > 90.0):
        raise ContractError("angles must lie in [-90, 90] degrees")
    m = np.arange(config.M)[:, None]
    phase = 2 * np.pi * config.spacing_ratio * m * np.sin(np.deg2rad(ang))[None, :]
    return np.exp(1j * phase) / np.sqrt(config.M)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def generate_channel(K: int, M: int, seed: int) -> np.ndarray:
    """Rayleigh K x M channel with CN(0, 1) entries, redrawn if rank deficient."""
    if K < 1 or M < 1 or K > M:
        raise ContractError(f"need 1 <= K <= M, got K={K}, M={M}")
    for attempt in range(CHANNEL_RETRIES + 1):
        rng = np.random.default_rng(seed if attempt == 0 else [seed, attempt])
        H = _cn(rng, (K, M))
        if np.linalg.matrix_rank(H) == K:
            return H
    raise ChannelGenerationError(f"channel stayed rank deficient after {CHANNEL_RETRIES} retries")


def qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    bits = rng.integers(0, 4, size=shape)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))


def radar_sequences(M: int, N: int, rng: np.random.Generator, mode: str = "qpsk-random") -> np.ndarray:
    """``M`` unit-modulus radar streams of length ``N``.

    ``"exact-orthogonal"`` picks ``M`` distinct DFT rows (random frequencies
    and phases), so ``S @ S^H / N`` is the identity to rounding; it requires
    ``N >= M``.
    """
    if mode == "qpsk-random":
        return qpsk(rng, (M, N))
    if mode == "exact-orthogonal":
        if N < M:
            raise ContractError("exact-orthogonal radar sequences need N >= M")
        freqs = rng.choice(N, size=M, replace=False)
        phases = np.exp(2j * np.pi * rng.random(M))
        n = np.arange(N)
        return phases[:, None] * np.exp(2j * np.pi * np.outer(freqs, n) / N)
    raise ContractError(f"unknown radar sequence mode {mode!r}; expected one of {RADAR_MODES}")


def synthesize_frame(precoders: PrecoderPair, num_symbols: int, seed: int,
                     radar_mode: str = "qpsk-random") -> TransmitFrame:
    """Draw symbols and assemble ``x[n] = W_r s[n] + W_c c[n]`` for a whole frame."""
    if num_symbols < 1:
        raise ContractError("num_symbols must be >= 1")
    Wc = np.asarray(precoders.comm, dtype=complex)
    Wr = np.asarray(precoders.radar, dtype=complex)
    M, K = Wc.shape
    if Wr.shape[0] != M:
        raise ContractError("radar and communication precoders disagree on M")
    rng = np.random.default_rng(seed)
    C = qpsk(rng, (K, num_symbols))
    S = radar_sequences(Wr.shape[1], num_symbols, rng, radar_mode)
    X = Wr @ S + Wc @ C
    return TransmitFrame(S, C, X)
