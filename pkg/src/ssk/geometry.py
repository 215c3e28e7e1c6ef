"""Microphone-array geometry: TDOAs, steering phases and azimuth arithmetic.

All directional math assumes a far-field plane wave travelling in the
horizontal plane of the array. Azimuths are degrees counter-clockwise,
with 0 degrees along the +x axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOUND_SPEED = 343.0


def normalize_azimuth(deg: float) -> float:
    """Fold an azimuth into [0, 360)."""
    return float(np.mod(deg, 360.0))


@dataclass(frozen=True, eq=False)
class MicArray:
    """J microphone positions in meters; delays are relative to ``ref_index``."""

    positions: np.ndarray
    ref_index: int = 0
    sound_speed: float = SOUND_SPEED

    def __post_init__(self) -> None:
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must have shape (J, 3), got {pos.shape}")
        if pos.shape[0] < 1:
            raise ValueError("need at least one microphone")
        if not np.all(np.isfinite(pos)):
            raise ValueError("microphone positions must be finite")
        if not 0 <= self.ref_index < pos.shape[0]:
            raise ValueError(f"ref_index {self.ref_index} out of range for J={pos.shape[0]}")
        if pos.shape[0] > 1:
            dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= 0.0:
                raise ValueError("microphone positions must be pairwise distinct")
        object.__setattr__(self, "positions", pos)

    @property
    def num_mics(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class SourceDirection:
    """Source azimuth in degrees; ``distance`` is only meaningful for room
    simulation, the feature math treats every direction as far-field."""

    azimuth: float
    distance: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "azimuth", normalize_azimuth(self.azimuth))
        if self.distance is not None and not self.distance > 0.0:
            raise ValueError("distance must be positive when given")


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """Fixed grid of look directions (degrees, strictly ascending in [0, 360))."""

    azimuths: np.ndarray

    def __post_init__(self) -> None:
        az = np.asarray(self.azimuths, dtype=float).ravel()
        if az.size < 2:
            raise ValueError("grid needs at least two directions")
        if np.any(az < 0.0) or np.any(az >= 360.0):
            raise ValueError("grid azimuths must lie in [0, 360)")
        if np.any(np.diff(az) <= 0.0):
            raise ValueError("grid azimuths must be strictly ascending")
        object.__setattr__(self, "azimuths", az)

    @classmethod
    def uniform(cls, step_deg: float = 10.0) -> "DirectionGrid":
        if not 0.0 < step_deg <= 180.0:
            raise ValueError("step must be in (0, 180]")
        return cls(np.arange(0.0, 360.0, step_deg))

    @property
    def num_directions(self) -> int:
        return int(self.azimuths.size)


@dataclass(frozen=True)
class PairSelection:
    """Ordered microphone pairs (0-based channel indices) used for IPDs."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        for a, b in pairs:
            if a == b:
                raise ValueError(f"pair ({a}, {b}) uses the same channel twice")
            if a < 0 or b < 0:
                raise ValueError("pair indices must be non-negative")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def default_six(cls) -> "PairSelection":
        # Opposite and adjacent pairs of the 6-mic circle, 1-based
        # (1,4),(2,5),(3,6),(1,2),(3,4),(5,6) converted to 0-based.
        return cls(((0, 3), (1, 4), (2, 5), (0, 1), (2, 3), (4, 5)))

    def validate_for(self, num_mics: int) -> None:
        for a, b in self.pairs:
            if a >= num_mics or b >= num_mics:
                raise ValueError(f"pair ({a}, {b}) out of range for J={num_mics}")

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)


def circular_array(num_mics: int, diameter: float, ref_index: int = 0,
                   sound_speed: float = SOUND_SPEED) -> MicArray:
    """Uniform circular array in the horizontal plane.

    Mic 0 sits at azimuth 0 degrees at radius ``diameter / 2``; the remaining
    mics follow counter-clockwise.
    """
    if num_mics < 1:
        raise ValueError("num_mics must be >= 1")
    if not diameter > 0.0:
        raise ValueError("diameter must be positive")
    angles = 2.0 * np.pi * np.arange(num_mics) / num_mics
    radius = diameter / 2.0
    pos = np.stack([radius * np.cos(angles),
                    radius * np.sin(angles),
                    np.zeros(num_mics)], axis=1)
    return MicArray(pos, ref_index=ref_index, sound_speed=sound_speed)


def tdoa(array: MicArray, direction: SourceDirection) -> np.ndarray:
    """Per-mic arrival delay in seconds relative to the reference mic.

    Plane-wave model: a mic farther from the source (smaller projection on
    the source bearing) receives the wavefront later and gets a positive
    delay. ``delay[ref] == 0`` always.
    """
    az = np.deg2rad(direction.azimuth)
    toward = np.array([np.cos(az), np.sin(az), 0.0])
    rel = array.positions - array.positions[array.ref_index]
    return -(rel @ toward) / array.sound_speed


def steering_phase(array: MicArray, direction: SourceDirection,
                   pair: tuple[int, int], band: int, fft_size: int,
                   sample_rate: float) -> float:
    """Phase the pair's IPD takes for an anechoic far-field source at
    ``direction`` and band ``band``: 2*pi*f_m*(delay[u2] - delay[u1]).

    Linear in the band index; not wrapped.
    """
    if not 0 <= band <= fft_size // 2:
        raise ValueError(f"band {band} out of range for fft_size {fft_size}")
    u1, u2 = pair
    delays = tdoa(array, direction)
    if u1 >= delays.size or u2 >= delays.size:
        raise ValueError(f"pair ({u1}, {u2}) out of range for J={delays.size}")
    freq = band * sample_rate / fft_size
    return float(2.0 * np.pi * freq * (delays[u2] - delays[u1]))


def angle_difference(phi1: float, phi2: float) -> float:
    """Minimal circular separation of two azimuths, in [0, 180] degrees."""
    d = abs(normalize_azimuth(phi1) - normalize_azimuth(phi2))
    return float(min(d, 360.0 - d))


def min_angle_difference(target: float, others) -> float:
    """Angle difference between the target azimuth and its closest neighbour."""
    others = list(others)
    if not others:
        raise ValueError("need at least one other azimuth")
    return min(angle_difference(target, o) for o in others)
