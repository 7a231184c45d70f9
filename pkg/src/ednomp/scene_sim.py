"""Multi-baseline OFDM channel observations with LoS and ground-bounce paths.

Observations are synthesized directly in the demodulated channel domain: one
complex sample per active (subcarrier, symbol) pair, as a sum of path atoms

    [a(tau, v)]_(k, m) = exp(-j 2 pi k scs tau) * exp(j 2 pi m T0 v)

plus circular complex Gaussian noise. Delays inside an observation are
measured relative to the receive-window start (range gate) so that targets
beyond ``c / (2 scs)`` do not alias.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .constants import SPEED_OF_LIGHT


class DegenerateGeometry(ValueError):
    """Zero path length (platform coincides with target or its image)."""


class PathKind(str, Enum):
    LOS = "LoS"
    GROUND_REFLECTION = "GroundReflection"
    OTHER = "Other"


@dataclass(frozen=True)
class WaveformConfig:
    """OFDM grid on which observations live.

    ``mask`` is the active index set as a boolean ``(N, M)`` array; ``None``
    means the full grid.
    """

    n_subcarriers: int
    n_symbols: int
    scs_hz: float
    carrier_frequency_hz: float
    cp_duration_s: float = 0.0
    mask: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("grid dimensions must be positive")
        if self.scs_hz <= 0 or self.carrier_frequency_hz <= 0:
            raise ValueError("scs and carrier frequency must be positive")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (self.n_subcarriers, self.n_symbols):
                raise ValueError(
                    f"mask shape {mask.shape} != ({self.n_subcarriers}, {self.n_symbols})"
                )
            if not mask.any():
                raise ValueError("active index set must be non-empty")
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)

    @property
    def symbol_duration_s(self) -> float:
        return 1.0 / self.scs_hz

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def bandwidth_hz(self) -> float:
        return self.n_subcarriers * self.scs_hz

    @property
    def active_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones((self.n_subcarriers, self.n_symbols), dtype=bool)
        return self.mask

    @property
    def n_active(self) -> int:
        return int(self.active_mask.sum())

    @property
    def active_index_set(self) -> np.ndarray:
        """``(|Omega|, 2)`` array of (k, m) pairs, k outer, m inner."""
        return np.argwhere(self.active_mask)

    def with_ssb_mask(
        self, n_active_subcarriers: int = 240, burst_symbols: int = 4, burst_period: int | None = None
    ) -> "WaveformConfig":
        """Copy with an SSB-like sparse index set.

        A contiguous block of ``n_active_subcarriers`` (clipped to N, centred)
        is active during bursts of ``burst_symbols`` symbols repeating every
        ``burst_period`` symbols (default ``2 * burst_symbols``).
        """
        n, m = self.n_subcarriers, self.n_symbols
        width = min(n_active_subcarriers, n)
        start = (n - width) // 2
        period = burst_period or 2 * burst_symbols
        sym_on = (np.arange(m) % period) < burst_symbols
        mask = np.zeros((n, m), dtype=bool)
        mask[start : start + width, :] = sym_on[None, :]
        return replace(self, mask=mask)

    def to_dict(self) -> dict:
        out = {
            "n_subcarriers": self.n_subcarriers,
            "n_symbols": self.n_symbols,
            "scs_hz": self.scs_hz,
            "carrier_frequency_hz": self.carrier_frequency_hz,
            "cp_duration_s": self.cp_duration_s,
            "n_active": self.n_active,
        }
        return out


@dataclass(frozen=True)
class Target:
    position_m: tuple[float, float, float]
    rcs_m2: float = 1.0
    reflection_coefficient: complex | None = None

    def __post_init__(self):
        pos = tuple(float(p) for p in self.position_m)
        if len(pos) != 3:
            raise ValueError("position_m must be (x, y, z)")
        if pos[2] < 0:
            raise ValueError("target height must be >= 0")
        if self.rcs_m2 <= 0:
            raise ValueError("rcs_m2 must be positive")
        if self.reflection_coefficient is not None and abs(self.reflection_coefficient) > 1:
            raise ValueError("|reflection_coefficient| must be <= 1")
        object.__setattr__(self, "position_m", pos)

    @property
    def height_m(self) -> float:
        return self.position_m[2]


@dataclass(frozen=True)
class Scene:
    """Flight geometry and targets.

    The platform flies along +y at ``x = 0``; baseline ``i`` sits at altitude
    ``h_0 + i * dh`` and slow-time snapshot ``eta`` at
    ``y = platform_start_y_m + eta * v_p * pri_s``.
    """

    platform_reference_altitude_m: float
    baseline_spacing_m: float
    n_baselines: int
    platform_velocity_mps: float
    targets: tuple[Target, ...]
    tx_gain: float = 1.0
    rx_gain: float = 1.0
    noise_power: float = 0.0
    range_gate_m: float = 0.0
    pri_s: float = 1.25e-3
    platform_start_y_m: float = 0.0
    normalize_gain: bool = False

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.n_baselines < 1:
            raise ValueError("n_baselines must be >= 1")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        for t in self.targets:
            if t.height_m >= self.platform_reference_altitude_m:
                raise ValueError("targets must lie below every baseline altitude")

    def altitude(self, baseline_index: int) -> float:
        return self.platform_reference_altitude_m + baseline_index * self.baseline_spacing_m

    @property
    def altitudes_m(self) -> np.ndarray:
        return self.platform_reference_altitude_m + self.baseline_spacing_m * np.arange(
            self.n_baselines
        )

    def platform_position(self, baseline_index: int, slow_time_index: int = 0) -> np.ndarray:
        y = self.platform_start_y_m + slow_time_index * self.platform_velocity_mps * self.pri_s
        return np.array([0.0, y, self.altitude(baseline_index)])

    @property
    def range_gate_delay_s(self) -> float:
        return 2.0 * self.range_gate_m / SPEED_OF_LIGHT

    def to_dict(self) -> dict:
        return {
            "platform_reference_altitude_m": self.platform_reference_altitude_m,
            "baseline_spacing_m": self.baseline_spacing_m,
            "n_baselines": self.n_baselines,
            "platform_velocity_mps": self.platform_velocity_mps,
            "tx_gain": self.tx_gain,
            "rx_gain": self.rx_gain,
            "noise_power": self.noise_power,
            "range_gate_m": self.range_gate_m,
            "pri_s": self.pri_s,
            "platform_start_y_m": self.platform_start_y_m,
            "normalize_gain": self.normalize_gain,
            "targets": [
                {
                    "position_m": list(t.position_m),
                    "rcs_m2": t.rcs_m2,
                    "reflection_coefficient": None
                    if t.reflection_coefficient is None
                    else [complex(t.reflection_coefficient).real, complex(t.reflection_coefficient).imag],
                }
                for t in self.targets
            ],
        }


@dataclass(frozen=True)
class PathGroundTruth:
    delay_s: float
    doppler_hz: float
    complex_gain: complex
    kind: PathKind
    target_index: int = 0


@dataclass
class ChannelObservation:
    """Samples ``h_s`` over the active index set (k outer, m inner)."""

    baseline_index: int
    slow_time_index: int
    values: np.ndarray
    delay_offset_s: float = 0.0
    ground_truth: list[PathGroundTruth] = field(default_factory=list)
    noise_power: float = 0.0
    platform_position_m: tuple[float, float, float] | None = None

    def to_grid(self, wf: WaveformConfig) -> np.ndarray:
        """Zero-filled ``(N, M)`` matrix."""
        grid = np.zeros((wf.n_subcarriers, wf.n_symbols), dtype=complex)
        grid[wf.active_mask] = self.values
        return grid


# ----------------------------------------------------------------------------
# Geometry and path gains


def _distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def _image(target: Target) -> np.ndarray:
    x, y, z = target.position_m
    return np.array([x, y, -z])


def los_delay(platform_pos, target: Target) -> float:
    """Round-trip LoS delay ``2 R / c``."""
    return 2.0 * _distance(platform_pos, target.position_m) / SPEED_OF_LIGHT


def los_gain(platform_pos, target: Target, wf: WaveformConfig, scene: Scene) -> complex:
    r = _distance(platform_pos, target.position_m)
    if r == 0:
        raise DegenerateGeometry("platform coincides with target")
    lam = wf.wavelength_m
    mag = lam * np.sqrt(scene.tx_gain * scene.rx_gain * target.rcs_m2) / ((4 * np.pi) ** 1.5 * r**2)
    return complex(mag * np.exp(-1j * 4 * np.pi * r / lam))


def ground_reflection_path(platform_pos, target: Target) -> tuple[float, dict]:
    """Round-trip delay of the specular ground bounce via the image target.

    Returns ``(delay_s, {"R_TS": R_GR, "R_ST": R_GR})`` with
    ``R_GR = |platform - (x, y, -z)|``.
    """
    r_gr = _distance(platform_pos, _image(target))
    if r_gr == 0:
        raise DegenerateGeometry("platform coincides with image target")
    return 2.0 * r_gr / SPEED_OF_LIGHT, {"R_TS": r_gr, "R_ST": r_gr}


def ground_reflection_gain(platform_pos, target: Target, wf: WaveformConfig, scene: Scene) -> complex:
    _, geom = ground_reflection_path(platform_pos, target)
    r_ts, r_st = geom["R_TS"], geom["R_ST"]
    lam = wf.wavelength_m
    gamma = complex(target.reflection_coefficient or 0.0)
    mag = (
        np.sqrt(scene.tx_gain * scene.rx_gain)
        * lam
        / (4 * np.pi * r_ts)
        * np.sqrt(target.rcs_m2)
        / (4 * np.pi * r_st)
    )
    return complex(gamma * mag * np.exp(-1j * 2 * np.pi / lam * (r_ts + r_st)))


def _doppler_hz(platform_pos, point, scene: Scene, wf: WaveformConfig) -> float:
    # Positive when closing; stop-and-hop within one snapshot.
    los = np.asarray(point, dtype=float) - np.asarray(platform_pos, dtype=float)
    r = np.linalg.norm(los)
    velocity = np.array([0.0, scene.platform_velocity_mps, 0.0])
    closing = float(velocity @ los / r)
    return 2.0 * closing / wf.wavelength_m


def path_ground_truth(
    scene: Scene, wf: WaveformConfig, baseline_index: int, slow_time_index: int = 0, target_indices=None
) -> list[PathGroundTruth]:
    """Noise-free path list (absolute delays, un-normalized gains)."""
    pos = scene.platform_position(baseline_index, slow_time_index)
    idx = range(len(scene.targets)) if target_indices is None else target_indices
    paths = []
    for ti in idx:
        t = scene.targets[ti]
        paths.append(
            PathGroundTruth(
                los_delay(pos, t), _doppler_hz(pos, t.position_m, scene, wf),
                los_gain(pos, t, wf, scene), PathKind.LOS, ti,
            )
        )
        if t.reflection_coefficient is not None:
            delay, _ = ground_reflection_path(pos, t)
            paths.append(
                PathGroundTruth(
                    delay, _doppler_hz(pos, _image(t), scene, wf),
                    ground_reflection_gain(pos, t, wf, scene), PathKind.GROUND_REFLECTION, ti,
                )
            )
    return paths


def gain_normalization(scene: Scene, wf: WaveformConfig) -> float:
    """Scale making the first target's LoS gain unit at baseline 0, snapshot 0."""
    if not scene.normalize_gain or not scene.targets:
        return 1.0
    return 1.0 / abs(los_gain(scene.platform_position(0, 0), scene.targets[0], wf, scene))


# ----------------------------------------------------------------------------
# Atoms and synthesis


def steering_matrix(tau: float, v: float, wf: WaveformConfig) -> np.ndarray:
    """Atom on the full ``(N, M)`` grid (not masked)."""
    k = np.arange(wf.n_subcarriers)
    m = np.arange(wf.n_symbols)
    u = np.exp(-2j * np.pi * k * wf.scs_hz * tau)
    w = np.exp(2j * np.pi * m * wf.symbol_duration_s * v)
    return np.outer(u, w)


def steering_vector(tau: float, v: float, wf: WaveformConfig) -> np.ndarray:
    """Atom ``a(tau, v)`` over the active index set; ``tau`` is window-relative."""
    return steering_matrix(tau, v, wf)[wf.active_mask]


def observation_rng(noise_seed, baseline_index: int, slow_time_index: int) -> np.random.Generator:
    """Independent stream per (seed, baseline, snapshot)."""
    if isinstance(noise_seed, np.random.Generator):
        return noise_seed
    seed = noise_seed if isinstance(noise_seed, (tuple, list)) else (noise_seed,)
    return np.random.default_rng([*seed, baseline_index, slow_time_index])


def synthesize_observation(
    scene: Scene,
    wf: WaveformConfig,
    baseline_index: int,
    slow_time_index: int = 0,
    noise_seed=0,
    target_indices: Sequence[int] | None = None,
) -> ChannelObservation:
    """Sum of path atoms plus noise for one (baseline, snapshot).

    Gains are scaled by :func:`gain_normalization`; ``scene.noise_power`` is
    applied after scaling, so with ``normalize_gain`` it is relative to a unit
    LoS path. ``target_indices`` restricts synthesis to a subset of targets
    (one resolution cell).
    """
    scale = gain_normalization(scene, wf)
    offset = scene.range_gate_delay_s
    truth = []
    values = np.zeros(wf.n_active, dtype=complex)
    for p in path_ground_truth(scene, wf, baseline_index, slow_time_index, target_indices):
        beta = p.complex_gain * scale
        truth.append(replace(p, complex_gain=beta))
        values += beta * steering_vector(p.delay_s - offset, p.doppler_hz, wf)
    if scene.noise_power > 0:
        rng = observation_rng(noise_seed, baseline_index, slow_time_index)
        noise = rng.standard_normal((wf.n_active, 2)) @ np.array([1.0, 1j])
        values = values + np.sqrt(scene.noise_power / 2) * noise
    pos = scene.platform_position(baseline_index, slow_time_index)
    return ChannelObservation(
        baseline_index=baseline_index,
        slow_time_index=slow_time_index,
        values=values,
        delay_offset_s=offset,
        ground_truth=truth,
        noise_power=scene.noise_power,
        platform_position_m=tuple(float(p) for p in pos),
    )


# ----------------------------------------------------------------------------
# Binary observation files
#
# Layout (little-endian):
#   8s    magic b"EDNOMP01"
#   5*u4  N, M, |Omega|, n_baselines, n_records
#   f8    delay offset (s) of the receive window
#   |Omega| * 2 * u4   active (k, m) pairs, k outer, m inner
#   per record: i4 baseline index, i4 slow-time index,
#               |Omega| * 2 * f8 interleaved (re, im)

MAGIC = b"EDNOMP01"
_HEADER = struct.Struct("<8s5Id")
_RECORD_HEAD = struct.Struct("<ii")


def write_observations(
    fh: BinaryIO | str, observations: Iterable[ChannelObservation], wf: WaveformConfig, n_baselines: int
) -> None:
    obs = list(observations)
    if isinstance(fh, str):
        with open(fh, "wb") as f:
            return write_observations(f, obs, wf, n_baselines)
    offset = obs[0].delay_offset_s if obs else 0.0
    fh.write(_HEADER.pack(MAGIC, wf.n_subcarriers, wf.n_symbols, wf.n_active, n_baselines, len(obs), offset))
    fh.write(wf.active_index_set.astype("<u4").tobytes())
    for o in obs:
        if o.values.shape != (wf.n_active,):
            raise ValueError("observation does not match waveform index set")
        fh.write(_RECORD_HEAD.pack(o.baseline_index, o.slow_time_index))
        fh.write(np.ascontiguousarray(o.values, dtype="<c16").tobytes())


def read_observations(fh: BinaryIO | str | bytes) -> tuple[dict, list[ChannelObservation]]:
    """Inverse of :func:`write_observations`; returns ``(header, observations)``."""
    if isinstance(fh, str):
        with open(fh, "rb") as f:
            return read_observations(f)
    if isinstance(fh, (bytes, bytearray)):
        fh = io.BytesIO(fh)
    magic, n, m, n_omega, n_baselines, n_records, offset = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    index = np.frombuffer(fh.read(8 * n_omega), dtype="<u4").reshape(n_omega, 2).astype(int)
    obs = []
    for _ in range(n_records):
        b, s = _RECORD_HEAD.unpack(fh.read(_RECORD_HEAD.size))
        values = np.frombuffer(fh.read(16 * n_omega), dtype="<c16").astype(complex)
        obs.append(ChannelObservation(b, s, values, delay_offset_s=offset))
    mask = np.zeros((n, m), dtype=bool)
    mask[index[:, 0], index[:, 1]] = True
    header = {
        "n_subcarriers": n,
        "n_symbols": m,
        "n_active": n_omega,
        "n_baselines": n_baselines,
        "n_records": n_records,
        "delay_offset_s": offset,
        "mask": mask,
    }
    return header, obs
