"""LoS identification and ground-reflection gating of detected paths."""

from __future__ import annotations

from dataclasses import dataclass, field

from .constants import SPEED_OF_LIGHT
from .nomp_core import PathEstimate


class NoPathsDetected(ValueError):
    pass


class InvalidGeometry(ValueError):
    pass


class DegenerateLoS(ValueError):
    """The LoS path has zero amplitude, so amplitude ratios are undefined."""


@dataclass(frozen=True)
class ClassifierConfig:
    z_min_m: float = 1.0
    z_max_m: float = 150.0
    rho_min: float = 0.05
    rho_max: float = 0.95

    def __post_init__(self):
        if not 0 <= self.z_min_m < self.z_max_m:
            raise ValueError("need 0 <= z_min_m < z_max_m")
        if not 0 <= self.rho_min < self.rho_max <= 1:
            raise ValueError("need 0 <= rho_min < rho_max <= 1")


@dataclass(frozen=True)
class GroundReflectionCandidate:
    path: PathEstimate
    implied_height_m: float
    amplitude_ratio: float

    def to_dict(self) -> dict:
        return {
            "path": self.path.to_dict(),
            "implied_height_m": self.implied_height_m,
            "amplitude_ratio": self.amplitude_ratio,
        }


@dataclass
class ClassifiedPaths:
    los: PathEstimate
    range_m: float
    radial_velocity_mps: float
    gr_candidates: list[GroundReflectionCandidate] = field(default_factory=list)
    rejected: list[PathEstimate] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "los": self.los.to_dict(),
            "range_m": self.range_m,
            "radial_velocity_mps": self.radial_velocity_mps,
            "gr_candidates": [c.to_dict() for c in self.gr_candidates],
            "rejected": [p.to_dict() for p in self.rejected],
        }


# Delays closer than this are treated as a LoS tie.
LOS_TIE_S = 1e-12


def identify_los(paths, wavelength_m: float) -> tuple[PathEstimate, float, float]:
    """Minimum-delay path, its range ``c tau / 2`` and radial velocity ``lambda v / 2``.

    Ties (delays within 1 ps) go to the stronger path.
    """
    paths = list(paths)
    if not paths:
        raise NoPathsDetected("no paths to classify")
    tau_min = min(p.delay_s for p in paths)
    tied = [p for p in paths if p.delay_s - tau_min <= LOS_TIE_S]
    los = max(tied, key=lambda p: abs(p.gain))
    return los, SPEED_OF_LIGHT * los.delay_s / 2, wavelength_m * los.doppler_hz / 2


def implied_height(path: PathEstimate, los: PathEstimate, range_m: float, platform_altitude_m: float) -> float:
    """Height implied by the excess delay over LoS: ``c R dtau / (4 h)``."""
    if platform_altitude_m <= 0:
        raise InvalidGeometry("platform altitude must be positive")
    return SPEED_OF_LIGHT * range_m * (path.delay_s - los.delay_s) / (4 * platform_altitude_m)


def gate_candidates(
    paths, los: PathEstimate, range_m: float, h_i: float, cfg: ClassifierConfig, radial_velocity_mps: float = 0.0
) -> ClassifiedPaths:
    """Split non-LoS paths into ground-reflection candidates and rejects.

    A candidate needs its implied height in ``[z_min, z_max]`` and its
    amplitude ratio to LoS in ``[rho_min, rho_max]``.
    """
    los_mag = abs(los.gain)
    if los_mag == 0:
        raise DegenerateLoS("LoS amplitude is zero")
    out = ClassifiedPaths(los=los, range_m=range_m, radial_velocity_mps=radial_velocity_mps)
    for p in paths:
        if p is los:
            continue
        z = implied_height(p, los, range_m, h_i)
        rho = abs(p.gain) / los_mag
        if cfg.z_min_m <= z <= cfg.z_max_m and cfg.rho_min <= rho <= cfg.rho_max:
            out.gr_candidates.append(GroundReflectionCandidate(p, z, rho))
        else:
            out.rejected.append(p)
    return out


def classify_paths(paths, h_i: float, wavelength_m: float, cfg: ClassifierConfig | None = None) -> ClassifiedPaths:
    """:func:`identify_los` followed by :func:`gate_candidates`."""
    cfg = cfg or ClassifierConfig()
    paths = list(paths)
    los, r, vr = identify_los(paths, wavelength_m)
    return gate_candidates(paths, los, r, h_i, cfg, radial_velocity_mps=vr)
