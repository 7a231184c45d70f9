"""5G NR numerology selection for joint communication and TomoSAR sensing.

The three bounds on the numerology index come from the range-resolution
requirement (SSB bandwidth), the unambiguous-range requirement (subcarrier
spacing) and the PRF requirement (SSB burst period). ``select_numerology``
intersects them with the NR range ``{0..6}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import BASE_SCS_HZ, MU_MAX, MU_MIN, SPEED_OF_LIGHT, SSB_SUBCARRIERS

# Requirements are usually quoted to ~4 significant figures (5.208 m for
# c / 57.6 MHz); bound arguments within this relative distance of a power of
# two are treated as exactly on it.
REL_TOL = 1e-4
_LOG_TOL = math.log2(1.0 + REL_TOL)

# Normal cyclic prefix at the Table-style waveform: 288 / 4096 of a symbol.
DEFAULT_CP_SAMPLES = 288
DEFAULT_FFT_SIZE = 4096

# Slot length at mu = 0, in seconds.
SLOT_MS = 1e-3


class InfeasibleError(ValueError):
    """No numerology index satisfies all radar requirements."""


@dataclass(frozen=True)
class RadarRequirements:
    range_resolution_m: float
    max_unambiguous_range_m: float
    max_unambiguous_velocity_mps: float
    carrier_frequency_hz: float
    ssb_period_slots: int = 1
    frame_length_slots: int = 10

    def __post_init__(self):
        for name in (
            "range_resolution_m",
            "max_unambiguous_range_m",
            "max_unambiguous_velocity_mps",
            "carrier_frequency_hz",
            "ssb_period_slots",
            "frame_length_slots",
        ):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        for name in ("ssb_period_slots", "frame_length_slots"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValueError(f"{name} must be an integer")


@dataclass(frozen=True)
class NumerologyPlan:
    mu: int
    scs_hz: float
    ssb_bandwidth_hz: float
    range_resolution_m: float
    unambiguous_range_m: float
    pri_s: float
    prf_hz: float
    cp_duration_s: float
    symbol_duration_s: float
    max_unambiguous_velocity_mps: float
    mu_window: tuple[int, int]

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["mu_window"] = list(self.mu_window)
        return out


def _ceil_log2(x: float) -> int:
    return math.ceil(math.log2(x) - _LOG_TOL)


def _floor_log2(x: float) -> int:
    return math.floor(math.log2(x) + _LOG_TOL)


def mu_lower_bound_resolution(req: RadarRequirements) -> int:
    """Smallest mu whose SSB bandwidth (240 subcarriers) meets the range resolution."""
    return _ceil_log2(SPEED_OF_LIGHT / (2 * SSB_SUBCARRIERS * BASE_SCS_HZ * req.range_resolution_m))


def mu_upper_bound_range(req: RadarRequirements) -> int:
    """Largest mu whose unambiguous range c / (2 scs) still covers the requirement."""
    return _floor_log2(SPEED_OF_LIGHT / (2 * BASE_SCS_HZ * req.max_unambiguous_range_m))


def mu_lower_bound_prf(req: RadarRequirements) -> int:
    """Smallest mu whose SSB burst rate supports the required unambiguous velocity.

    The burst rate ``2**mu / (n_0 L_0 1 ms)`` must reach ``4 f_c v / c``.
    """
    arg = (
        4
        * req.carrier_frequency_hz
        * req.max_unambiguous_velocity_mps
        * req.ssb_period_slots
        * req.frame_length_slots
        * SLOT_MS
        / SPEED_OF_LIGHT
    )
    return _ceil_log2(arg)


def pri_from_mu(mu: int, n_0: int, L_0: int) -> float:
    """SSB burst period in seconds.

    A slot lasts ``1 ms / 2**mu`` (ten subframes of ``2**mu`` slots per 10 ms
    frame), so ``n_0`` bursts spaced ``L_0`` slots apart give
    ``n_0 * L_0 * 1e-3 / 2**mu``. At ``mu=3, n_0=1, L_0=10`` this is 1.25 ms.
    """
    if not MU_MIN <= mu <= MU_MAX:
        raise ValueError(f"mu must be in [{MU_MIN}, {MU_MAX}], got {mu}")
    return n_0 * L_0 * SLOT_MS / 2**mu


def plan_for_mu(
    mu: int,
    req: RadarRequirements | None = None,
    *,
    cp_samples: int | None = DEFAULT_CP_SAMPLES,
    fft_size: int = DEFAULT_FFT_SIZE,
    window: tuple[int, int] | None = None,
    carrier_frequency_hz: float | None = None,
) -> NumerologyPlan:
    """Derived frame quantities for a given numerology index."""
    scs = BASE_SCS_HZ * 2**mu
    t0 = 1.0 / scs
    t_cp = t0 * cp_samples / fft_size if cp_samples else 0.0
    n_0 = req.ssb_period_slots if req else 1
    L_0 = req.frame_length_slots if req else 10
    f_c = req.carrier_frequency_hz if req else carrier_frequency_hz
    pri = pri_from_mu(mu, n_0, L_0)
    b_ssb = SSB_SUBCARRIERS * scs
    v_unamb = (
        SPEED_OF_LIGHT * scs / (4 * f_c * (1 + scs * t_cp)) if f_c else float("nan")
    )
    return NumerologyPlan(
        mu=mu,
        scs_hz=scs,
        ssb_bandwidth_hz=b_ssb,
        range_resolution_m=SPEED_OF_LIGHT / (2 * b_ssb),
        unambiguous_range_m=SPEED_OF_LIGHT / (2 * scs),
        pri_s=pri,
        prf_hz=1.0 / pri,
        cp_duration_s=t_cp,
        symbol_duration_s=t0,
        max_unambiguous_velocity_mps=v_unamb,
        mu_window=window if window is not None else (mu, mu),
    )


def feasible_window(req: RadarRequirements) -> tuple[int, int]:
    """Clamped ``(mu_min, mu_max)``; may be empty (``mu_min > mu_max``)."""
    mu_min = max(mu_lower_bound_resolution(req), mu_lower_bound_prf(req), MU_MIN)
    mu_max = min(mu_upper_bound_range(req), MU_MAX)
    return mu_min, mu_max


def select_numerology(
    req: RadarRequirements,
    prefer: str = "smallest",
    *,
    cp_samples: int | None = DEFAULT_CP_SAMPLES,
    fft_size: int = DEFAULT_FFT_SIZE,
) -> NumerologyPlan:
    """Pick a numerology satisfying resolution, range and PRF constraints.

    Args:
        req: radar requirements.
        prefer: ``"smallest"`` (default, widest unambiguous range) or
            ``"largest"`` (most resolution headroom) within the feasible window.
        cp_samples: cyclic-prefix length in FFT samples; ``None`` sets T_CP to 0.
        fft_size: FFT size the CP length refers to.

    Raises:
        InfeasibleError: the clamped window is empty.
    """
    if prefer not in ("smallest", "largest"):
        raise ValueError("prefer must be 'smallest' or 'largest'")
    mu_min, mu_max = feasible_window(req)
    if mu_min > mu_max:
        raise InfeasibleError(
            f"no numerology satisfies the requirements: mu_min={mu_min} > mu_max={mu_max}"
        )
    mu = mu_min if prefer == "smallest" else mu_max
    return plan_for_mu(mu, req, cp_samples=cp_samples, fft_size=fft_size, window=(mu_min, mu_max))
