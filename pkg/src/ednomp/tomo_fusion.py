"""Elevation from multi-baseline LoS gains, ground-reflection height, and fusion.

The LoS gain at baseline ``i`` carries the two-way phase ``-4 pi R_i(z) / lambda``.
After removing the phase of a zero-height reference (flat-earth deramp) the
remaining phase across baselines is the elevation signature

    a_i(z) = exp(-j 4 pi (R_i(z) - R_i(0)) / lambda),
    R_i(z) = sqrt(R_g^2 + (h_i - z)^2),

whose far-field form is ``exp(+j 4 pi h_i z / (lambda R))``. With a uniform
baseline spacing the signature is (nearly) periodic in ``z`` with period
``lambda R / (2 dh)``; :func:`ambiguity_height` gives it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .path_classify import ClassifiedPaths


class RankDeficientCovariance(ValueError):
    pass


@dataclass(frozen=True)
class BaselineStack:
    """LoS gains across baselines.

    ``gains`` is ``(L,)`` or ``(L, K)`` for ``K`` slow-time snapshots.
    ``reference_range_m`` is the range from baseline 0 to the zero-height
    reference point; ``ground_range_m`` defaults to the horizontal distance
    implied by it and ``altitudes_m[0]``.
    """

    gains: np.ndarray
    altitudes_m: np.ndarray
    reference_range_m: float
    wavelength_m: float
    ground_range_m: float | None = None

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=complex)
        if gains.ndim == 1:
            gains = gains[:, None]
        alt = np.asarray(self.altitudes_m, dtype=float)
        if gains.shape[0] != alt.shape[0] or alt.shape[0] < 2:
            raise ValueError("gains and altitudes need equal length L >= 2")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "altitudes_m", alt)
        if self.ground_range_m is None:
            rg2 = self.reference_range_m**2 - alt[0] ** 2
            if rg2 <= 0:
                raise ValueError("reference range must exceed the reference altitude")
            object.__setattr__(self, "ground_range_m", math.sqrt(rg2))

    @property
    def n_baselines(self) -> int:
        return self.gains.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.gains.shape[1]

    @property
    def baseline_spacing_m(self) -> float:
        return float(np.mean(np.diff(self.altitudes_m)))

    def reference_ranges(self) -> np.ndarray:
        """``R_i(0)`` for every baseline."""
        return np.hypot(self.ground_range_m, self.altitudes_m)


@dataclass(frozen=True)
class ElevationConfig:
    z_grid_min_m: float = 0.0
    z_grid_max_m: float = 150.0
    n_grid: int = 512
    n_sources: int = 1
    smoothing_subaperture: int | None = None
    steering_model: str = "exact"
    refine_peaks: int = 32

    def __post_init__(self):
        if self.n_grid < 2 or self.n_sources < 1:
            raise ValueError("need n_grid >= 2 and n_sources >= 1")
        if self.refine_peaks < 0:
            raise ValueError("refine_peaks must be >= 0")
        if not self.z_grid_min_m < self.z_grid_max_m:
            raise ValueError("empty z grid")
        if self.steering_model not in ("exact", "far_field"):
            raise ValueError("steering_model must be 'exact' or 'far_field'")

    @property
    def z_grid(self) -> np.ndarray:
        return np.linspace(self.z_grid_min_m, self.z_grid_max_m, self.n_grid)


@dataclass
class MusicResult:
    z_hat_m: float
    z_grid_m: np.ndarray = field(repr=False)
    spectrum: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    n_sources: int = 1
    refined_peaks_m: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def snr_eff(self) -> float:
        """Largest signal eigenvalue over the mean noise eigenvalue."""
        noise = self.eigenvalues[: len(self.eigenvalues) - self.n_sources]
        mean_noise = float(np.mean(noise))
        top = float(self.eigenvalues[-1])
        if mean_noise <= top * 1e-15:
            return 1e15
        return top / mean_noise

    def peaks(self, count: int | None = None) -> np.ndarray:
        """Interpolated local maxima of the pseudo-spectrum, strongest first."""
        p = self.spectrum
        interior = np.flatnonzero((p[1:-1] > p[:-2]) & (p[1:-1] >= p[2:])) + 1
        idx = list(interior)
        if p[0] > p[1]:
            idx.append(0)
        if p[-1] > p[-2]:
            idx.append(len(p) - 1)
        idx.sort(key=lambda i: -p[i])
        if count is not None:
            idx = idx[:count]
        return np.array([_interpolate_peak(self.z_grid_m, p, i) for i in idx])

    def nearest_peak(self, z_m: float) -> float:
        """Spectrum peak closest to ``z_m`` (ambiguity resolution against a coarse height).

        Uses the refined peaks when available, else the interpolated grid peaks.
        """
        peaks = self.refined_peaks_m if len(self.refined_peaks_m) else self.peaks()
        return float(peaks[np.argmin(np.abs(peaks - z_m))])


def rayleigh_resolution(stack: BaselineStack) -> float:
    """Elevation resolution ``lambda R / (2 L dh)``."""
    aperture = stack.n_baselines * stack.baseline_spacing_m
    return stack.wavelength_m * stack.reference_range_m / (2 * aperture)


def ambiguity_height(stack: BaselineStack) -> float:
    """Height period of the far-field elevation signature, ``lambda R / (2 dh)``."""
    return stack.wavelength_m * stack.reference_range_m / (2 * stack.baseline_spacing_m)


def deramp_ground_phase(stack: BaselineStack, reference_ranges_m=None, sign: int = 1) -> BaselineStack:
    """Remove the flat-earth phase of a zero-height reference at every baseline.

    Args:
        reference_ranges_m: ``R_i(0)``, shape ``(L,)`` or ``(L, K)``; defaults
            to :meth:`BaselineStack.reference_ranges`.
        sign: ``+1`` removes the phase, ``-1`` puts it back.
    """
    r0 = stack.reference_ranges() if reference_ranges_m is None else np.asarray(reference_ranges_m, dtype=float)
    if r0.ndim == 1:
        r0 = r0[:, None]
    phase = np.exp(sign * 4j * np.pi * r0 / stack.wavelength_m)
    return replace(stack, gains=stack.gains * phase)


def elevation_steering(z: float, stack: BaselineStack, model: str = "exact") -> np.ndarray:
    """Deramped elevation signature ``a(z)`` of length L (unit-modulus entries).

    ``exact`` uses the true range change ``R_i(z) - R_i(0)``; ``far_field``
    its first-order form ``-h_i z / R``. Both carry the ``-4 pi / lambda``
    two-way phase, so the deramped phase grows with ``+z``.
    """
    return _steering_matrix([z], stack, model)[:, 0]


def _steering_matrix(z_grid, stack: BaselineStack, model: str) -> np.ndarray:
    h = stack.altitudes_m[:, None]
    z = np.asarray(z_grid, dtype=float)[None, :]
    lam = stack.wavelength_m
    if model == "far_field":
        return np.exp(4j * np.pi * h * z / (lam * stack.reference_range_m))
    rg = stack.ground_range_m
    return np.exp(-4j * np.pi * (np.hypot(rg, h - z) - np.hypot(rg, h)) / lam)


def _interpolate_peak(z, p, i) -> float:
    if i == 0 or i == len(p) - 1:
        return float(z[i])
    y0, y1, y2 = np.log(p[i - 1 : i + 2])
    denom = y0 - 2 * y1 + y2
    if denom >= 0:
        return float(z[i])
    offset = 0.5 * (y0 - y2) / denom
    return float(z[i] + offset * (z[1] - z[0]))


def sample_covariance(stack: BaselineStack, cfg: ElevationConfig) -> np.ndarray:
    """Snapshot covariance, or forward-backward smoothed covariance over sub-apertures."""
    G = stack.gains
    L, K = G.shape
    sub = cfg.smoothing_subaperture
    if not sub:
        if K < cfg.n_sources:
            raise RankDeficientCovariance(
                f"{K} snapshot(s) cannot support {cfg.n_sources} sources without smoothing"
            )
        return G @ G.conj().T / K
    if not 2 <= sub <= L:
        raise ValueError("smoothing_subaperture must be in [2, L]")
    n_sub = L - sub + 1
    R = np.zeros((sub, sub), dtype=complex)
    for s in range(n_sub):
        g = G[s : s + sub]
        R += g @ g.conj().T
    R /= n_sub * K
    J = np.eye(sub)[::-1]
    return 0.5 * (R + J @ R.conj() @ J)


def _refine_peaks(spectrum, z, En, stack: BaselineStack, cfg: ElevationConfig) -> np.ndarray:
    """Continuously refined strongest local maxima, best projection residual first.

    Near-aliases of a uniform baseline differ from the true height by a far
    smaller projection residual than one grid step costs, so the choice among
    them is made after refinement, not on the grid.
    """
    step = z[1] - z[0]

    def denom(zz):
        a = _steering_matrix([zz], stack, cfg.steering_model)[:, 0]
        return float(np.sum(np.abs(En.conj().T @ a) ** 2))

    peaks = np.flatnonzero((spectrum[1:-1] > spectrum[:-2]) & (spectrum[1:-1] >= spectrum[2:])) + 1
    peaks = sorted(peaks, key=lambda k: -spectrum[k])[: cfg.refine_peaks]
    top = _interpolate_peak(z, spectrum, int(np.argmax(spectrum)))
    found = [(denom(top), top)]
    for k in peaks:
        lo, hi = max(z[k] - step, z[0]), min(z[k] + step, z[-1])
        res = minimize_scalar(denom, bounds=(lo, hi), method="bounded", options={"xatol": step * 1e-6})
        found.append((float(res.fun), float(res.x)))
    found.sort()
    return np.array([zz for _, zz in found])


def music_elevation(stack: BaselineStack, cfg: ElevationConfig | None = None) -> MusicResult:
    """MUSIC pseudo-spectrum over the z grid; ``z_hat`` is the interpolated argmax,
    or with ``cfg.refine_peaks`` the best of that many continuously refined peaks.

    ``stack`` must already be deramped. Spatial smoothing shortens the
    effective aperture to ``cfg.smoothing_subaperture`` baselines.
    """
    cfg = cfg or ElevationConfig()
    R = sample_covariance(stack, cfg)
    dim = R.shape[0]
    if cfg.n_sources >= dim:
        raise RankDeficientCovariance(f"n_sources={cfg.n_sources} leaves no noise subspace in dimension {dim}")
    eigval, eigvec = np.linalg.eigh(R)
    En = eigvec[:, : dim - cfg.n_sources]
    z = cfg.z_grid
    sub_stack = stack if dim == stack.n_baselines else replace(
        stack, gains=stack.gains[:dim], altitudes_m=stack.altitudes_m[:dim]
    )
    A = _steering_matrix(z, sub_stack, cfg.steering_model)
    denom = np.sum(np.abs(En.conj().T @ A) ** 2, axis=0)
    denom = np.maximum(denom, dim * 1e-16)
    spectrum = 1.0 / denom
    i = int(np.argmax(spectrum))
    z_hat = _interpolate_peak(z, spectrum, i)
    refined = np.empty(0)
    if cfg.refine_peaks:
        refined = _refine_peaks(spectrum, z, En, sub_stack, cfg)
        z_hat = float(refined[0])
    return MusicResult(
        z_hat_m=z_hat,
        refined_peaks_m=refined,
        z_grid_m=z,
        spectrum=spectrum,
        eigenvalues=eigval,
        n_sources=cfg.n_sources,
    )


def gr_height(classified: ClassifiedPaths, h_i: float | None = None, range_m: float | None = None) -> float | None:
    """Implied height of the strongest ground-reflection candidate, or ``None``.

    ``h_i`` and ``range_m`` are accepted for symmetry with the inversion
    formula; the candidate heights were already computed at classification.
    """
    if not classified.gr_candidates:
        return None
    best = max(classified.gr_candidates, key=lambda c: abs(c.path.gain))
    return best.implied_height_m


@dataclass(frozen=True)
class FusedHeight:
    z_music_m: float
    z_gr_m: float | None
    w_a: float
    w_b: float
    z_fused_m: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def consistency_weight(z_a: float, z_b: float, sigma_z: float) -> float:
    return math.exp(-((z_a - z_b) ** 2) / (2 * sigma_z**2))


def fusion_weights(
    snr_a: float, snr_los: float, amplitude_ratio: float, z_a: float, z_b: float | None, sigma_z: float
) -> tuple[float, float]:
    """``w_A = SNR_A``; ``w_B = rho * SNR_LoS * exp(-(z_A - z_B)^2 / (2 sigma_z^2))``."""
    if z_b is None:
        return float(snr_a), 0.0
    return float(snr_a), float(amplitude_ratio * snr_los * consistency_weight(z_a, z_b, sigma_z))


def fuse_heights(z_a: float, z_b: float | None, w_a: float, w_b: float) -> FusedHeight:
    """Confidence-weighted mean; ``z_b=None`` or ``w_b=0`` returns ``z_a`` exactly."""
    if not math.isfinite(z_a):
        raise ValueError("z_a must be finite")
    if z_b is None or w_b <= 0:
        return FusedHeight(z_a, z_b, float(w_a), 0.0, float(z_a))
    if w_a < 0:
        raise ValueError("weights must be non-negative")
    total = w_a + w_b
    z = (w_a * z_a + w_b * z_b) / total
    # guard the convex hull against round-off
    z = min(max(z, min(z_a, z_b)), max(z_a, z_b))
    return FusedHeight(z_a, z_b, float(w_a), float(w_b), float(z))
