"""End-to-end height estimation for one target over a baseline stack.

Three estimators share the same observations:

* ``ED-NOMP``: NOMP paths, LoS gains into MUSIC, the ground-reflection height
  picks the MUSIC alias and is fused with it.
* ``NOMP``: NOMP paths, MUSIC only.
* ``OMP``: grid OMP paths, MUSIC only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import SPEED_OF_LIGHT
from .nomp_core import DetectorConfig, EstimationResult, detect_all, detection_threshold, omp_baseline
from .path_classify import ClassifierConfig, ClassifiedPaths, classify_paths
from .scene_sim import ChannelObservation, PathKind, Scene, WaveformConfig
from .tomo_fusion import (
    BaselineStack,
    ElevationConfig,
    FusedHeight,
    MusicResult,
    deramp_ground_phase,
    fuse_heights,
    fusion_weights,
    music_elevation,
    rayleigh_resolution,
)

ALGORITHMS = ("ED-NOMP", "NOMP", "OMP")


@dataclass(frozen=True)
class DetectorSettings:
    """How the stop threshold is set per observation.

    ``stop_threshold=None`` uses the CFAR rule on the estimated noise power.
    """

    stop_threshold: float | None = None
    p_fa: float = 0.01
    oversampling_factor: int = 4
    max_paths: int = 8
    global_rounds: int = 10
    interim_rounds: int = 10
    global_tolerance: float = 1e-12

    def config_for(self, obs: ChannelObservation, wf: WaveformConfig) -> DetectorConfig:
        thr = self.stop_threshold
        if thr is None:
            thr = detection_threshold(obs, wf, p_fa=self.p_fa, oversampling=self.oversampling_factor)
        return DetectorConfig(
            stop_threshold=thr,
            oversampling_factor=self.oversampling_factor,
            max_paths=self.max_paths,
            global_rounds=self.global_rounds,
            interim_rounds=self.interim_rounds,
            global_tolerance=self.global_tolerance,
        )


@dataclass
class CellEstimate:
    """Height, range and velocity estimates for one target and one algorithm."""

    algorithm: str
    height_m: float
    range_m: np.ndarray
    radial_velocity_mps: np.ndarray
    n_paths: np.ndarray
    music: MusicResult | None = field(default=None, repr=False)
    fused: FusedHeight | None = None
    gr_height_m: float | None = None


def run_detector(obs: ChannelObservation, wf: WaveformConfig, settings: DetectorSettings, kind: str) -> EstimationResult:
    cfg = settings.config_for(obs, wf)
    fn = omp_baseline if kind == "OMP" else detect_all
    return fn(obs, wf, cfg, warn=False)


def ground_reference_ranges(scene: Scene, target_index: int, n_baselines: int, n_snapshots: int) -> np.ndarray:
    """``(L, K)`` distances from each platform position to the zero-height point under the target."""
    x, y, _ = scene.targets[target_index].position_m
    ref = np.array([x, y, 0.0])
    out = np.empty((n_baselines, n_snapshots))
    for i in range(n_baselines):
        for k in range(n_snapshots):
            out[i, k] = np.linalg.norm(scene.platform_position(i, k) - ref)
    return out


def ground_range(scene: Scene, target_index: int) -> float:
    x, y, _ = scene.targets[target_index].position_m
    p = scene.platform_position(0, 0)
    return float(math.hypot(x - p[0], y - p[1]))


def _stack(classified, scene, target_index, wf, n_baselines):
    K = len(classified[0])
    gains = np.array([[c.los.gain for c in row] for row in classified[:n_baselines]])
    r0 = ground_reference_ranges(scene, target_index, n_baselines, K)
    stack = BaselineStack(
        gains,
        np.array([scene.altitude(i) for i in range(n_baselines)]),
        reference_range_m=float(r0[0, 0]),
        wavelength_m=wf.wavelength_m,
        ground_range_m=ground_range(scene, target_index),
    )
    return deramp_ground_phase(stack, r0)


def _gr_summary(classified, n_baselines):
    """Median ground-reflection height and amplitude ratio over all observations with a candidate."""
    z, rho = [], []
    for row in classified[:n_baselines]:
        for c in row:
            if c.gr_candidates:
                best = max(c.gr_candidates, key=lambda g: abs(g.path.gain))
                z.append(best.implied_height_m)
                rho.append(best.amplitude_ratio)
    if not z:
        return None, 0.0
    return float(np.median(z)), float(np.median(rho))


def _los_snr(results, classified, wf, n_baselines) -> float:
    """Integrated LoS SNR ``|beta|^2 |Omega| / sigma^2`` from the final residuals."""
    snr = []
    for res_row, cls_row in zip(results[:n_baselines], classified[:n_baselines]):
        for res, c in zip(res_row, cls_row):
            sigma2 = max(res.final_energy / wf.n_active, np.finfo(float).tiny)
            snr.append(abs(c.los.gain) ** 2 * wf.n_active / sigma2)
    return float(np.mean(snr))


def estimate_cell(
    algorithm: str,
    results: list[list[EstimationResult]],
    classified: list[list[ClassifiedPaths]],
    scene: Scene,
    target_index: int,
    wf: WaveformConfig,
    elevation: ElevationConfig,
    n_baselines: int,
) -> CellEstimate:
    """Height estimate from the first ``n_baselines`` rows of per-observation results.

    ``results[i][k]`` and ``classified[i][k]`` belong to baseline ``i`` and
    snapshot ``k``. Raises ``RankDeficientCovariance`` from MUSIC.
    """
    stack = _stack(classified, scene, target_index, wf, n_baselines)
    music = music_elevation(stack, elevation)
    z_a = music.z_hat_m
    fused = None
    z_b = None
    if algorithm == "ED-NOMP":
        z_b, rho = _gr_summary(classified, n_baselines)
        if z_b is not None:
            # the coarse but unambiguous height selects the MUSIC alias
            z_a = music.nearest_peak(z_b)
        sigma_z = rayleigh_resolution(stack) / 2
        w_a, w_b = fusion_weights(music.snr_eff, _los_snr(results, classified, wf, n_baselines), rho, z_a, z_b, sigma_z)
        fused = fuse_heights(z_a, z_b, w_a, w_b)
        height = fused.z_fused_m
    else:
        height = z_a
    rows = classified[:n_baselines]
    return CellEstimate(
        algorithm=algorithm,
        height_m=float(height),
        range_m=np.array([[c.range_m for c in row] for row in rows]),
        radial_velocity_mps=np.array([[c.radial_velocity_mps for c in row] for row in rows]),
        n_paths=np.array([[len(r.paths) for r in row] for row in results[:n_baselines]]),
        music=music,
        fused=fused,
        gr_height_m=z_b,
    )


def detect_and_classify(
    observations: list[list[ChannelObservation]],
    scene: Scene,
    wf: WaveformConfig,
    settings: DetectorSettings,
    classifier: ClassifierConfig,
    kind: str,
):
    """Run one detector on every observation and classify its paths.

    Raises ``NoPathsDetected`` if any observation yields no path.
    """
    results, classified = [], []
    for i, row in enumerate(observations):
        h_i = scene.altitude(i)
        res_row = [run_detector(o, wf, settings, kind) for o in row]
        results.append(res_row)
        classified.append([classify_paths(r.paths, h_i, wf.wavelength_m, classifier) for r in res_row])
    return results, classified


@dataclass(frozen=True)
class TruthSummary:
    height_m: float
    range_m: np.ndarray
    radial_velocity_mps: np.ndarray


def truth_for(observations: list[list[ChannelObservation]], scene: Scene, target_index: int, wf: WaveformConfig) -> TruthSummary:
    """LoS range and radial velocity per observation from the synthesis ground truth."""
    rng, vel = [], []
    for row in observations:
        r_row, v_row = [], []
        for o in row:
            los = next(p for p in o.ground_truth if p.kind == PathKind.LOS and p.target_index == target_index)
            r_row.append(SPEED_OF_LIGHT * los.delay_s / 2)
            v_row.append(wf.wavelength_m * los.doppler_hz / 2)
        rng.append(r_row)
        vel.append(v_row)
    return TruthSummary(scene.targets[target_index].height_m, np.array(rng), np.array(vel))
