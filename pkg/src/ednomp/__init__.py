"""Multi-baseline OFDM radar height estimation with Newtonized OMP and tomographic fusion."""

from .bench import ExperimentSpec, RmseReport, emit_reports, plan_frame, run_experiment
from .nomp_core import DetectorConfig, EstimationResult, PathEstimate, detect_all, omp_baseline
from .nr_frame import InfeasibleError, NumerologyPlan, RadarRequirements, select_numerology
from .path_classify import ClassifiedPaths, ClassifierConfig, classify_paths
from .scene_sim import Scene, Target, WaveformConfig, synthesize_observation
from .tomo_fusion import BaselineStack, ElevationConfig, FusedHeight, fuse_heights, music_elevation

__version__ = "0.1.0"

__all__ = [
    "ExperimentSpec",
    "RmseReport",
    "emit_reports",
    "plan_frame",
    "run_experiment",
    "DetectorConfig",
    "EstimationResult",
    "PathEstimate",
    "detect_all",
    "omp_baseline",
    "InfeasibleError",
    "NumerologyPlan",
    "RadarRequirements",
    "select_numerology",
    "ClassifiedPaths",
    "ClassifierConfig",
    "classify_paths",
    "Scene",
    "Target",
    "WaveformConfig",
    "synthesize_observation",
    "BaselineStack",
    "ElevationConfig",
    "FusedHeight",
    "fuse_heights",
    "music_elevation",
]
