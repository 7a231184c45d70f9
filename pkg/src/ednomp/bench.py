"""Monte-Carlo RMSE sweeps over SNR and baseline count, and their reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from .constants import SPEED_OF_LIGHT
from .nr_frame import NumerologyPlan, RadarRequirements, select_numerology
from .path_classify import ClassifierConfig, DegenerateLoS, NoPathsDetected
from .pipeline import (
    ALGORITHMS,
    DetectorSettings,
    detect_and_classify,
    estimate_cell,
    truth_for,
)
from .scene_sim import Scene, Target, WaveformConfig, synthesize_observation
from .tomo_fusion import ElevationConfig, RankDeficientCovariance

__version__ = "0.1.0"

METRICS = ("rmse_height_m", "rmse_range_m", "rmse_velocity_mps", "mean_detected_paths")
CSV_HEADER = ("algorithm", "L", "snr_db", "metric", "value", "trials")
FAILURE_FLAG_FRACTION = 0.2
TRIAL_FAILURES = (NoPathsDetected, RankDeficientCovariance, DegenerateLoS)


def plan_frame(req: RadarRequirements, prefer: str = "smallest") -> NumerologyPlan:
    return select_numerology(req, prefer)


def default_waveform() -> WaveformConfig:
    # 960 kHz keeps the 10..120 m ground-bounce excess delay above one range cell at N = 64
    return WaveformConfig(n_subcarriers=64, n_symbols=32, scs_hz=960e3, carrier_frequency_hz=26e9)


def default_scene() -> Scene:
    return Scene(
        platform_reference_altitude_m=1000.0,
        baseline_spacing_m=2.0,
        n_baselines=10,
        platform_velocity_mps=40.0,
        targets=(Target((5000.0, 0.0, 30.0), reflection_coefficient=0.6),),
        normalize_gain=True,
    )


def auto_range_gate(scene: Scene, wf: WaveformConfig, margin: float = 0.3) -> float:
    """Window start a fraction ``margin`` of the unambiguous range before the nearest ground point.

    Elevated targets are closer than their ground point, so the margin must
    cover ``R(0) - R(z_max)``; the ground bounce lands later in the window.
    """
    unamb = SPEED_OF_LIGHT / (2 * wf.scs_hz)
    ranges = []
    for t in scene.targets:
        x, y, _ = t.position_m
        ranges.append(float(np.linalg.norm(scene.platform_position(0, 0) - np.array([x, y, 0.0]))))
    return min(ranges) - margin * unamb


@dataclass
class ExperimentSpec:
    """One Monte-Carlo sweep.

    ``height_range_m`` redraws every target height uniformly per trial (the
    same draw for all SNRs, baseline counts and algorithms); ``None`` keeps
    the scene heights. ``range_gate_m=None`` resolves via :func:`auto_range_gate`.
    SNR is per sample, relative to a unit LoS gain.
    """

    scene: Scene = field(default_factory=default_scene)
    waveform: WaveformConfig = field(default_factory=default_waveform)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    elevation: ElevationConfig = field(default_factory=ElevationConfig)
    snr_grid_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    baseline_counts: tuple[int, ...] = (6, 8, 10)
    n_trials: int = 100
    seed: int = 0
    algorithms: tuple[str, ...] = ALGORITHMS
    n_snapshots: int = 2
    height_range_m: tuple[float, float] | None = (5.0, 120.0)
    range_gate_m: float | None = None
    spectra_targets: tuple[int, ...] = (0,)
    radar: RadarRequirements | None = None

    def __post_init__(self):
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        self.baseline_counts = tuple(int(b) for b in self.baseline_counts)
        self.algorithms = tuple(self.algorithms)
        self.spectra_targets = tuple(int(t) for t in self.spectra_targets)
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.n_snapshots < 1:
            raise ValueError("n_snapshots must be >= 1")
        if any(b < 2 for b in self.baseline_counts):
            raise ValueError("every baseline count must be >= 2")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")
        if self.height_range_m is not None:
            lo, hi = (float(v) for v in self.height_range_m)
            if not 0 <= lo <= hi:
                raise ValueError("height_range_m must satisfy 0 <= lo <= hi")
            self.height_range_m = (lo, hi)
        if any(not 0 <= t < len(self.scene.targets) for t in self.spectra_targets):
            raise ValueError("spectra_targets index out of range")

    @property
    def max_baselines(self) -> int:
        return max(self.baseline_counts, default=0)

    def resolved_range_gate(self) -> float:
        if self.range_gate_m is not None:
            return float(self.range_gate_m)
        return auto_range_gate(self.scene, self.waveform)

    def to_dict(self) -> dict:
        return {
            "scene": self.scene.to_dict(),
            "waveform": self.waveform.to_dict(),
            "detector": asdict(self.detector),
            "classifier": asdict(self.classifier),
            "elevation": asdict(self.elevation),
            "snr_grid_db": list(self.snr_grid_db),
            "baseline_counts": list(self.baseline_counts),
            "n_trials": self.n_trials,
            "seed": self.seed,
            "algorithms": list(self.algorithms),
            "n_snapshots": self.n_snapshots,
            "height_range_m": None if self.height_range_m is None else list(self.height_range_m),
            "range_gate_m": self.range_gate_m,
            "spectra_targets": list(self.spectra_targets),
            "radar": None if self.radar is None else asdict(self.radar),
        }


@dataclass
class RmseCell:
    algorithm: str
    n_baselines: int
    snr_db: float
    trial_count: int = 0
    failures: int = 0
    sq_height: float = 0.0
    sq_range: float = 0.0
    sq_velocity: float = 0.0
    detected_paths: float = 0.0

    def add(self, other: "RmseCell") -> None:
        self.trial_count += other.trial_count
        self.failures += other.failures
        self.sq_height += other.sq_height
        self.sq_range += other.sq_range
        self.sq_velocity += other.sq_velocity
        self.detected_paths += other.detected_paths

    def _root(self, s: float) -> float:
        return math.sqrt(s / self.trial_count) if self.trial_count else math.nan

    @property
    def rmse_height_m(self) -> float:
        return self._root(self.sq_height)

    @property
    def rmse_range_m(self) -> float:
        return self._root(self.sq_range)

    @property
    def rmse_velocity_mps(self) -> float:
        return self._root(self.sq_velocity)

    @property
    def mean_detected_paths(self) -> float:
        return self.detected_paths / self.trial_count if self.trial_count else math.nan

    def flagged(self, n_trials: int) -> bool:
        return self.failures > FAILURE_FLAG_FRACTION * n_trials

    def metric(self, name: str) -> float:
        return getattr(self, name)


@dataclass
class RmseReport:
    cells: dict[tuple[str, int, float], RmseCell]
    n_trials: int
    spectra: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    elapsed_s: dict[str, float] = field(default_factory=dict)

    def cell(self, algorithm: str, n_baselines: int, snr_db: float) -> RmseCell:
        return self.cells[(algorithm, int(n_baselines), float(snr_db))]

    def rows(self) -> list[tuple]:
        """Long-format rows in a fixed order."""
        out = []
        for key in sorted(self.cells, key=lambda k: (ALGORITHMS.index(k[0]), k[1], k[2])):
            c = self.cells[key]
            for m in METRICS:
                out.append((c.algorithm, c.n_baselines, c.snr_db, m, c.metric(m), c.trial_count))
        return out

    def flagged_cells(self) -> list[dict]:
        return [
            {"algorithm": c.algorithm, "L": c.n_baselines, "snr_db": c.snr_db, "failures": c.failures}
            for c in self.cells.values()
            if c.flagged(self.n_trials)
        ]


def _trial_scene(spec: ExperimentSpec, trial: int, snr_db: float, gate: float) -> Scene:
    scene = spec.scene
    targets = scene.targets
    if spec.height_range_m is not None:
        rng = np.random.default_rng([spec.seed, trial])
        lo, hi = spec.height_range_m
        targets = tuple(
            replace(t, position_m=(t.position_m[0], t.position_m[1], float(rng.uniform(lo, hi)))) for t in targets
        )
    return replace(
        scene,
        targets=targets,
        n_baselines=max(scene.n_baselines, spec.max_baselines),
        noise_power=10.0 ** (-snr_db / 10.0),
        range_gate_m=gate,
        normalize_gain=True,
    )


def _observe(spec, scene, trial, snr_index, target_index):
    seed = (spec.seed, trial, snr_index, target_index)
    return [
        [
            synthesize_observation(scene, spec.waveform, i, k, noise_seed=seed, target_indices=[target_index])
            for k in range(spec.n_snapshots)
        ]
        for i in range(spec.max_baselines)
    ]


def run_trial(spec: ExperimentSpec, trial: int, snr_index: int, gate: float | None = None, keep_spectra=False):
    """All algorithms and baseline counts for one (trial, SNR). Returns ``(cells, spectra)``."""
    snr_db = spec.snr_grid_db[snr_index]
    gate = spec.resolved_range_gate() if gate is None else gate
    scene = _trial_scene(spec, trial, snr_db, gate)
    wf = spec.waveform
    cells = {
        (a, L, snr_db): RmseCell(a, L, snr_db) for a in spec.algorithms for L in spec.baseline_counts
    }
    spectra = {}
    kinds = sorted({"OMP" if a == "OMP" else "NOMP" for a in spec.algorithms})
    for ti in range(len(scene.targets)):
        obs = _observe(spec, scene, trial, snr_index, ti)
        truth = truth_for(obs, scene, ti, wf)
        detected = {}
        for kind in kinds:
            try:
                detected[kind] = detect_and_classify(obs, scene, wf, spec.detector, spec.classifier, kind)
            except TRIAL_FAILURES:
                detected[kind] = None
        for a in spec.algorithms:
            for L in spec.baseline_counts:
                cell = cells[(a, L, snr_db)]
                d = detected["OMP" if a == "OMP" else "NOMP"]
                if d is None:
                    cell.failures += 1
                    continue
                try:
                    est = estimate_cell(a, d[0], d[1], scene, ti, wf, spec.elevation, L)
                except TRIAL_FAILURES:
                    cell.failures += 1
                    continue
                cell.trial_count += 1
                cell.sq_height += (est.height_m - truth.height_m) ** 2
                cell.sq_range += float(np.mean((est.range_m - truth.range_m[:L]) ** 2))
                cell.sq_velocity += float(np.mean((est.radial_velocity_mps - truth.radial_velocity_mps[:L]) ** 2))
                cell.detected_paths += float(np.mean(est.n_paths))
                if keep_spectra and ti in spec.spectra_targets:
                    name = f"{a}_L{L}_snr{snr_db:g}_target{ti}"
                    spectra[name] = (est.music.z_grid_m, est.music.spectrum)
    return cells, spectra


def run_experiment(spec: ExperimentSpec, progress=None) -> RmseReport:
    """Deterministic sweep; per-trial failures are counted, never raised.

    Spectra are kept for trial 0 at the highest SNR.
    """
    gate = spec.resolved_range_gate()
    cells = {
        (a, L, s): RmseCell(a, L, s) for a in spec.algorithms for L in spec.baseline_counts for s in spec.snr_grid_db
    }
    spectra = {}
    elapsed = {}
    if not spec.algorithms or not spec.baseline_counts:
        return RmseReport(cells, spec.n_trials)
    top = int(np.argmax(spec.snr_grid_db)) if spec.snr_grid_db else -1
    for si, snr in enumerate(spec.snr_grid_db):
        t0 = time.perf_counter()
        for trial in range(spec.n_trials):
            got, spec_out = run_trial(spec, trial, si, gate, keep_spectra=(trial == 0 and si == top))
            for key, c in got.items():
                cells[key].add(c)
            spectra.update(spec_out)
            if progress:
                progress(si, trial)
        elapsed[f"{snr:g}"] = time.perf_counter() - t0
    return RmseReport(cells, spec.n_trials, spectra, elapsed)


# ----------------------------------------------------------------------------
# Reports


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else repr(float(value))


def rmse_csv_text(report: RmseReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for alg, L, snr, metric, value, trials in report.rows():
        w.writerow((alg, L, _fmt(snr), metric, _fmt(value), trials))
    return buf.getvalue()


def read_rmse_csv(path) -> list[tuple]:
    """Parse ``rmse.csv`` back into the rows of :meth:`RmseReport.rows`."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [(a, int(L), float(s), m, float(v), int(t)) for a, L, s, m, v, t in r]


def manifest_dict(spec: ExperimentSpec, report: RmseReport, timestamp: str | None = None) -> dict:
    resolved = {"range_gate_m": spec.resolved_range_gate(), "noise_power_per_snr": {
        f"{s:g}": 10.0 ** (-s / 10.0) for s in spec.snr_grid_db
    }}
    if spec.radar is not None:
        resolved["numerology_plan"] = plan_frame(spec.radar).to_dict()
    cells = []
    for key in sorted(report.cells, key=lambda k: (ALGORITHMS.index(k[0]), k[1], k[2])):
        c = report.cells[key]
        cells.append({
            "algorithm": c.algorithm, "L": c.n_baselines, "snr_db": c.snr_db,
            "trial_count": c.trial_count, "failures": c.failures, "flagged": c.flagged(report.n_trials),
            **{m: None if math.isnan(c.metric(m)) else c.metric(m) for m in METRICS},
        })
    return {
        "tool": "ednomp",
        "version": __version__,
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "timestamp": timestamp,
        "seed": spec.seed,
        "spec": spec.to_dict(),
        "resolved": resolved,
        "results": cells,
        "flagged_cells": report.flagged_cells(),
    }


def gnuplot_script(report: RmseReport, metric: str = "rmse_height_m") -> str:
    """Self-contained gnuplot script (inline data blocks) plotting ``metric`` against SNR."""
    lines = [
        "set terminal pngcairo size 900,600",
        "set output 'rmse_height.png'",
        "set logscale y",
        "set xlabel 'SNR (dB)'",
        "set ylabel 'height RMSE (m)'",
        "set grid",
        "set key outside right",
    ]
    series = {}
    for key in sorted(report.cells, key=lambda k: (ALGORITHMS.index(k[0]), k[1], k[2])):
        c = report.cells[key]
        series.setdefault((c.algorithm, c.n_baselines), []).append((c.snr_db, c.metric(metric)))
    plots = []
    for n, ((alg, L), pts) in enumerate(series.items()):
        block = f"$S{n}"
        lines.append(f"{block} << EOD")
        lines += [f"{s!r} {_fmt(v)}" for s, v in pts]
        lines.append("EOD")
        plots.append(f"{block} using 1:2 with linespoints title '{alg} L={L}'")
    if plots:
        lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def emit_reports(spec: ExperimentSpec, report: RmseReport, out_dir, timestamp: str | None = None) -> list[Path]:
    """Write manifest.json, rmse.csv, spectra/*.csv, fig4.gp and timing.json.

    Timing lives outside the manifest so repeated runs stay byte-identical
    apart from ``timestamp``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if timestamp is None:
            timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        p = out / "manifest.json"
        p.write_text(json.dumps(manifest_dict(spec, report, timestamp), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(p)
        if not spec.algorithms:
            p = out / "rmse.csv"
            p.write_text(",".join(CSV_HEADER) + "\n", encoding="utf-8")
            return written + [p]
        p = out / "rmse.csv"
        p.write_text(rmse_csv_text(report), encoding="utf-8")
        written.append(p)
        sdir = out / "spectra"
        if report.spectra:
            sdir.mkdir(exist_ok=True)
        for name in sorted(report.spectra):
            z, s = report.spectra[name]
            p = sdir / f"{name}.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("z_m", "pseudo_spectrum"))
                w.writerows((repr(float(a)), repr(float(b))) for a, b in zip(z, s))
            written.append(p)
        p = out / "fig4.gp"
        p.write_text(gnuplot_script(report), encoding="utf-8")
        written.append(p)
        p = out / "timing.json"
        p.write_text(json.dumps({"elapsed_s_per_snr": report.elapsed_s}, indent=2) + "\n", encoding="utf-8")
        written.append(p)
    except OSError as exc:
        raise OSError(f"writing reports to {out}: {exc}") from exc
    return written


def output_dir(cli_value: str | None, default: str = "results") -> str:
    """CLI flag, else ``$EDNOMP_OUTPUT_DIR``, else ``default``."""
    return cli_value or os.environ.get("EDNOMP_OUTPUT_DIR") or default
