import json
import math

import numpy as np
import pytest

from ednomp.bench import (
    CSV_HEADER,
    ExperimentSpec,
    RmseCell,
    auto_range_gate,
    default_scene,
    emit_reports,
    gnuplot_script,
    output_dir,
    plan_frame,
    read_rmse_csv,
    run_experiment,
    run_trial,
)
from ednomp.nr_frame import InfeasibleError, RadarRequirements
from ednomp.scene_sim import Target, WaveformConfig

SMALL_WF = WaveformConfig(32, 16, 960e3, 26e9)


def small_spec(**kw):
    base = dict(waveform=SMALL_WF, snr_grid_db=(0.0, 10.0), baseline_counts=(4, 6), n_trials=3, seed=1)
    base.update(kw)
    return ExperimentSpec(**base)


@pytest.fixture(scope="module")
def small_report():
    spec = small_spec()
    return spec, run_experiment(spec)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_spec(n_trials=0)
        with pytest.raises(ValueError):
            small_spec(baseline_counts=(1,))
        with pytest.raises(ValueError):
            small_spec(algorithms=("MUSIC",))

    def test_auto_gate_precedes_target(self):
        sc = default_scene()
        gate = auto_range_gate(sc, SMALL_WF)
        r_ground = math.hypot(5000.0, 1000.0)
        assert r_ground - 3e8 / (2 * 960e3) < gate < r_ground

    def test_dict_is_json(self):
        json.dumps(small_spec().to_dict())


class TestPlanFrame:
    def test_table_block(self):
        plan = plan_frame(RadarRequirements(5.208, 1250.0, 0.05, 26e9))
        assert plan.mu == 3 and plan.scs_hz == 120e3 and plan.prf_hz == 800.0

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            plan_frame(RadarRequirements(1.0, 10000.0, 0.05, 26e9))

    def test_trivial_window(self):
        assert plan_frame(RadarRequirements(3e8 / (480 * 15e3), 10000.0, 0.05, 26e9)).mu == 0


class TestRun:
    def test_noise_free_ed_nomp_below_one_meter(self):
        spec = small_spec(snr_grid_db=(200.0,), baseline_counts=(6,), n_trials=5, algorithms=("ED-NOMP",),
                          height_range_m=(10.0, 100.0))
        c = run_experiment(spec).cell("ED-NOMP", 6, 200.0)
        assert c.trial_count == 5 and c.rmse_height_m < 1.0

    def test_cells_and_counts(self, small_report):
        spec, rep = small_report
        assert len(rep.cells) == 3 * 2 * 2
        for c in rep.cells.values():
            assert c.trial_count + c.failures == spec.n_trials
            for m in ("rmse_height_m", "rmse_range_m", "rmse_velocity_mps"):
                assert c.metric(m) >= 0 or math.isnan(c.metric(m))

    def test_deterministic(self, small_report):
        spec, rep = small_report
        again = run_experiment(spec)
        assert again.rows() == rep.rows()

    def test_heights_redrawn_per_trial(self):
        spec = small_spec()
        from ednomp.bench import _trial_scene

        a = _trial_scene(spec, 0, 0.0, 0.0).targets[0].position_m[2]
        b = _trial_scene(spec, 1, 0.0, 0.0).targets[0].position_m[2]
        assert a != b and 5 <= a <= 120 and a == _trial_scene(spec, 0, 10.0, 0.0).targets[0].position_m[2]

    def test_failure_accounting(self):
        # target far outside the height gate and a stop threshold nothing reaches
        spec = small_spec(n_trials=2, snr_grid_db=(0.0,), baseline_counts=(4,))
        from dataclasses import replace

        spec = replace(spec, detector=replace(spec.detector, stop_threshold=1e30))
        rep = run_experiment(spec)
        for c in rep.cells.values():
            assert c.failures == 2 and c.trial_count == 0 and math.isnan(c.rmse_height_m)
        assert len(rep.flagged_cells()) == len(rep.cells)

    def test_aggregation_is_associative(self):
        spec = small_spec(n_trials=2, snr_grid_db=(10.0,))
        parts = [run_trial(spec, t, 0)[0] for t in range(2)]
        whole = run_experiment(spec)
        for key, c in whole.cells.items():
            acc = RmseCell(*key)
            for p in reversed(parts):
                acc.add(p[key])
            assert acc.rmse_height_m == pytest.approx(c.rmse_height_m, rel=1e-12)

    def test_multi_target(self):
        sc = default_scene()
        from dataclasses import replace

        sc = replace(sc, targets=(Target((5000.0, 0.0, 30.0), reflection_coefficient=0.6),
                                  Target((5000.0, 40.0, 60.0), reflection_coefficient=0.6)))
        spec = small_spec(scene=sc, n_trials=1, snr_grid_db=(10.0,), baseline_counts=(4,))
        rep = run_experiment(spec)
        assert all(c.trial_count + c.failures == 2 for c in rep.cells.values())


class TestReports:
    def test_files_and_round_trip(self, small_report, tmp_path):
        spec, rep = small_report
        files = emit_reports(spec, rep, tmp_path, timestamp="T")
        names = {p.name for p in files}
        assert {"manifest.json", "rmse.csv", "fig4.gp", "timing.json"} <= names
        assert any(p.parent.name == "spectra" for p in files)
        rows = read_rmse_csv(tmp_path / "rmse.csv")
        for got, want in zip(rows, rep.rows()):
            assert got[:4] == want[:4] and got[5] == want[5]
            assert (math.isnan(got[4]) and math.isnan(want[4])) or got[4] == want[4]
        assert len(rows) == len(rep.rows())
        spectrum = (tmp_path / "spectra").iterdir().__next__().read_text().splitlines()
        assert spectrum[0] == "z_m,pseudo_spectrum" and len(spectrum) == 513

    def test_csv_format(self, small_report, tmp_path):
        spec, rep = small_report
        emit_reports(spec, rep, tmp_path, timestamp="T")
        text = (tmp_path / "rmse.csv").read_bytes().decode("utf-8")
        assert text.splitlines()[0] == ",".join(CSV_HEADER)
        assert ";" not in text

    def test_empty_algorithms(self, tmp_path):
        spec = small_spec(algorithms=())
        rep = run_experiment(spec)
        files = emit_reports(spec, rep, tmp_path, timestamp="T")
        assert {p.name for p in files} == {"manifest.json", "rmse.csv"}
        assert (tmp_path / "rmse.csv").read_text().splitlines() == [",".join(CSV_HEADER)]

    def test_manifest_identical_modulo_timestamp(self, small_report, tmp_path):
        spec, rep = small_report
        emit_reports(spec, rep, tmp_path / "a", timestamp="2026-01-01T00:00:00Z")
        emit_reports(spec, run_experiment(spec), tmp_path / "b", timestamp="2026-02-02T00:00:00Z")
        a = json.loads((tmp_path / "a" / "manifest.json").read_text())
        b = json.loads((tmp_path / "b" / "manifest.json").read_text())
        a.pop("timestamp"), b.pop("timestamp")
        assert a == b
        assert (tmp_path / "a" / "rmse.csv").read_bytes() == (tmp_path / "b" / "rmse.csv").read_bytes()

    def test_manifest_diff_across_seeds(self, small_report, tmp_path):
        spec, rep = small_report
        from dataclasses import replace

        other = replace(spec, seed=2)
        emit_reports(spec, rep, tmp_path / "a", timestamp="T")
        emit_reports(other, run_experiment(other), tmp_path / "b", timestamp="T")
        a = json.loads((tmp_path / "a" / "manifest.json").read_text())
        b = json.loads((tmp_path / "b" / "manifest.json").read_text())
        diff = {k for k in a if a[k] != b[k]}
        assert diff <= {"seed", "spec", "results", "flagged_cells"}
        assert "seed" in diff
        spec_diff = {k for k in a["spec"] if a["spec"][k] != b["spec"][k]}
        assert spec_diff == {"seed"}

    def test_manifest_has_resolved_defaults(self, small_report, tmp_path):
        spec, rep = small_report
        emit_reports(spec, rep, tmp_path, timestamp="T")
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert m["resolved"]["range_gate_m"] == spec.resolved_range_gate()
        assert set(m["versions"]) == {"python", "numpy", "scipy"}
        assert m["spec"]["elevation"]["n_grid"] == 512

    def test_gnuplot_script(self, small_report):
        _, rep = small_report
        text = gnuplot_script(rep)
        assert text.count("<< EOD") == 6 and "plot $S0" in text

    def test_io_error_has_path(self, small_report, tmp_path):
        spec, rep = small_report
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            emit_reports(spec, rep, blocker / "sub")


def test_output_dir_env(monkeypatch):
    monkeypatch.delenv("EDNOMP_OUTPUT_DIR", raising=False)
    assert output_dir(None) == "results"
    monkeypatch.setenv("EDNOMP_OUTPUT_DIR", "/tmp/x")
    assert output_dir(None) == "/tmp/x"
    assert output_dir("given") == "given"


def test_rmse_cell_definition():
    c = RmseCell("NOMP", 6, 0.0, trial_count=4, sq_height=16.0)
    assert c.rmse_height_m == 2.0
    assert np.isnan(RmseCell("NOMP", 6, 0.0).rmse_height_m)
