import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ednomp.scene_sim import (
    PathKind,
    Scene,
    Target,
    WaveformConfig,
    ground_reflection_gain,
    ground_reflection_path,
    los_delay,
    los_gain,
    read_observations,
    steering_vector,
    synthesize_observation,
    write_observations,
)

C = 3e8


@pytest.fixture
def wf():
    return WaveformConfig(16, 8, 120e3, 26e9)


def scene(targets, **kw):
    return Scene(1000.0, 2.0, 4, 40.0, tuple(targets), **kw)


class TestGeometry:
    def test_los_delay(self):
        assert los_delay((0, 0, 1000), Target((0, 0, 0))) == pytest.approx(2000 / C, rel=1e-15)
        assert los_delay((0, 0, 1000), Target((1000, 0, 0))) == pytest.approx(2 * math.sqrt(2) * 1000 / C)
        assert los_delay((5, 5, 5), Target((5, 5, 5))) == 0.0

    def test_los_gain_magnitude(self, wf):
        sc = scene([Target((0, 0, 0))])
        lam = C / 26e9
        g = los_gain((0, 0, 1000), Target((0, 0, 0)), wf, sc)
        assert abs(g) == pytest.approx(lam / ((4 * math.pi) ** 1.5 * 1e6), rel=1e-12)
        g2 = los_gain((0, 0, 2000), Target((0, 0, 0)), wf, sc)
        assert abs(g) / abs(g2) == pytest.approx(4.0, rel=1e-12)

    def test_los_phase_full_cycle(self, wf):
        sc = scene([Target((0, 0, 0))])
        lam = wf.wavelength_m
        g = los_gain((0, 0, lam / 2), Target((0, 0, 0)), wf, sc)
        assert np.angle(g) == pytest.approx(0.0, abs=1e-9)

    def test_ground_reflection_range(self):
        delay, geo = ground_reflection_path((0, 0, 1000), Target((5000, 0, 30)))
        assert geo["R_TS"] == pytest.approx(math.hypot(5000, 1030), abs=0.1)
        assert delay == pytest.approx(2 * math.hypot(5000, 1030) / C)

    def test_ground_target_has_equal_delays(self):
        t = Target((5000, 0, 0))
        assert ground_reflection_path((0, 0, 1000), t)[0] == pytest.approx(los_delay((0, 0, 1000), t), rel=1e-15)

    @pytest.mark.parametrize("rg", [1e4, 1e5, 1e6])
    def test_far_field_limit(self, rg):
        h, z = 1000.0, 30.0
        dr = math.hypot(rg, h + z) - math.hypot(rg, h - z)
        rel = abs(dr - 2 * h * z / rg) / dr
        assert rel < 2 * (h / rg) ** 2

    def test_gain_ratio_at_equal_ranges(self, wf):
        sc = scene([Target((0, 0, 0))])
        t = Target((5000, 0, 1e-9), reflection_coefficient=1.0)
        pos = (0, 0, 1000)
        ratio = abs(ground_reflection_gain(pos, t, wf, sc)) / abs(los_gain(pos, t, wf, sc))
        assert ratio == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-9)

    def test_gr_gain_linear_in_gamma(self, wf):
        sc = scene([Target((0, 0, 0))])
        pos = (0, 0, 1000)
        full = ground_reflection_gain(pos, Target((5000, 0, 30), reflection_coefficient=0.8), wf, sc)
        half = ground_reflection_gain(pos, Target((5000, 0, 30), reflection_coefficient=0.4), wf, sc)
        zero = ground_reflection_gain(pos, Target((5000, 0, 30), reflection_coefficient=0.0), wf, sc)
        assert half == pytest.approx(full / 2, rel=1e-12)
        assert zero == 0

    @settings(max_examples=50, deadline=None)
    @given(z=st.floats(0.5, 200.0), rg=st.floats(500.0, 20000.0), i=st.integers(0, 9))
    def test_gr_delay_exceeds_los(self, z, rg, i):
        t = Target((rg, 0.0, z))
        pos = (0.0, 0.0, 1000.0 + 2.0 * i)
        assert ground_reflection_path(pos, t)[0] > los_delay(pos, t)


class TestAtoms:
    def test_zero_parameters(self, wf):
        assert np.allclose(steering_vector(0.0, 0.0, wf), 1.0)

    def test_dft_column(self, wf):
        a = steering_vector(1 / (wf.n_subcarriers * wf.scs_hz), 0.0, wf).reshape(16, 8)
        k = np.arange(16)
        assert np.allclose(a[:, 0], np.exp(-2j * np.pi * k / 16))

    def test_grid_orthogonality(self, wf):
        a1 = steering_vector(2 / (16 * wf.scs_hz), 0.0, wf)
        a2 = steering_vector(5 / (16 * wf.scs_hz), 0.0, wf)
        assert abs(np.vdot(a1, a2)) < 1e-10

    @settings(max_examples=50, deadline=None)
    @given(tau=st.floats(0, 1e-5), v=st.floats(-1e5, 1e5), sparse=st.booleans())
    def test_norm_equals_support(self, tau, v, sparse):
        wf = WaveformConfig(16, 8, 120e3, 26e9)
        if sparse:
            wf = wf.with_ssb_mask(10, 2, 4)
        a = steering_vector(tau, v, wf)
        assert np.vdot(a, a).real == pytest.approx(wf.n_active, rel=1e-12)

    def test_ssb_mask_shape(self, wf):
        m = wf.with_ssb_mask(10, 2, 4)
        assert m.n_active == 10 * 4
        assert m.active_mask.sum(axis=0).tolist() == [10, 10, 0, 0, 10, 10, 0, 0]


class TestSynthesis:
    def test_single_path_is_one_atom(self, wf):
        sc = scene([Target((3000, 0, 20))], normalize_gain=True, range_gate_m=2900)
        obs = synthesize_observation(sc, wf, 1, 0)
        (p,) = obs.ground_truth
        atom = steering_vector(p.delay_s - obs.delay_offset_s, p.doppler_hz, wf)
        assert np.allclose(obs.values, p.complex_gain * atom, atol=1e-13)
        assert np.max(np.abs(obs.values - p.complex_gain * atom)) < 1e-13

    def test_two_paths_match_direct_evaluation(self, wf):
        sc = scene([Target((3000, 0, 20), reflection_coefficient=0.6)], normalize_gain=True, range_gate_m=2900)
        obs = synthesize_observation(sc, wf, 2, 3)
        assert [p.kind for p in obs.ground_truth] == [PathKind.LOS, PathKind.GROUND_REFLECTION]
        expected = np.zeros((16, 8), dtype=complex)
        T0 = 1 / wf.scs_hz
        for p in obs.ground_truth:
            tau = p.delay_s - obs.delay_offset_s
            for k in range(16):
                for m in range(8):
                    expected[k, m] += p.complex_gain * np.exp(-2j * np.pi * k * wf.scs_hz * tau) * np.exp(
                        2j * np.pi * m * T0 * p.doppler_hz
                    )
        assert np.allclose(obs.values, expected.ravel(), atol=1e-12)

    def test_orthogonal_paths_project_out(self, wf):
        taus = [2 / (16 * wf.scs_hz), 7 / (16 * wf.scs_hz)]
        h = sum((1 + 1j) * steering_vector(t, 0.0, wf) for t in taus)
        for t in taus:
            a = steering_vector(t, 0.0, wf)
            h = h - np.vdot(a, h) / wf.n_active * a
        assert np.linalg.norm(h) < 1e-10

    def test_deterministic_noise(self, wf):
        sc = scene([Target((3000, 0, 20))], normalize_gain=True, noise_power=0.1)
        a = synthesize_observation(sc, wf, 1, 2, noise_seed=(5, 6))
        b = synthesize_observation(sc, wf, 1, 2, noise_seed=(5, 6))
        c = synthesize_observation(sc, wf, 1, 3, noise_seed=(5, 6))
        assert a.values.tobytes() == b.values.tobytes()
        assert not np.array_equal(a.values, c.values)

    def test_noise_power(self, wf):
        sc = scene([Target((3000, 0, 20))], normalize_gain=True, noise_power=0.5)
        clean = synthesize_observation(scene([Target((3000, 0, 20))], normalize_gain=True), wf, 0, 0)
        samples = np.concatenate(
            [synthesize_observation(sc, wf, 0, 0, noise_seed=s).values - clean.values for s in range(200)]
        )
        assert np.mean(np.abs(samples) ** 2) == pytest.approx(0.5, rel=0.05)

    def test_normalized_los_is_unit(self, wf):
        sc = scene([Target((3000, 0, 20))], normalize_gain=True)
        obs = synthesize_observation(sc, wf, 0, 0)
        assert abs(obs.ground_truth[0].complex_gain) == pytest.approx(1.0, rel=1e-12)

    def test_invalid_scene(self):
        with pytest.raises(ValueError):
            Scene(100.0, 2.0, 4, 40.0, (Target((10, 0, 150)),))
        with pytest.raises(ValueError):
            Target((0, 0, -1))


class TestFileFormat:
    @pytest.mark.parametrize("sparse", [False, True])
    def test_round_trip(self, wf, sparse):
        if sparse:
            wf = wf.with_ssb_mask(10, 2, 4)
        sc = scene([Target((3000, 0, 20), reflection_coefficient=0.5)], normalize_gain=True, noise_power=0.01,
                   range_gate_m=2900)
        obs = [synthesize_observation(sc, wf, i, k) for i in range(2) for k in range(3)]
        buf = io.BytesIO()
        write_observations(buf, obs, wf, 2)
        header, back = read_observations(buf.getvalue())
        assert header["n_subcarriers"] == 16 and header["n_records"] == 6 and header["n_baselines"] == 2
        assert np.array_equal(header["mask"], wf.active_mask)
        assert header["delay_offset_s"] == obs[0].delay_offset_s
        for a, b in zip(obs, back):
            assert (a.baseline_index, a.slow_time_index) == (b.baseline_index, b.slow_time_index)
            assert a.values.tobytes() == b.values.tobytes()

    def test_layout(self, wf):
        sc = scene([Target((3000, 0, 20))], normalize_gain=True)
        obs = synthesize_observation(sc, wf, 0, 0)
        buf = io.BytesIO()
        write_observations(buf, [obs], wf, 1)
        raw = buf.getvalue()
        assert raw[:8] == b"EDNOMP01"
        n_omega = wf.n_active
        head = 8 + 5 * 4 + 8 + 8 * n_omega + 8
        vals = np.frombuffer(raw[head:], dtype="<f8")
        assert np.array_equal(vals[0::2], obs.values.real)
        assert np.array_equal(vals[1::2], obs.values.imag)

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            read_observations(b"NOTMAGIC" + bytes(28))
