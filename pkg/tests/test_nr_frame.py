import math

import pytest
from hypothesis import given, settings, strategies as st

from ednomp.nr_frame import (
    InfeasibleError,
    RadarRequirements,
    feasible_window,
    mu_lower_bound_prf,
    mu_lower_bound_resolution,
    mu_upper_bound_range,
    plan_for_mu,
    pri_from_mu,
    select_numerology,
)

C = 3e8


def req(rho=5.208, r_unamb=1250.0, v=0.05, fc=26e9, n0=1, L0=10):
    return RadarRequirements(rho, r_unamb, v, fc, n0, L0)


def brute_force(r: RadarRequirements):
    """Smallest mu in 0..6 meeting every requirement, evaluated directly from frame quantities."""
    for mu in range(7):
        scs = 15e3 * 2**mu
        bw = 240 * scs
        ok_res = C / (2 * bw) <= r.range_resolution_m * (1 + 1e-4)
        ok_range = C / (2 * scs) >= r.max_unambiguous_range_m / (1 + 1e-4)
        pri = r.ssb_period_slots * r.frame_length_slots * 1e-3 / 2**mu
        ok_prf = 1.0 / pri >= 4 * r.carrier_frequency_hz * r.max_unambiguous_velocity_mps / C / (1 + 1e-4)
        if ok_res and ok_range and ok_prf:
            return mu
    return None


class TestBounds:
    def test_resolution_examples(self):
        assert mu_lower_bound_resolution(req(rho=5.208)) == 3
        assert mu_lower_bound_resolution(req(rho=C / (480 * 15e3))) == 0
        assert mu_lower_bound_resolution(req(rho=2.6)) == 5

    @pytest.mark.parametrize("r, mu", [(10000.0, 0), (1250.0, 3), (5000.0, 1)])
    def test_range_examples(self, r, mu):
        assert mu_upper_bound_range(req(r_unamb=r)) == mu

    def test_prf_examples(self):
        # PRF(mu) = 2**mu / (n0 L0 1 ms) >= 4 f_c v / c
        assert mu_lower_bound_prf(req(v=40.0, n0=2, L0=160)) == 13  # 4437.3
        assert mu_lower_bound_prf(req(v=0.5)) == 1  # 1.733
        assert mu_lower_bound_prf(req(v=0.05)) == -2  # 0.1733
        # argument exactly one
        v_one = C / (4 * 26e9 * 10 * 1e-3)
        assert mu_lower_bound_prf(req(v=v_one)) == 0

    def test_negative_bound_is_clamped(self):
        lo, hi = feasible_window(req(v=0.05))
        assert lo == 3 and hi == 3


class TestSelect:
    def test_table_configuration(self):
        plan = select_numerology(req())
        assert plan.mu == 3
        assert plan.scs_hz == 120e3
        assert plan.mu_window == (3, 3)

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            select_numerology(req(rho=1.0, r_unamb=10000.0))

    def test_prf_above_six_is_infeasible(self):
        with pytest.raises(InfeasibleError):
            select_numerology(req(rho=40.0, r_unamb=100.0, v=40.0, n0=2, L0=160))

    def test_trivial_window(self):
        plan = select_numerology(req(rho=C / (480 * 15e3), r_unamb=10000.0))
        assert plan.mu == 0 and plan.mu_window == (0, 0)

    def test_prefer_largest(self):
        r = req(rho=42.0, r_unamb=100.0)
        assert select_numerology(r, "largest").mu == 6
        assert select_numerology(r).mu == 0

    @settings(max_examples=200, deadline=None)
    @given(
        rho=st.floats(0.3, 60.0),
        r_unamb=st.floats(20.0, 20000.0),
        v=st.floats(0.01, 50.0),
        n0=st.integers(1, 4),
        L0=st.integers(1, 40),
    )
    def test_matches_brute_force(self, rho, r_unamb, v, n0, L0):
        r = req(rho, r_unamb, v, 26e9, n0, L0)
        expected = brute_force(r)
        if expected is None:
            with pytest.raises(InfeasibleError):
                select_numerology(r)
        else:
            assert select_numerology(r).mu == expected

    @settings(max_examples=100, deadline=None)
    @given(rho=st.floats(0.5, 50.0), factor=st.floats(0.1, 1.0), r_unamb=st.floats(50.0, 20000.0))
    def test_monotone_in_requirements(self, rho, factor, r_unamb):
        base = req(rho=rho, r_unamb=r_unamb)
        tight = req(rho=rho * factor, r_unamb=r_unamb / factor)
        assert mu_lower_bound_resolution(tight) >= mu_lower_bound_resolution(base)
        assert mu_upper_bound_range(tight) <= mu_upper_bound_range(base)


class TestPlan:
    @pytest.mark.parametrize("mu, n0, L0, pri", [(0, 1, 10, 10e-3), (3, 1, 10, 1.25e-3), (1, 2, 10, 10e-3)])
    def test_pri(self, mu, n0, L0, pri):
        assert pri_from_mu(mu, n0, L0) == pytest.approx(pri, rel=1e-15)

    def test_table_prf_is_exact(self):
        assert 1.0 / pri_from_mu(3, 1, 10) == 800.0

    def test_pri_rejects_bad_mu(self):
        with pytest.raises(ValueError):
            pri_from_mu(7, 1, 10)

    @pytest.mark.parametrize("mu", range(7))
    def test_plan_invariants(self, mu):
        p = plan_for_mu(mu, req())
        assert p.scs_hz == 2**mu * 15000
        assert p.ssb_bandwidth_hz == 240 * p.scs_hz
        assert math.isclose(p.prf_hz * p.pri_s, 1.0, rel_tol=1e-12)
        assert math.isclose(p.symbol_duration_s * p.scs_hz, 1.0, rel_tol=1e-12)
        assert p.cp_duration_s == pytest.approx(p.symbol_duration_s * 288 / 4096)
        for v in p.to_dict().values():
            if isinstance(v, float):
                assert v > 0

    def test_requirements_validation(self):
        with pytest.raises(ValueError):
            RadarRequirements(-1.0, 1000.0, 1.0, 26e9)
        with pytest.raises(ValueError):
            RadarRequirements(1.0, 1000.0, 1.0, 26e9, ssb_period_slots=1.5)
