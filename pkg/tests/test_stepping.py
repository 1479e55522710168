"""Tests for the RK4 integrator, step control, and run-time monitors."""

import numpy as np
import pytest

from fralign.models import (
    ModelParams,
    SystemState,
    burgers_state,
    constant_field,
    gradient_excess,
    make_special_data,
    primitive_state,
    reformulated_state,
    single_mode_field,
    special_state,
)
from fralign.spectral import ParameterError, RealField, SpectralGrid, integrate
from fralign.stepping import (
    RunResult,
    StepperConfig,
    compute_dt,
    run,
    spectral_tail_fraction,
    step_rk4,
)

ALPHA = 0.5


def standard_state(n=128, amp=0.5, u_amp=0.3):
    grid = SpectralGrid(n)
    params = ModelParams(ALPHA, grid)
    rho = single_mode_field(grid, amp, 1, mean=1.0)
    u = RealField(grid, u_amp * np.sin(grid.nodes))
    return primitive_state(params, rho, u)


class TestStepperConfig:
    def test_validation(self):
        with pytest.raises(ParameterError):
            StepperConfig(t_end=-1.0)
        with pytest.raises(ParameterError):
            StepperConfig(t_end=1.0, cfl_transport=1.5)
        with pytest.raises(ParameterError):
            StepperConfig(t_end=1.0, record_every=0)
        with pytest.raises(ParameterError):
            StepperConfig(t_end=1.0, tail_fraction_threshold=2.0)


class TestComputeDt:
    def test_dissipative_bound_halves_with_density(self):
        grid = SpectralGrid(128)
        params = ModelParams(ALPHA, grid)
        cfg = StepperConfig(t_end=1.0)
        st1 = special_state(params, constant_field(grid, 1.0))
        st2 = special_state(params, constant_field(grid, 2.0))
        assert compute_dt(st1, cfg) == pytest.approx(2.0 * compute_dt(st2, cfg))

    def test_quiescent_state_uses_dissipative_bound(self):
        grid = SpectralGrid(128)
        params = ModelParams(ALPHA, grid)
        cfg = StepperConfig(t_end=1.0)
        st = special_state(params, constant_field(grid, 1.0))  # u == 0
        expect = cfg.cfl_dissipation / (1.0 * grid.k_cut ** ALPHA)
        assert compute_dt(st, cfg) == pytest.approx(expect)

    def test_inviscid_burgers_uses_transport_bound(self):
        grid = SpectralGrid(128)
        params = ModelParams(ALPHA, grid, epsilon_burgers=0.0)
        st = burgers_state(params, RealField(grid, 2.0 * np.sin(grid.nodes)))
        cfg = StepperConfig(t_end=1.0)
        assert compute_dt(st, cfg) == pytest.approx(
            cfg.cfl_transport * grid.spacing / 2.0, rel=1e-6
        )


class TestStepRK4:
    def test_steady_state_unchanged(self):
        grid = SpectralGrid(64)
        params = ModelParams(ALPHA, grid)
        st = primitive_state(params, constant_field(grid, 1.0), constant_field(grid, 0.4))
        out = step_rk4(st, 0.01)
        assert np.max(np.abs(out.rho.values - 1.0)) < 1e-15
        assert np.max(np.abs(out.u.values - 0.4)) < 1e-15
        assert out.time == pytest.approx(0.01)

    def test_single_step_conservation(self):
        st = standard_state()
        out = step_rk4(st, 0.01)
        mass0 = integrate(st.rho)
        mass1 = integrate(out.rho)
        assert abs(mass1 - mass0) <= 1e-14 * abs(mass0)
        p1 = integrate(RealField(out.rho.grid, out.rho.values * out.u.values))
        assert abs(p1 - st.momentum0) <= 1e-12 * (1.0 + abs(st.momentum0))

    def test_fourth_order_richardson(self):
        st = standard_state()
        dt = 0.02
        ref = st
        for _ in range(8):
            ref = step_rk4(ref, dt / 8.0)
        coarse = step_rk4(st, dt)
        half = step_rk4(step_rk4(st, dt / 2.0), dt / 2.0)
        e1 = np.max(np.abs(coarse.rho.values - ref.rho.values))
        e2 = np.max(np.abs(half.rho.values - ref.rho.values))
        assert 12.0 < e1 / e2 < 20.0

    def test_rejects_bad_dt(self):
        st = standard_state()
        with pytest.raises(ParameterError):
            step_rk4(st, 0.0)


class TestTailFraction:
    def test_smooth_field_has_tiny_tail(self):
        grid = SpectralGrid(256)
        f = single_mode_field(grid, 0.5, 1, mean=1.0)
        assert spectral_tail_fraction(f) < 1e-20

    def test_rough_field_has_large_tail(self):
        grid = SpectralGrid(256)
        c = np.zeros(grid.n, dtype=complex)
        mode = grid.cutoff_mode - 1
        c[mode] = 0.5
        c[-mode] = 0.5
        from fralign.spectral import SpectralField, inverse_transform

        f = inverse_transform(SpectralField(grid, c))
        assert spectral_tail_fraction(f) == pytest.approx(1.0)


class TestRun:
    def test_steady_run(self):
        grid = SpectralGrid(64)
        params = ModelParams(ALPHA, grid)
        st = primitive_state(params, constant_field(grid, 1.0), constant_field(grid, 0.2))
        r = run(st, StepperConfig(t_end=1.0))
        assert r.termination == "reached_t_end"
        assert r.bkm_integral == 0.0
        assert r.records[0].mass == pytest.approx(r.records[-1].mass)

    def test_inviscid_burgers_shock_detected(self):
        grid = SpectralGrid(1024)
        params = ModelParams(ALPHA, grid, epsilon_burgers=0.0)
        st = burgers_state(params, RealField(grid, np.sin(grid.nodes)))
        r = run(st, StepperConfig(t_end=2.0))
        assert r.termination == "blowup_detected"
        assert 0.9 <= r.final_state.time <= 1.1  # analytic shock time is 1

    def test_alignment_run_clean_and_resolution_stable(self):
        finals = {}
        for n in (128, 256):
            grid = SpectralGrid(n)
            st = make_special_data(single_mode_field(grid, 0.5, 1, mean=1.0), ALPHA)
            r = run(st, StepperConfig(t_end=10.0, record_every=50))
            assert r.termination == "reached_t_end"
            assert np.isfinite(r.bkm_integral)
            assert spectral_tail_fraction(r.final_state.rho) < 1e-10
            finals[n] = r.final_state
        from fralign.spectral import eval_at

        xs = np.linspace(0, 2 * np.pi, 33)[:-1]
        diff = np.max(
            np.abs(eval_at(finals[128].rho, xs) - eval_at(finals[256].rho, xs))
        )
        assert diff < 1e-6

    def test_vacuum_termination(self):
        grid = SpectralGrid(128)
        params = ModelParams(ALPHA, grid)
        pit = RealField(grid, np.maximum(1.0 + np.cos(grid.nodes), 1e-12))
        st = SystemState(params, "special", rho=pit, momentum0=0.0)
        r = run(st, StepperConfig(t_end=1.0))
        assert r.termination == "vacuum"

    def test_step_limit(self):
        st = standard_state()
        r = run(st, StepperConfig(t_end=10.0, max_steps=5))
        assert r.termination == "step_limit"
        assert len(r.records) >= 1

    def test_records_and_bkm_monotone(self):
        st = standard_state()
        r = run(st, StepperConfig(t_end=2.0, record_every=5))
        bkms = [rec.bkm for rec in r.records]
        assert all(b2 >= b1 for b1, b2 in zip(bkms, bkms[1:]))
        times = [rec.time for rec in r.records]
        assert times == sorted(times)
        assert r.records[-1].time == pytest.approx(2.0)

    def test_snapshots_and_stored_fields(self):
        st = standard_state()
        cfg = StepperConfig(t_end=1.0, record_every=10, snapshot_times=(0.25, 0.5), store_fields=True)
        r = run(st, cfg)
        assert len(r.snapshots) == 2
        assert r.snapshots[0][1].time >= 0.25
        assert len(r.states) == len(r.records)

    def test_determinism(self):
        r1 = run(standard_state(), StepperConfig(t_end=1.0, record_every=7))
        r2 = run(standard_state(), StepperConfig(t_end=1.0, record_every=7))
        assert np.array_equal(r1.final_state.rho.values, r2.final_state.rho.values)
        assert r1.bkm_integral == r2.bkm_integral

    def test_momentum_invariance_over_long_run(self):
        st = standard_state(n=128)
        r = run(st, StepperConfig(t_end=10.0, record_every=20))
        drift = max(abs(rec.momentum - st.momentum0) for rec in r.records)
        assert drift <= 1e-8 * (1.0 + abs(st.momentum0))

    def test_mass_invariance_over_long_run(self):
        st = standard_state(n=128)
        r = run(st, StepperConfig(t_end=10.0, record_every=20))
        kappa_mass = r.records[0].mass
        drift = max(abs(rec.mass - kappa_mass) for rec in r.records)
        assert drift <= 1e-12 * abs(kappa_mass)

    def test_reformulated_long_run_matches_momentum_exactly(self):
        stp = standard_state(n=128, u_amp=0.4)
        g = gradient_excess(stp.rho, stp.u, ALPHA)
        st = reformulated_state(stp.params, stp.rho, g, stp.momentum0)
        r = run(st, StepperConfig(t_end=5.0, record_every=20))
        drift = max(abs(rec.momentum - st.momentum0) for rec in r.records)
        assert drift <= 1e-12 * (1.0 + abs(st.momentum0))
