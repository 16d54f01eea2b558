import math
from fractions import Fraction

import numpy as np
import pytest

from comfb import dynamics, measures
from comfb.dynamics import (
    LimitCycle, MeanFieldState, NotConvergedError, QuasiPeriodicError,
    SolverOptions, UnstableError, build_diffusion_matrix, build_drift_matrix,
    detect_limit_cycle, integrate, mean_field_rhs, modulation_period,
    power_balance_residual, settle_to_cycle, stability_check,
)
from comfb.params import SystemParams

from oracles import drift_oracle_matrix, lyapunov_steady_oracle

FAST = SolverOptions(budget_secs=60)


class TestMeanFieldRhs:
    def test_undriven_origin_is_fixed_point(self):
        p = SystemParams(E=0.0)
        da, db = mean_field_rhs(MeanFieldState(0.0, 0j, 0j), p)
        assert da == 0 and db == 0

    def test_drive_only_injection(self):
        p = SystemParams(E=100.0, r_b=0.35)
        da, db = mean_field_rhs(MeanFieldState(0.0, 0j, 0j), p)
        assert da == pytest.approx(p.t_b * 100.0)
        assert db == 0

    def test_static_relaxation_to_closed_form(self):
        p = SystemParams(g=0.0, G_c=0.0, G_m=0.0, E=50.0, delta_a=0.7,
                         kappa_a=0.4, r_b=0.2, N_b=0.0)
        lam = p.kappa_fb + 1j * p.delta_fb
        a_ss = p.t_b * p.E / lam
        t_end = 40.0
        traj = integrate(p, t_end, dt_sample=0.5)
        expect = a_ss * (1.0 - np.exp(-lam * traj.times))
        assert np.max(np.abs(traj.alphas - expect)) < 1e-7 * abs(a_ss)


class TestDriftMatrix:
    def test_decoupled_blocks(self):
        p = SystemParams(G_c=0.0, G_m=0.0, delta_a=0.9, r_b=0.1, kappa_b=0.02)
        A = build_drift_matrix(MeanFieldState(0.3, 0j, 0j), p)
        kfb = p.kappa_fb
        np.testing.assert_allclose(A[:2, :2], [[-kfb, 0.9], [-0.9, -kfb]],
                                   atol=1e-15)
        np.testing.assert_allclose(A[2:, 2:], [[-0.02, 1.0], [-1.0, -0.02]],
                                   atol=1e-15)
        np.testing.assert_allclose(A[:2, 2:], 0.0, atol=0)
        np.testing.assert_allclose(A[2:, :2], 0.0, atol=0)

    def test_coupling_entries_layout(self):
        rng = np.random.default_rng(2)
        p = SystemParams()
        for _ in range(20):
            alpha = complex(*rng.normal(size=2)) * 1e4
            A = build_drift_matrix(MeanFieldState(rng.uniform(0, 50), alpha, 0j), p)
            gx, gy = p.g * alpha.real, p.g * alpha.imag
            assert A[0, 2] == pytest.approx(-2 * gy, rel=1e-15)
            assert A[1, 2] == pytest.approx(2 * gx, rel=1e-15)
            assert A[3, 0] == pytest.approx(2 * gx, rel=1e-15)
            assert A[3, 1] == pytest.approx(2 * gy, rel=1e-15)

    def test_structural_zeros_exact(self):
        rng = np.random.default_rng(4)
        p = SystemParams()
        for _ in range(100):
            st = MeanFieldState(rng.uniform(0, 100),
                                complex(*rng.normal(size=2)) * 1e5,
                                complex(*rng.normal(size=2)) * 1e4)
            A = build_drift_matrix(st, p)
            assert A[0, 3] == 0.0 and A[1, 3] == 0.0
            assert A[2, 0] == 0.0 and A[2, 1] == 0.0

    def test_symbolic_quadrature_oracle(self):
        oracle = drift_oracle_matrix()
        rng = np.random.default_rng(12)
        p = SystemParams(theta=0.4, r_b=0.2, theta_c=0.3, theta_m=1.1)
        for _ in range(100):
            tv = rng.uniform(0.0, 80.0)
            alpha = complex(*rng.normal(size=2)) * 1e5
            beta = complex(*rng.normal(size=2)) * 1e4
            A = build_drift_matrix(MeanFieldState(tv, alpha, beta), p)
            expect = oracle(tv, alpha, beta, p)
            np.testing.assert_allclose(A, expect, rtol=0, atol=1e-12 * max(
                1.0, np.max(np.abs(expect))))

    def test_literal_phonon_frequency_variant(self):
        p = SystemParams(omega_m=2.0, G_m=0.0)
        st = MeanFieldState(0.0, 0j, 0j)
        default = build_drift_matrix(st, p)
        literal = build_drift_matrix(st, p, literal_phonon_frequency=True)
        assert default[3, 2] == pytest.approx(-1.0)
        assert literal[3, 2] == pytest.approx(-2.0)


class TestDiffusionMatrix:
    def test_open_cavity_vacuum(self):
        p = SystemParams(r_b=0.0, theta=0.0, N_a=0.0, N_b=0.0)
        D = build_diffusion_matrix(p)
        assert D[0, 0] == pytest.approx(p.kappa_a)
        assert D[1, 1] == D[0, 0]

    def test_theta_zero_coefficient(self):
        p = SystemParams(r_b=0.25, theta=0.0, N_a=0.5, N_b=0.0)
        D = build_diffusion_matrix(p)
        expect = p.kappa_a * p.t_b ** 2 * (1 - 0.25) ** 2 * 2.0
        assert D[0, 0] == pytest.approx(expect, rel=1e-12)

    def test_closed_port_limit(self):
        p = SystemParams(r_b=1.0 - 1e-9, N_b=0.0)
        D = build_diffusion_matrix(p)
        assert D[0, 0] < 1e-8

    def test_phonon_entries(self):
        p = SystemParams(N_b=10.0, kappa_b=0.01)
        D = build_diffusion_matrix(p)
        assert D[2, 2] == pytest.approx(0.01 * 21.0)
        assert D[3, 3] == D[2, 2]
        assert np.count_nonzero(D - np.diag(np.diag(D))) == 0


class TestIntegrate:
    def test_uncoupled_thermalization(self):
        p = SystemParams(g=0.0, G_c=0.0, G_m=0.0, E=0.0, kappa_b=0.05, N_b=3.0)
        y0 = dynamics.initial_state(p)
        y0[4:] = (0.5 * np.eye(4)).reshape(-1)  # start from vacuum
        traj = integrate(p, 400.0, y0=y0, dt_sample=5.0)
        target = np.diag([0.5, 0.5, 3.5, 3.5])
        np.testing.assert_allclose(traj.covs[-1], target, atol=1e-6)
        # approach is monotone in the phonon variance
        vxb = traj.covs[:, 2, 2]
        assert np.all(np.diff(vxb) > -1e-12)

    def test_constant_A_matches_algebraic_lyapunov(self):
        p = SystemParams(G_c=0.0, G_m=0.0, E=2.0e4, kappa_b=0.05, N_b=20.0,
                         delta_a=0.8)
        cycle, _ = settle_to_cycle(p, FAST)
        A = build_drift_matrix(
            MeanFieldState(cycle.times[0], cycle.alphas[0], cycle.betas[0]), p)
        D = build_diffusion_matrix(p)
        V_oracle = lyapunov_steady_oracle(A, D)
        err = np.linalg.norm(cycle.covs[0] - V_oracle)
        assert err <= 1e-6

    def test_divergence_reported_as_instability(self):
        p = SystemParams(r_b=0.6)  # kappa_fb < 0
        with pytest.raises(UnstableError):
            settle_to_cycle(p, SolverOptions(budget_secs=20))


class TestModulationPeriod:
    def test_single_modulation(self):
        p = SystemParams(G_c=0.0, G_m=0.02, omega_m=1.9)
        info = modulation_period(p)
        assert info.tau == pytest.approx(2 * math.pi / 1.9)

    def test_rationalization_17_over_10(self):
        p = SystemParams(delta_c=1.18, omega_m=1.7 * 1.18)
        info = modulation_period(p)
        # continued-fraction oracle
        assert Fraction(1.7 * 1.18 / 1.18).limit_denominator(64) == Fraction(17, 10)
        assert info.rational == (17, 10)
        assert info.tau == pytest.approx(2 * math.pi * 10 / 1.18)

    def test_quasi_periodic_rejected(self):
        p = SystemParams(omega_m=math.sqrt(2) * 1.18)
        with pytest.raises(QuasiPeriodicError):
            modulation_period(p)

    def test_no_modulation_accepts_any_period(self):
        p = SystemParams(G_c=0.0, G_m=0.0)
        assert modulation_period(p).tau == pytest.approx(2 * math.pi)


class TestDetectLimitCycle:
    def test_detects_on_settled_trajectory(self):
        p = SystemParams(kappa_b=0.05, N_b=5.0)
        tau = modulation_period(p).tau
        traj = integrate(p, 40 * tau, dt_sample=tau / 64)
        cycle = detect_limit_cycle(traj, p)
        assert cycle.poincare_residual <= 1e-5
        assert len(cycle.times) == 64

    def test_not_converged_on_short_transient(self):
        p = SystemParams(kappa_b=0.05, N_b=5.0)
        tau = modulation_period(p).tau
        traj = integrate(p, 3 * tau, dt_sample=tau / 64)
        with pytest.raises(NotConvergedError):
            detect_limit_cycle(traj, p)

    def test_constant_A_fixed_point_is_periodic(self):
        p = SystemParams(g=0.0, G_c=0.0, G_m=0.0, E=10.0, kappa_b=0.05,
                         N_b=2.0)
        tau = modulation_period(p).tau
        traj = integrate(p, 120 * tau, dt_sample=tau / 64)
        cycle = detect_limit_cycle(traj, p)
        assert cycle.poincare_residual <= 1e-8


class TestStabilityCheck:
    @staticmethod
    def _fixed_point_cycle(p, n=64):
        times = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
        zeros = np.zeros(n, dtype=complex)
        covs = np.repeat(np.eye(4)[None], n, axis=0)
        return LimitCycle(2 * math.pi, times, zeros, zeros, covs, 0.0)

    def test_decoupled_damped(self):
        p = SystemParams(g=0.0, G_c=0.0, G_m=0.0, E=0.0, kappa_b=0.07,
                         N_b=0.0, kappa_a=0.4, r_b=0.1)
        rep = stability_check(p, self._fixed_point_cycle(p))
        assert rep.stable
        assert rep.max_re_eig == pytest.approx(-min(p.kappa_fb, 0.07), rel=1e-9)
        assert rep.dominant_phonon_re == pytest.approx(-0.07, rel=1e-9)

    def test_gain_regime_unstable(self):
        p = SystemParams(r_b=0.6, g=0.0, G_c=0.0, G_m=0.0)
        rep = stability_check(p, self._fixed_point_cycle(p))
        assert not rep.stable
        assert rep.max_re_eig == pytest.approx(-p.kappa_fb, rel=1e-9)

    def test_requires_enough_samples(self):
        p = SystemParams()
        with pytest.raises(ValueError):
            stability_check(p, self._fixed_point_cycle(p, n=32))


class TestPowerBalance:
    def test_identity_on_converged_cycle(self):
        p = SystemParams()
        cycle, _ = settle_to_cycle(p, FAST)
        assert power_balance_residual(cycle, p) <= 1e-4

    def test_undriven_decayed_state(self):
        # G_m must stay below the parametric threshold 2 G_m < kappa_b
        p = SystemParams(E=0.0, G_c=0.0, G_m=0.0, kappa_b=0.05, N_b=1.0)
        cycle, _ = settle_to_cycle(p, FAST)
        assert power_balance_residual(cycle, p) == 0.0

    def test_radiation_pressure_term_is_conservative(self):
        # photon number is conserved by the optomechanical coupling, so the
        # term vanishes to rounding order
        p = SystemParams()
        cycle, _ = settle_to_cycle(p, FAST)
        terms = dynamics.power_balance_terms(cycle, p)
        assert abs(terms["P_om"]) < 1e-6 * abs(terms["P_drv"])


class TestCycleInvariants:
    def test_symmetry_physicality_periodicity(self):
        p = SystemParams(r_b=0.15)
        cycle, info = settle_to_cycle(p, FAST)
        assert cycle.poincare_residual <= 1e-5
        for V in cycle.covs[::16]:
            assert np.max(np.abs(V - V.T)) <= 1e-10
            assert measures.min_symplectic_eigenvalue(V) >= 0.5 - 1e-6

    def test_fig2_feedback_raises_cycle_amplitude(self):
        opts = FAST
        c0, _ = settle_to_cycle(SystemParams(r_b=0.0), opts)
        c15, _ = settle_to_cycle(SystemParams(r_b=0.15), opts)
        assert np.mean(np.abs(c15.alphas)) > np.mean(np.abs(c0.alphas))
