import cmath

import numpy as np
import pytest

from oscphase.classical import (
    SystemParams,
    beta_from_guiding,
    beta_from_linear,
    classical_hamiltonian,
    guiding_rhs,
    lagrangian,
    linear_rhs,
    monodromy,
    riccati_fixed_point,
    riccati_rhs,
    tied_momentum,
)
from oscphase.errors import ConfigError, DegenerateFrameError, SingularityError
from oscphase.integrate import StepControl, adaptive_integrate, initial_bundle
from oscphase.schedules import ConstantSchedule, SinusoidalComponent, SinusoidalSchedule

SHO = (1.0, 0.0, 1.0)


class TestSystemParams:
    def test_l_zero_collapses_branches(self):
        p = SystemParams(l=0.0)
        assert p.s == 0.5
        assert p.power_exponent == 0.0
        assert p.nu == 0.5

    def test_s_and_nu(self):
        p = SystemParams(l=1.0, hbar=1.0)
        assert p.s == pytest.approx(np.sqrt(1.25))
        assert p.nu == pytest.approx(1.0 - np.sqrt(5.0) / 2.0)

    def test_plus_branch(self):
        p = SystemParams(l=0.5, power_branch="plus")
        assert p.power_exponent == pytest.approx(0.5 + p.s)
        assert p.nu == pytest.approx(1.0 + p.s)

    def test_validation(self):
        with pytest.raises(ConfigError):
            SystemParams(l=-1.0)
        with pytest.raises(ConfigError):
            SystemParams(hbar=0.0)
        with pytest.raises(ConfigError):
            SystemParams(power_branch="both")


class TestGuidingRhs:
    def test_sho_turning_point(self):
        dq, dp = guiding_rhs(1.0, 0.0, SHO, SystemParams(l=0.0))
        assert (dq, dp) == (0.0, -1.0)

    def test_singular_equilibrium(self):
        # the inverse-cube force balances the spring at q^4 = Z l^2 / X
        dq, dp = guiding_rhs(1.0, 0.0, SHO, SystemParams(l=1.0))
        assert dq == 0.0
        assert dp == pytest.approx(0.0, abs=1e-15)

    def test_pure_shear(self):
        dq, dp = guiding_rhs(2.0, 3.0, (0.0, 1.0, 0.0), SystemParams(l=5.0))
        assert dq == 2.0
        assert dp == pytest.approx(-3.0 + 5.0 * 0.0)  # Z = 0 kills the l-term

    def test_singularity_guard(self):
        with pytest.raises(SingularityError):
            guiding_rhs(1e-9, 0.0, SHO, SystemParams(l=1.0))

    def test_l_zero_reduces_to_linear_flow(self):
        rng = np.random.default_rng(5)
        p0 = SystemParams(l=0.0)
        for _ in range(25):
            q, p = rng.normal(size=2) + 1j * rng.normal(size=2)
            coeffs = tuple(rng.normal(size=3))
            assert guiding_rhs(q, p, coeffs, p0) == linear_rhs(q, p, coeffs)


class TestLinearRhs:
    def test_basic(self):
        assert linear_rhs(1.0, 0.0, SHO) == (0.0, -1.0)

    def test_rotation_solution(self):
        # (Q, P) = e^{it}(1, i) solves the flow at unit frequency
        for t in (0.0, 0.7, 2.1):
            w = cmath.exp(1j * t)
            dQ, dP = linear_rhs(w, 1j * w, SHO)
            assert dQ == pytest.approx(1j * w)
            assert dP == pytest.approx(1j * (1j * w))

    def test_arithmetic(self):
        assert linear_rhs(1.0, 1.0, (2.0, 3.0, 5.0)) == (8.0, -5.0)


class TestRiccati:
    def test_harmonic_fixed_point_selected_by_sign(self):
        beta = riccati_fixed_point(SHO, sign=-1)
        assert beta == pytest.approx(0.5)
        assert abs(riccati_rhs(beta, SHO, sign=-1)) < 1e-15

    def test_wrong_sign_has_no_normalizable_fixed_point(self):
        with pytest.raises(ConfigError):
            riccati_fixed_point(SHO, sign=+1)

    def test_zero_beta_stationary_without_stiffness(self):
        assert riccati_rhs(0.0, (0.0, 0.7, 1.3)) == 0.0

    def test_general_fixed_point(self):
        coeffs = (1.2, 0.25, 1.0)
        beta = riccati_fixed_point(coeffs)
        omega = np.sqrt(1.2 * 1.0 - 0.25**2)
        assert beta == pytest.approx((omega + 0.25j) / 2.0)

    def test_matches_chain_rule_through_linearization(self):
        # d/dt[-(i/2)P/Q] along the linear flow equals the width equation
        rng = np.random.default_rng(2)
        for _ in range(40):
            Q, P = rng.normal(size=2) + 1j * rng.normal(size=2)
            coeffs = tuple(rng.normal(size=3))
            beta = beta_from_linear(Q, P)
            dQ, dP = linear_rhs(Q, P, coeffs)
            chain = -0.5j * (dP / Q - P * dQ / Q**2)
            assert riccati_rhs(beta, coeffs) == pytest.approx(chain, abs=1e-12)


class TestBetaFromLinear:
    def test_examples(self):
        assert beta_from_linear(1.0, 2.0j) == pytest.approx(1.0)
        assert beta_from_linear(1.0, 0.0) == 0.0
        assert beta_from_linear(2j, 2j) == pytest.approx(-0.5j)

    def test_guard(self):
        with pytest.raises(DegenerateFrameError):
            beta_from_linear(0.0, 1.0)


class TestEnergyAndLagrangian:
    def test_hamiltonian_examples(self):
        p0 = SystemParams(l=0.0)
        assert classical_hamiltonian(1.0, 0.0, SHO, p0) == 0.5
        assert classical_hamiltonian(1.0, 1.0, (1.0, 1.0, 1.0), p0) == 2.0
        assert classical_hamiltonian(1.0, 0.0, SHO, SystemParams(l=1.0)) == 1.0

    def test_lagrangian_examples(self):
        p0 = SystemParams(l=0.0)
        # turning point: dq = 0 so L = -H
        assert lagrangian(1.0, 0.0, 0.0, SHO, p0) == -0.5
        assert lagrangian(1.0, 1.0, 1.0, SHO, p0) == 0.0
        assert lagrangian(1.3, 0.7, 0.0, (0.0, 0.0, 0.0), p0) == 0.0

    def test_energy_conserved_with_singular_term(self):
        # constant coefficients, l != 0, ten characteristic periods
        params = SystemParams(l=2.0)
        sched = ConstantSchedule(*SHO)
        y0 = initial_bundle(sched, params, q0=1.0, p0=0.0)
        T = 10 * 2 * np.pi
        control = StepControl(rel_tol=1e-12, abs_tol=1e-14)
        traj = adaptive_integrate(y0, sched, T, control, params=params, n_samples=400)
        h0 = classical_hamiltonian(1.0, 0.0, SHO, params)
        drift = 0.0
        for i in range(len(traj)):
            st = traj.sample(i)
            h = classical_hamiltonian(st.q, st.p, SHO, params)
            drift = max(drift, abs(h - h0) / abs(h0))
        assert drift < 1e-8


class TestTiedInitialData:
    def test_tie_inverts_the_width_relation(self):
        params = SystemParams(l=0.7)
        beta0 = 0.4 + 0.1j
        p0 = tied_momentum(1.5, beta0, params)
        assert beta_from_guiding(1.5, p0, params) == pytest.approx(beta0)

    def test_l_zero_tie_is_the_linear_relation(self):
        params = SystemParams(l=0.0)
        assert tied_momentum(1.0, 0.5, params) == pytest.approx(1j)


class TestMonodromy:
    def test_full_period_is_identity(self):
        m = monodromy(ConstantSchedule(*SHO), 2 * np.pi)
        assert np.max(np.abs(m - np.eye(2))) < 1e-8

    def test_zero_horizon_exact_identity(self):
        m = monodromy(ConstantSchedule(*SHO), 0.0)
        assert np.array_equal(m, np.eye(2, dtype=complex))

    def test_quarter_period_rotation(self):
        m = monodromy(ConstantSchedule(*SHO), np.pi / 2)
        want = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert np.max(np.abs(m - want)) < 1e-8

    def test_unit_determinant_for_generic_schedule(self):
        sched = SinusoidalSchedule(
            SinusoidalComponent(1.2, 0.3, 1.0, 0.0),
            SinusoidalComponent(0.0, 0.25, 1.0, np.pi / 2),
            SinusoidalComponent(1.0, 0.2, 1.0, np.pi),
        )
        m = monodromy(sched, 2 * np.pi, StepControl(rel_tol=1e-12, abs_tol=1e-14))
        assert abs(np.linalg.det(m) - 1.0) < 1e-8


def test_riccati_linear_equivalence_along_run():
    # integrating the width directly or through the linear flow agree pointwise
    sched = SinusoidalSchedule(
        SinusoidalComponent(1.2, 0.3, 1.0, 0.0),
        SinusoidalComponent(0.0, 0.25, 1.0, np.pi / 2),
        SinusoidalComponent(1.0, 0.2, 1.0, np.pi),
    )
    params = SystemParams(l=0.0)
    y0 = initial_bundle(sched, params)
    control = StepControl(max_step=0.01)
    traj = adaptive_integrate(y0, sched, 2 * np.pi, control, params=params)
    gap = 0.0
    for i in range(len(traj)):
        st = traj.sample(i)
        gap = max(gap, abs(st.beta - beta_from_linear(st.Q, st.P)))
    assert gap < 1e-8
    assert traj.monitors.max_shadow_gap < 1e-8
