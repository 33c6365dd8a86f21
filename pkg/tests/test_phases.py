import numpy as np
import pytest

from oscphase.classical import (
    SystemParams,
    beta_from_linear,
    linear_rhs,
    riccati_rhs,
)
from oscphase.errors import ConsistencyError, DegenerateFrameError
from oscphase.integrate import StepControl, adaptive_integrate, initial_bundle
from oscphase.phases import (
    EllipseFrame,
    PhaseLedger,
    frame_amplitude_offset,
    frame_from_linear,
    gamma_geometric,
    gamma_total,
    gamma_total_from_angles,
    hannay_rate_beta,
    hannay_rate_frame,
    k_rate,
    total_rate,
    total_rate_frame,
    transport_residual,
    wedge,
)
from oscphase.schedules import ConstantSchedule, SinusoidalComponent, SinusoidalSchedule

SHO = (1.0, 0.0, 1.0)


def random_consistent_state(rng):
    """A (Q, P, coeffs) triple with the width on the normalizable side."""
    while True:
        Q = rng.normal() + 1j * rng.normal()
        P = rng.normal() + 1j * rng.normal()
        if abs(Q) > 0.2 and beta_from_linear(Q, P).real > 0.05:
            coeffs = tuple(rng.normal(size=3))
            return Q, P, coeffs


class TestWedge:
    def test_unit_area(self):
        assert wedge((1, 0), (0, 1)) == 1.0

    def test_antisymmetry_on_self(self):
        assert wedge((1.3 + 2j, -0.7j), (1.3 + 2j, -0.7j)) == 0.0

    def test_arithmetic(self):
        assert wedge((1, 2j), (3, 4)) == 4 - 6j

    def test_bilinear_antisymmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            a, b, c = (rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(3))
            lam = rng.normal() + 1j * rng.normal()
            assert wedge(a, b) == pytest.approx(-wedge(b, a))
            assert wedge(a + lam * c, b) == pytest.approx(wedge(a, b) + lam * wedge(c, b))


class TestFrame:
    def test_substitution(self):
        fr = frame_from_linear(1.0, 0.5)
        assert (fr.e1, fr.e2) == (1.0, 1j)

    def test_area_identity(self):
        fr = frame_from_linear(2j, 0.5)
        assert (fr.e1, fr.e2) == (2.0, 2j)
        assert fr.area == pytest.approx(8.0)  # 4 |Q|^2 Re(beta)

    def test_area_positive_for_real_width(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            Q = rng.normal() + 1j * rng.normal()
            if abs(Q) < 0.1:
                continue
            omega = rng.uniform(0.2, 3.0)
            fr = frame_from_linear(Q, omega / 2)
            assert fr.area == pytest.approx(4 * abs(Q) ** 2 * omega / 2)
            assert fr.area > 0

    def test_degenerate(self):
        with pytest.raises(DegenerateFrameError):
            frame_from_linear(0.0, 0.5)


class TestHannayRates:
    def test_pure_phase_rotation(self):
        fr = frame_from_linear(1.0, 0.4 + 0.1j)
        for c in (0.3, -1.7):
            assert hannay_rate_frame(fr, 1j * c * fr.vector) == pytest.approx(c)

    def test_pure_dilation_sweeps_zero(self):
        fr = frame_from_linear(2.0, 0.4)
        assert hannay_rate_frame(fr, 0.7 * fr.vector) == pytest.approx(0.0, abs=1e-15)

    def test_frame_and_width_forms_agree(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            Q, P, coeffs = random_consistent_state(rng)
            beta = beta_from_linear(Q, P)
            dbeta = riccati_rhs(beta, coeffs)
            dQ, _ = linear_rhs(Q, P, coeffs)
            dln = 2.0 * (dQ / Q).real
            r = abs(Q)
            dr = r * (dQ / Q).real
            fr = frame_from_linear(Q, beta)
            dE = np.array([dr, 2j * (dbeta * r + beta * dr)])
            assert hannay_rate_frame(fr, dE) == pytest.approx(
                hannay_rate_beta(beta, dbeta, dln), abs=1e-8
            )

    def test_inconsistent_dilation_flagged(self):
        # beta frozen while |Q| dilates is not a solution: realness check fires
        with pytest.raises(ConsistencyError):
            hannay_rate_beta(0.5, 0.0, 2.0 * 0.3)

    def test_zero_width_degeneracy(self):
        with pytest.raises(DegenerateFrameError):
            hannay_rate_beta(0.5j, 0.1, 0.0)

    def test_nonreal_frame_quotient_flagged(self):
        fr = EllipseFrame(1.0, 1j)
        with pytest.raises(ConsistencyError):
            hannay_rate_frame(fr, np.array([1.0, 0.0]))


class TestTotalRate:
    def test_harmonic_value(self):
        assert total_rate(0.5, SHO, 0.0) == pytest.approx(-1.0)

    def test_all_zero(self):
        assert total_rate(0.5, (0.0, 0.0, 0.0), 0.0) == 0.0

    def test_two_paths_agree(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            Q, P, coeffs = random_consistent_state(rng)
            beta = beta_from_linear(Q, P)
            dbeta = riccati_rhs(beta, coeffs)
            dQ, _ = linear_rhs(Q, P, coeffs)
            dln = 2.0 * (dQ / Q).real
            r, dr = abs(Q), abs(Q) * (dQ / Q).real
            fr = frame_from_linear(Q, beta)
            dE = np.array([dr, 2j * (dbeta * r + beta * dr)])
            assert total_rate(beta, coeffs, dln) == pytest.approx(
                total_rate_frame(fr, dE, coeffs), abs=1e-8
            )


class TestTransport:
    def test_mean_area_zero_condition(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            Q, P, coeffs = random_consistent_state(rng)
            beta = beta_from_linear(Q, P)
            dbeta = riccati_rhs(beta, coeffs)
            dQ, _ = linear_rhs(Q, P, coeffs)
            r, dr = abs(Q), abs(Q) * (dQ / Q).real
            fr = frame_from_linear(Q, beta)
            dE = np.array([dr, 2j * (dbeta * r + beta * dr)])
            rate = hannay_rate_frame(fr, dE)
            resid = transport_residual(fr, dE, rate)
            scale = np.linalg.norm(fr.vector) * np.linalg.norm(dE)
            assert abs(resid) < 1e-8 * scale


class TestKRate:
    def test_harmonic_turning_point(self):
        # L(0) = -H = -1/2 and the width term contributes -hbar/2
        params = SystemParams(l=0.0)
        dk = k_rate(1.0, 0.0, 0.0, 0.5, SHO, params)
        assert dk == pytest.approx(1j * (-0.5 - 0.5))

    def test_all_coefficients_zero(self):
        params = SystemParams(l=0.0)
        assert k_rate(1.0, 0.3, 0.0, 0.5, (0.0, 0.0, 0.0), params) == 0.0

    def test_identity_with_guiding_flow(self):
        # i * integral of (L + Z l^2/q^2) telescopes to i(pq - p0 q0)/2
        params = SystemParams(l=1.0)
        sched = SinusoidalSchedule(
            SinusoidalComponent(1.0, 0.3, 1.0, 0.0),
            SinusoidalComponent(0.0),
            SinusoidalComponent(1.0),
        )
        y0 = initial_bundle(sched, params, q0=1.0, p0=0.0)
        traj = adaptive_integrate(y0, sched, 2 * np.pi, params=params)
        fin = traj.sample(len(traj) - 1)
        lhs = fin.k - 0.0 + 2j * params.hbar * params.nu * fin.S
        rhs = 0.5j * (fin.p * fin.q - 0.0)
        assert abs(lhs - rhs) < 1e-7


class TestGamma:
    def test_prefactor_arithmetic(self):
        assert SystemParams(l=0.0).nu == 0.5
        assert SystemParams(l=1.0).nu == pytest.approx(1 - np.sqrt(5) / 2)
        assert gamma_geometric(SystemParams(l=1.0), 1.0) == pytest.approx(1 - np.sqrt(5) / 2)
        assert gamma_geometric(SystemParams(l=0.0), 0.8) == pytest.approx(0.4)
        assert gamma_geometric(SystemParams(l=2.0), 0.0) == 0.0

    def test_harmonic_total_phase(self):
        params = SystemParams(l=0.0)
        sched = ConstantSchedule(*SHO)
        y0 = initial_bundle(sched, params)
        traj = adaptive_integrate(y0, sched, 2 * np.pi, params=params)
        led = PhaseLedger.from_bundle(traj.sample(len(traj) - 1), params)
        assert led.gamma_l == pytest.approx(-np.pi, abs=1e-8)
        assert led.gamma_l == pytest.approx(0.5 * led.theta, abs=1e-10)

    def test_two_forms_agree_along_run(self):
        params = SystemParams(l=0.0)
        sched = SinusoidalSchedule(
            SinusoidalComponent(1.2, 0.3, 1.0, 0.0),
            SinusoidalComponent(0.0, 0.25, 1.0, np.pi / 2),
            SinusoidalComponent(1.0, 0.2, 1.0, np.pi),
        )
        y0 = initial_bundle(sched, params)
        traj = adaptive_integrate(y0, sched, 2 * np.pi, params=params)
        for i in range(0, len(traj), 37):
            st = traj.sample(i)
            led = PhaseLedger.from_bundle(st, params)
            g1 = gamma_total(params, led.S)
            g2 = gamma_total_from_angles(params, led.theta, led.ln_qq)
            assert abs(g1 - g2) < 1e-8


class TestLedgerDecomposition:
    def test_theta_decomposition_identically(self):
        params = SystemParams(l=0.0)
        sched = SinusoidalSchedule(
            SinusoidalComponent(1.2, 0.3, 1.0, 0.0),
            SinusoidalComponent(0.0, 0.25, 1.0, np.pi / 2),
            SinusoidalComponent(1.0, 0.2, 1.0, np.pi),
        )
        y0 = initial_bundle(sched, params)
        traj = adaptive_integrate(y0, sched, 2 * np.pi, params=params)
        for i in range(len(traj)):
            led = PhaseLedger.from_bundle(traj.sample(i), params)
            assert led.theta - led.theta_H - led.theta_D == 0.0
            assert isinstance(led.gamma_G, float)

    def test_dynamical_angle_point_independent(self):
        # two real solutions with different angular offsets keep (A, phi)
        # constant in the transported frame, so theta_D is shared
        params = SystemParams(l=0.0)
        sched = SinusoidalSchedule(
            SinusoidalComponent(1.2, 0.3, 1.0, 0.0),
            SinusoidalComponent(0.0, 0.25, 1.0, np.pi / 2),
            SinusoidalComponent(1.0, 0.2, 1.0, np.pi),
        )
        y0 = initial_bundle(sched, params)
        control = StepControl(max_step=0.01)
        traj = adaptive_integrate(y0, sched, 2 * np.pi, control, params=params)

        # real solutions come from the real/imag parts of the complex flow.
        # w_phi(t) = A Re[E e^{-i(theta+phi)}]; reconstruct phi at samples.
        offsets = {}
        for i in range(0, len(traj), 25):
            st = traj.sample(i)
            beta = beta_from_linear(st.Q, st.P)
            fr = frame_from_linear(st.Q, beta)
            theta = st.theta.real
            phase = st.Q / abs(st.Q)
            for label, w in (
                ("re", (np.real(st.Q), np.real(st.P))),
                ("im", (np.imag(st.Q), np.imag(st.P))),
            ):
                amp, phi = frame_amplitude_offset(w, fr, theta)
                offsets.setdefault(label, []).append((amp, phi))
        for label, rows in offsets.items():
            amps = np.array([r[0] for r in rows])
            phis = np.unwrap([r[1] for r in rows])
            assert np.max(np.abs(amps - amps[0])) < 1e-7
            assert np.max(np.abs(phis - phis[0])) < 1e-7
        # and the two tracked points differ by a constant offset
        phi_re = np.unwrap([r[1] for r in offsets["re"]])
        phi_im = np.unwrap([r[1] for r in offsets["im"]])
        diff = phi_re - phi_im
        assert np.max(np.abs(diff - diff[0])) < 1e-7
