"""Ellipse-frame transport, angle rates, and the quantum phase bookkeeping.

The linear flow is area preserving, so initial conditions on a centered
ellipse stay on a family of homothetic centered ellipses.  A complex
2-vector E(t) encodes that family; transporting the ellipse's origin so the
phase-averaged swept area vanishes splits the accumulated angle into a
geometric part theta_H (the nonadiabatic Hannay angle) and a dynamical
remainder theta_D.  The quantum phases then follow from theta and theta_H
through the branch prefactor nu.

All rate functions return real numbers but verify en route that the
imaginary residue of the defining quotient is at rounding level; the check
doubles as an integration-quality monitor, because the quotients are real
only on genuine solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import classical
from .classical import SystemParams
from .errors import ConsistencyError, DegenerateFrameError
from .schedules import flow_matrix

REALNESS_TOL = 1e-8
AREA_FLOOR = 1e-300


def wedge(a, b):
    """Antisymmetric pairing a1*b2 - a2*b1 of two complex 2-vectors."""
    return complex(a[0]) * complex(b[1]) - complex(a[1]) * complex(b[0])


@dataclass(frozen=True)
class EllipseFrame:
    """Frame vector E = (e1, e2) describing a family of centered ellipses.

    Frames built from the linear flow have e1 real positive and area
    -i(E* ^ E) = 4 |Q|^2 Re(beta) > 0 for normalizable widths.
    """

    e1: complex
    e2: complex

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.e1, self.e2], dtype=complex)

    @property
    def area(self) -> float:
        w = -1j * wedge(np.conj(self.vector), self.vector)
        return float(w.real)


def frame_from_linear(Q, beta, eps_q: float = classical.DEFAULT_EPS_Q) -> EllipseFrame:
    """Frame with the overall phase of Q removed: E = (|Q|, 2i beta |Q|)."""
    r = abs(complex(Q))
    if r <= eps_q:
        raise DegenerateFrameError(f"|Q| = {r:.3e}: frame undefined")
    return EllipseFrame(e1=complex(r), e2=2j * complex(beta) * r)


def _real_checked(value: complex, label: str, tol: float = REALNESS_TOL) -> float:
    if abs(value.imag) > tol * (1.0 + abs(value.real)):
        raise ConsistencyError(
            f"{label} has imaginary residue {value.imag:.3e} "
            f"(real part {value.real:.3e}); inputs are not a consistent solution"
        )
    return float(value.real)


def hannay_rate_frame(frame: EllipseFrame, dE) -> float:
    """Geometric angle rate (E* ^ dE) / (i (E* ^ E)) of the mean-area-zero transport.

    A frame motion collinear with E (dE = lambda E) maps the ellipse family
    to itself: its rotation component Im(lambda) is returned directly and the
    dilation component is not a consistency violation.  For any other motion
    the quotient must be real up to rounding; a large imaginary residue means
    the inputs do not belong to one solution.
    """
    e = frame.vector
    e_conj = np.conj(e)
    dE = np.asarray(dE, dtype=complex)
    denom = 1j * wedge(e_conj, e)
    if abs(denom) <= AREA_FLOOR:
        raise DegenerateFrameError("zero-area frame: transport undefined")
    norm_scale = float(np.linalg.norm(e) * np.linalg.norm(dE))
    if abs(wedge(e, dE)) <= 1e-12 * max(norm_scale, AREA_FLOOR):
        j = int(np.argmax(np.abs(e)))
        return float((dE[j] / e[j]).imag)
    return _real_checked(wedge(e_conj, dE) / denom, "theta_H rate")


def hannay_rate_beta(beta, dbeta, dln_qq: float) -> float:
    """Geometric angle rate in width variables: -i db/(b+b*) - (i/2) d ln(QQ*)."""
    beta = complex(beta)
    denom = beta + np.conj(beta)
    if denom == 0.0:
        raise DegenerateFrameError("beta + beta* = 0: width form of the rate undefined")
    value = -1j * complex(dbeta) / denom - 0.5j * dln_qq
    return _real_checked(value, "theta_H rate")


def total_rate(beta, coeffs, dln_qq: float) -> float:
    """Total angle rate -2(Z beta - iY/2) - (i/2) d ln(QQ*)."""
    _x, y, z = coeffs
    value = -2.0 * (z * complex(beta) - 0.5j * y) - 0.5j * dln_qq
    return _real_checked(value, "theta rate")


def total_rate_frame(frame: EllipseFrame, dE, coeffs) -> float:
    """Total angle rate via the frame: [(E* ^ dE) + (E* ^ calH E)] / (i (E* ^ E))."""
    e = frame.vector
    e_conj = np.conj(e)
    denom = 1j * wedge(e_conj, e)
    if abs(denom) <= AREA_FLOOR:
        raise DegenerateFrameError("zero-area frame: rate undefined")
    calh = flow_matrix(*coeffs).calh
    value = (wedge(e_conj, np.asarray(dE, dtype=complex)) + wedge(e_conj, calh @ e)) / denom
    return _real_checked(value, "theta rate (frame form)")


def transport_residual(frame: EllipseFrame, dE, dtheta_h: float) -> complex:
    """E* ^ (dE - i dtheta_H E); zero for the mean-area-zero transport."""
    e = frame.vector
    return wedge(np.conj(e), np.asarray(dE, dtype=complex) - 1j * dtheta_h * e)


def k_rate(q, p, dq, beta, coeffs, params: SystemParams, eps_q: float = classical.DEFAULT_EPS_Q):
    """Rate of the global phase/normalization ledger k.

    dk = i [ L + Z l^2/q^2 - 2 hbar nu (Z beta - iY/2) ] with L = p dq - H.
    """
    _x, y, z = coeffs
    lag = classical.lagrangian(q, p, dq, coeffs, params, eps_q)
    sing = 0.0
    if params.l != 0.0:
        sing = z * params.l**2 / complex(q) ** 2
    return 1j * (lag + sing - 2.0 * params.hbar * params.nu * (z * complex(beta) - 0.5j * y))


def gamma_total(params: SystemParams, S) -> complex:
    """Total quantum phase gamma = -2 nu S with S = integral of (Z beta - iY/2)."""
    return -2.0 * params.nu * complex(S)


def gamma_total_from_angles(params: SystemParams, delta_theta: float, delta_ln_qq: float) -> complex:
    """Equivalent form gamma = nu [dtheta + (i/2) d ln(QQ*)]; asserted against gamma_total."""
    return params.nu * (delta_theta + 0.5j * delta_ln_qq)


def gamma_geometric(params: SystemParams, delta_theta_h: float) -> float:
    """Geometric quantum phase gamma_G = nu * dtheta_H."""
    return params.nu * float(delta_theta_h)


def frame_amplitude_offset(point, frame: EllipseFrame, theta: float) -> tuple[float, float]:
    """Amplitude and angular offset of a real phase-space point on the frame.

    A real solution is w(t) = A Re[E(t) exp(-i(theta(t) + phi))]; given the
    frame and the accumulated angle this inverts for (A, phi).  Both are
    constants of the motion, which the dynamical-angle tests exploit.
    """
    w1, w2 = float(np.real(point[0])), float(np.real(point[1]))
    e1 = frame.e1.real
    im2 = frame.e2.imag
    if abs(e1) <= AREA_FLOOR or abs(im2) <= AREA_FLOOR:
        raise DegenerateFrameError("frame not in canonical form for coordinate recovery")
    cr = w1 / e1
    ci = (cr * frame.e2.real - w2) / im2
    c = complex(cr, ci)
    amplitude = abs(c)
    phi = -np.angle(c) - theta
    return float(amplitude), float(phi)


@dataclass(frozen=True)
class PhaseLedger:
    """Snapshot of the accumulated angles and quantum phases at one time."""

    t: float
    theta: float
    theta_H: float
    theta_D: float
    S: complex
    k: complex
    ln_qq: float
    gamma_l: complex
    gamma_G: float

    @classmethod
    def from_bundle(cls, state, params: SystemParams) -> "PhaseLedger":
        """Materialize a ledger row from a bundled integration sample."""
        theta = float(state.theta.real)
        theta_h = float(state.theta_H.real)
        return cls(
            t=state.t,
            theta=theta,
            theta_H=theta_h,
            theta_D=theta - theta_h,
            S=complex(state.S),
            k=complex(state.k),
            ln_qq=float(state.ln_qq.real),
            gamma_l=gamma_total(params, state.S),
            gamma_G=gamma_geometric(params, theta_h),
        )
