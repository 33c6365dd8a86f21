"""Classical side of the packet dynamics: guiding trajectory, linear flow, width.

Everything here is a pure function over complex scalars.  The three flows are

* the complex guiding trajectory (q, p) with the inverse-cube force,
* the linear flow (Q, P) generated by the trace-free matrix M,
* the nonlinear width equation for beta, linearized by beta = -(i/2) P/Q.

Sign convention: the width equation ships as

    d(beta)/dt = -i (2 Z beta^2 - 2 i Y beta - X/2)

i.e. ``riccati_sign = -1`` on the X/2 term.  That sign is the one consistent
with the linearization above (differentiate -(i/2)P/Q along the linear flow
and compare) and the one whose constant-coefficient fixed point is the
normalizable harmonic width beta = omega/2.  The opposite sign is kept
reachable as a negative control for the Schrodinger-residual arbiter.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateFrameError, SingularityError
from .schedules import CoefficientSchedule

DEFAULT_EPS_Q = 1e-8


@dataclass(frozen=True)
class SystemParams:
    """Coupling constant l, Planck scale hbar, and the power-law branch.

    Derived quantities:

    * ``s``: sqrt((l/hbar)^2 + 1/4), always >= 1/2;
    * ``power_exponent``: exponent a of the x^a prefactor, 1/2 - s on the
      default ``minus`` branch (the printed one) or 1/2 + s on the regular
      ``plus`` branch;
    * ``nu``: the phase prefactor a + 1/2, which multiplies the accumulated
      angle in all quantum-phase formulas (1 - s on the minus branch).

    For l = 0 both branches coincide: a = 0, nu = 1/2.
    """

    l: float = 0.0
    hbar: float = 1.0
    power_branch: str = "minus"

    def __post_init__(self):
        if self.l < 0.0:
            raise ConfigError(f"l must be >= 0, got {self.l}")
        if not self.hbar > 0.0:
            raise ConfigError(f"hbar must be > 0, got {self.hbar}")
        if self.power_branch not in ("minus", "plus"):
            raise ConfigError(f"power_branch must be 'minus' or 'plus', got {self.power_branch!r}")

    @property
    def s(self) -> float:
        return math.sqrt((self.l / self.hbar) ** 2 + 0.25)

    @property
    def power_exponent(self) -> float:
        return 0.5 - self.s if self.power_branch == "minus" else 0.5 + self.s

    @property
    def nu(self) -> float:
        return self.power_exponent + 0.5


def guiding_rhs(q, p, coeffs, params: SystemParams, eps_q: float = DEFAULT_EPS_Q):
    """Time derivative of the complex guiding trajectory.

    dq = Z p + Y q,  dp = -X q - Y p + Z l^2 / q^3.

    The inverse-cube term is only evaluated for l != 0 and aborts loudly when
    |q| falls below the guard radius: silent step collapse near the
    singularity is worse than a hard failure.
    """
    x, y, z = coeffs
    q = complex(q)
    p = complex(p)
    dq = z * p + y * q
    dp = -x * q - y * p
    if params.l != 0.0:
        if abs(q) <= eps_q:
            raise SingularityError(f"|q| = {abs(q):.3e} <= {eps_q} with l != 0")
        dp += z * params.l**2 / q**3
    return dq, dp


def linear_rhs(Q, P, coeffs):
    """Time derivative of the linear flow: dQ = Y Q + Z P, dP = -X Q - Y P."""
    x, y, z = coeffs
    Q = complex(Q)
    P = complex(P)
    return y * Q + z * P, -x * Q - y * P


def riccati_rhs(beta, coeffs, sign: int = -1):
    """Width-equation right-hand side, d(beta)/dt = -i(2Z b^2 - 2iY b + sign*X/2).

    ``sign`` selects the X/2 term's sign; -1 is the physical convention (see
    module docstring), +1 the negative control.
    """
    x, y, z = coeffs
    beta = complex(beta)
    return -1j * (2.0 * z * beta * beta - 2j * y * beta + sign * x / 2.0)


def beta_from_linear(Q, P, eps_q: float = DEFAULT_EPS_Q):
    """Width parameter from the linear flow: beta = -(i/2) P / Q."""
    Q = complex(Q)
    if abs(Q) <= eps_q:
        raise DegenerateFrameError(f"|Q| = {abs(Q):.3e} <= {eps_q}: width undefined")
    return -0.5j * complex(P) / Q


def riccati_fixed_point(coeffs, sign: int = -1):
    """Stationary width with Re(beta) > 0 for the instantaneous coefficients.

    Solves 2Z b^2 - 2iY b + sign*X/2 = 0 and returns the root with positive
    real part, beta = (omega + iY)/(2Z) with omega = sqrt(XZ - Y^2) in the
    physical sign convention.  Raises when no normalizable root exists
    (hyperbolic instantaneous flow, or the control sign).
    """
    x, y, z = coeffs
    if z == 0.0:
        raise ConfigError("Z = 0: width fixed point undefined")
    disc = cmath.sqrt(-4.0 * y * y - 4.0 * sign * z * x)
    roots = [(2j * y + disc) / (4.0 * z), (2j * y - disc) / (4.0 * z)]
    best = max(roots, key=lambda b: b.real)
    if best.real <= 0.0:
        raise ConfigError(
            f"no fixed-point width with Re(beta) > 0 for (X,Y,Z)=({x},{y},{z}), sign={sign}"
        )
    return best


def tied_momentum(q0, beta0, params: SystemParams):
    """Initial momentum that ties the guiding trajectory to the width.

    Solving beta = -(l + i p q)/(2 q^2) for p gives p = i(2 beta q^2 + l)/q.
    With this choice the packet's quadratic coefficient built from (q, p)
    coincides with the directly evolved width at all times, which is what the
    grid-level verification needs.
    """
    q0 = complex(q0)
    if q0 == 0:
        raise ConfigError("tied momentum undefined for q0 = 0")
    return 1j * (2.0 * complex(beta0) * q0 * q0 + params.l) / q0


def beta_from_guiding(q, p, params: SystemParams, eps_q: float = DEFAULT_EPS_Q):
    """Width implied by the guiding trajectory: beta = -(l + i p q)/(2 q^2)."""
    q = complex(q)
    if abs(q) <= eps_q:
        raise SingularityError(f"|q| = {abs(q):.3e} <= {eps_q}: implied width undefined")
    return -(params.l + 1j * complex(p) * q) / (2.0 * q * q)


def classical_hamiltonian(q, p, coeffs, params: SystemParams, eps_q: float = DEFAULT_EPS_Q):
    """H = (1/2)[Z p^2 + 2 Y p q + X q^2 + Z l^2 / q^2] (complex-capable)."""
    x, y, z = coeffs
    q = complex(q)
    p = complex(p)
    h = 0.5 * (z * p * p + 2.0 * y * p * q + x * q * q)
    if params.l != 0.0:
        if abs(q) <= eps_q:
            raise SingularityError(f"|q| = {abs(q):.3e} <= {eps_q} with l != 0")
        h += 0.5 * z * params.l**2 / (q * q)
    return h


def lagrangian(q, p, dq, coeffs, params: SystemParams, eps_q: float = DEFAULT_EPS_Q):
    """L = p dq - H(q, p)."""
    return complex(p) * complex(dq) - classical_hamiltonian(q, p, coeffs, params, eps_q)


def monodromy(schedule: CoefficientSchedule, T: float, control=None) -> np.ndarray:
    """Time-T map of the linear flow, columns = images of the basis vectors.

    The determinant equals 1 up to the integration tolerance because the
    generator is trace-free; that is a *checked* property downstream, not
    something this integrator enforces.
    """
    from .integrate import StepControl, solve_adaptive

    if control is None:
        control = StepControl()
    if T == 0.0:
        return np.eye(2, dtype=complex)

    from .schedules import evaluate as eval_schedule

    def rhs(t, yvec):
        x, y, z = eval_schedule(schedule, t)
        q1, p1, q2, p2 = yvec
        return np.array(
            [
                y * q1 + z * p1,
                -x * q1 - y * p1,
                y * q2 + z * p2,
                -x * q2 - y * p2,
            ],
            dtype=complex,
        )

    y0 = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)
    ts, ys, _fs, _stats = solve_adaptive(rhs, y0, 0.0, float(T), control)
    q1, p1, q2, p2 = ys[-1]
    return np.array([[q1, q2], [p1, p2]], dtype=complex)
