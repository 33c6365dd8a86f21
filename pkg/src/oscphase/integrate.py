"""Adaptive integration of the bundled complex flow.

The bundled state vector packs, in order,

    (q, p, Q, P, beta, theta, theta_H, ln_qq, S, k)

so the phase accumulators see exactly the same accepted-step sequence as the
states they depend on.  theta, theta_H and ln_qq are carried as complex
components whose imaginary parts must stay at rounding level; they double as
an integration-quality monitor checked at every accepted step.

The stepper is a Dormand-Prince 5(4) embedded pair with PI step-size control
and two-point Hermite dense output (4th-order accurate).  It is deliberately
not symplectic: area preservation is a checked property of the flow, not
something the integrator enforces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import classical
from .classical import DEFAULT_EPS_Q, SystemParams
from .errors import BudgetError, ConsistencyError, DegenerateFrameError, SingularityError
from .schedules import CoefficientSchedule

COMPONENTS = ("q", "p", "Q", "P", "beta", "theta", "theta_H", "ln_qq", "S", "k")
IDX = {name: i for i, name in enumerate(COMPONENTS)}

REALNESS_TOL = 1e-8
SHADOW_TOL = 1e-8

# Dormand-Prince 5(4) tableau (FSAL).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_PI_ALPHA = 0.17  # 1/5 - 0.75*beta
_PI_BETA = 0.04


@dataclass(frozen=True)
class StepControl:
    """Error tolerances and step-size limits for the adaptive stepper."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    min_step: float = 1e-13
    max_step: float = math.inf
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0.0 and self.abs_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if not self.min_step < self.max_step:
            raise ValueError("min_step must be < max_step")


def rk4_step(rhs, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step; deterministic."""
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out.view(float))):
        raise SingularityError(f"non-finite derivative in rk4 step at t={t}", t=t)
    return out


def _error_norm(err: np.ndarray, scale: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(rhs, t0, y0, f0, t1, control: StepControl) -> float:
    """Cheap two-probe estimate of a safe first step."""
    scale = control.abs_tol + control.rel_tol * np.abs(y0)
    d0 = _error_norm(y0, scale)
    d1 = _error_norm(f0, scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, abs(t1 - t0))
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = _error_norm(f1 - f0, scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, abs(t1 - t0), control.max_step)


def hermite_interp(t, tl, yl, fl, tr, yr, fr):
    """Two-point cubic Hermite interpolant on [tl, tr] (4th-order accurate)."""
    h = tr - tl
    s = (t - tl) / h
    h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
    h10 = s * (1.0 - s) ** 2
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    return h00 * yl + (h * h10) * fl + h01 * yr + (h * h11) * fr


def solve_adaptive(rhs, y0, t0: float, t1: float, control: StepControl, step_hook=None):
    """Integrate y' = rhs(t, y) from t0 to t1 with the embedded 5(4) pair.

    Returns (ts, ys, fs, stats): accepted-node times, states, derivatives,
    and a stats dict.  ``step_hook(t, y)`` runs after every accepted step and
    may raise to abort.
    """
    if t1 <= t0:
        raise ValueError("t1 must be > t0")
    y = np.asarray(y0, dtype=complex).copy()
    n = y.size
    t = float(t0)
    f = rhs(t, y)
    ts = [t]
    ys = [y.copy()]
    fs = [f.copy()]
    h = _initial_step(rhs, t, y, f, t1, control)
    err_prev = 1e-4
    n_steps = 0
    n_rejected = 0
    k = np.empty((7, n), dtype=complex)
    while t < t1:
        if n_steps >= control.max_steps:
            raise BudgetError(f"exceeded {control.max_steps} steps at t={t:.6g}")
        h = min(h, t1 - t, control.max_step)
        if h < control.min_step:
            raise SingularityError(f"step size underflow ({h:.3e}) at t={t:.6g}", t=t)
        k[0] = f
        for i in range(1, 7):
            yi = y + h * (_A[i] @ k[:i])
            k[i] = rhs(t + _C[i] * h, yi)
        y_new = y + h * (_B @ k)
        if not np.all(np.isfinite(y_new.view(float))):
            raise SingularityError(f"non-finite state produced at t={t:.6g}", t=t)
        err_vec = h * (_E @ k)
        scale = control.abs_tol + control.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = _error_norm(err_vec, scale)
        n_steps += 1
        if err <= 1.0:
            t_new = t + h
            f_new = k[6]  # FSAL: last stage is rhs at (t+h, y_new)
            t, y, f = t_new, y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            if step_hook is not None:
                step_hook(t, y)
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** (-_PI_ALPHA) * err_prev**_PI_BETA
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            err_prev = max(err, 1e-4)
            h *= factor
        else:
            n_rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err**-0.2)
    stats = {"n_steps": n_steps, "n_rejected": n_rejected}
    return np.array(ts), np.array(ys), np.array(fs), stats


@dataclass(frozen=True)
class BundledState:
    """One (t, state-vector) snapshot of the bundled flow."""

    t: float
    y: np.ndarray

    def __getattr__(self, name):
        try:
            return complex(self.y[IDX[name]])
        except KeyError:
            raise AttributeError(name) from None


@dataclass
class RunMonitors:
    """Worst-case drifts recorded at accepted steps."""

    max_imag_drift: float = 0.0
    max_shadow_gap: float = 0.0
    max_area_drift: float = 0.0
    area0: float = 0.0


@dataclass
class Trajectory:
    """Accepted integration nodes plus dense samples at requested times.

    ``times``/``states`` hold the requested output samples (first sample is
    the initial data exactly); the node arrays keep every accepted step so
    any intermediate time can be interpolated afterwards.
    """

    times: np.ndarray
    states: np.ndarray
    node_ts: np.ndarray
    node_ys: np.ndarray
    node_fs: np.ndarray
    monitors: RunMonitors
    stats: dict
    metadata: dict = field(default_factory=dict)

    def state_at(self, t: float) -> BundledState:
        ts = self.node_ts
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"t={t} outside integrated range [{ts[0]}, {ts[-1]}]")
        t = min(max(t, ts[0]), ts[-1])
        i = int(np.searchsorted(ts, t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 2)
        y = hermite_interp(
            t, ts[i], self.node_ys[i], self.node_fs[i], ts[i + 1], self.node_ys[i + 1], self.node_fs[i + 1]
        )
        return BundledState(t=float(t), y=y)

    def sample(self, idx: int) -> BundledState:
        return BundledState(t=float(self.times[idx]), y=self.states[idx])

    def __len__(self) -> int:
        return len(self.times)


def initial_bundle(
    schedule: CoefficientSchedule,
    params: SystemParams,
    q0=1.0,
    p0=0.0,
    beta0=None,
    k0=0.0,
    riccati_sign: int = -1,
) -> np.ndarray:
    """Assemble the t = 0 bundled state.

    beta0 = None picks the instantaneous fixed-point width of the Riccati
    flow at t = 0 (the "ground-state-like" start).  The linear flow starts at
    (Q, P) = (1, 2i beta0) so beta = -(i/2)P/Q holds from the outset.
    """
    from .schedules import evaluate as eval_schedule

    coeffs0 = eval_schedule(schedule, 0.0)
    if beta0 is None:
        beta0 = classical.riccati_fixed_point(coeffs0, sign=riccati_sign)
    beta0 = complex(beta0)
    y0 = np.zeros(len(COMPONENTS), dtype=complex)
    y0[IDX["q"]] = complex(q0)
    y0[IDX["p"]] = complex(p0)
    y0[IDX["Q"]] = 1.0
    y0[IDX["P"]] = 2j * beta0
    y0[IDX["beta"]] = beta0
    y0[IDX["k"]] = complex(k0)
    return y0


def make_bundled_rhs(
    schedule: CoefficientSchedule,
    params: SystemParams,
    riccati_sign: int = -1,
    eps_q: float = DEFAULT_EPS_Q,
    ledger_beta: str = "linear",
):
    """Build the bundled right-hand side closure.

    ``ledger_beta`` selects which width feeds the phase accumulators: the
    linear-flow width -(i/2)P/Q (default) or the directly integrated shadow
    component (used by the sign negative control so a wrong width corrupts
    the ledger it is supposed to corrupt).
    """
    if ledger_beta not in ("linear", "direct"):
        raise ValueError(f"ledger_beta must be 'linear' or 'direct', got {ledger_beta!r}")
    use_direct = ledger_beta == "direct"
    l2 = params.l * params.l
    has_l = params.l != 0.0
    hbar = params.hbar
    nu = params.nu

    def rhs(t: float, yvec: np.ndarray) -> np.ndarray:
        x, y, z = (float(c) for c in schedule.coefficients(t))
        q, p, Qv, Pv, bd = (complex(v) for v in yvec[:5])

        dq = z * p + y * q
        dp = -x * q - y * p
        sing = 0.0
        if has_l:
            if abs(q) <= eps_q:
                raise SingularityError(
                    f"|q| = {abs(q):.3e} hit the singularity guard at t={t:.6g}", t=t
                )
            dp += z * l2 / q**3
            sing = z * l2 / (q * q)

        dQ = y * Qv + z * Pv
        dP = -x * Qv - y * Pv
        dbd = -1j * (2.0 * z * bd * bd - 2j * y * bd + riccati_sign * x / 2.0)

        if abs(Qv) == 0.0:
            raise DegenerateFrameError(f"Q = 0 at t={t:.6g}", t=t)
        if use_direct:
            bl, dbl = bd, dbd
        else:
            bl = -0.5j * Pv / Qv
            dbl = -1j * (2.0 * z * bl * bl - 2j * y * bl - x / 2.0)
        two_re_b = 2.0 * bl.real
        if two_re_b == 0.0:
            raise DegenerateFrameError(f"Re(beta) = 0 at t={t:.6g}", t=t)
        re_qdot_q = (dQ / Qv).real

        dS = z * bl - 0.5j * y
        dtheta = -2.0 * dS - 1j * re_qdot_q
        dtheta_h = -1j * dbl / two_re_b - 1j * re_qdot_q
        dlnqq = complex(2.0 * re_qdot_q)

        lag = p * dq - 0.5 * (z * p * p + 2.0 * y * p * q + x * q * q + sing)
        dk = 1j * (lag + sing - 2.0 * hbar * nu * dS)

        return np.array(
            [dq, dp, dQ, dP, dbd, dtheta, dtheta_h, dlnqq, dS, dk], dtype=complex
        )

    return rhs


def adaptive_integrate(
    y0: np.ndarray,
    schedule: CoefficientSchedule,
    T: float,
    control: StepControl | None = None,
    output_times=None,
    params: SystemParams | None = None,
    riccati_sign: int = -1,
    eps_q: float = DEFAULT_EPS_Q,
    ledger_beta: str = "linear",
    enforce_consistency: bool = True,
    realness_tol: float = REALNESS_TOL,
    shadow_tol: float = SHADOW_TOL,
    n_samples: int = 512,
) -> Trajectory:
    """Integrate the bundled flow over [0, T] and sample at the output times.

    Monitors at every accepted step: imaginary drift of the angle
    components, the gap between the direct width and -(i/2)P/Q, and the
    relative drift of the conserved ellipse area.  With
    ``enforce_consistency`` the first two raise ConsistencyError past
    tolerance instead of merely being recorded.
    """
    if params is None:
        params = SystemParams()
    if control is None:
        control = StepControl()
    if output_times is None:
        output_times = default_output_times(T, schedule, n_samples)
    output_times = np.asarray(output_times, dtype=float)

    rhs = make_bundled_rhs(schedule, params, riccati_sign, eps_q, ledger_beta)
    mon = RunMonitors()
    y0 = np.asarray(y0, dtype=complex)
    Q0, P0 = y0[IDX["Q"]], y0[IDX["P"]]
    mon.area0 = 2.0 * (np.conj(Q0) * P0).imag

    def hook(t, yvec):
        for name in ("theta", "theta_H", "ln_qq"):
            v = yvec[IDX[name]]
            drift = abs(v.imag) / (1.0 + abs(v.real))
            if drift > mon.max_imag_drift:
                mon.max_imag_drift = drift
            if enforce_consistency and drift > realness_tol:
                raise ConsistencyError(
                    f"imaginary drift {drift:.3e} in {name} at t={t:.6g} "
                    f"exceeds {realness_tol}"
                )
        Qv, Pv = yvec[IDX["Q"]], yvec[IDX["P"]]
        gap = abs(yvec[IDX["beta"]] - (-0.5j * Pv / Qv))
        if gap > mon.max_shadow_gap:
            mon.max_shadow_gap = gap
        if enforce_consistency and gap > shadow_tol:
            raise ConsistencyError(
                f"direct width deviates from linear-flow width by {gap:.3e} at t={t:.6g}"
            )
        area = 2.0 * (np.conj(Qv) * Pv).imag
        drift = abs(area - mon.area0) / max(abs(mon.area0), 1e-300)
        if drift > mon.max_area_drift:
            mon.max_area_drift = drift

    ts, ys, fs, stats = solve_adaptive(rhs, y0, 0.0, float(T), control, step_hook=hook)

    states = np.empty((len(output_times), y0.size), dtype=complex)
    for j, t in enumerate(output_times):
        if t <= ts[0]:
            states[j] = ys[0]
        elif t >= ts[-1]:
            states[j] = ys[-1]
        else:
            i = int(np.searchsorted(ts, t, side="right")) - 1
            states[j] = hermite_interp(t, ts[i], ys[i], fs[i], ts[i + 1], ys[i + 1], fs[i + 1])

    return Trajectory(
        times=output_times,
        states=states,
        node_ts=ts,
        node_ys=ys,
        node_fs=fs,
        monitors=mon,
        stats=stats,
        metadata={
            "T": float(T),
            "riccati_sign": riccati_sign,
            "ledger_beta": ledger_beta,
            "control": control,
            "params": params,
        },
    )


def default_output_times(T: float, schedule: CoefficientSchedule | None = None, n_samples: int = 512):
    """Uniform samples over [0, T] plus any cycle boundaries of the schedule."""
    times = list(np.linspace(0.0, T, n_samples))
    if schedule is not None:
        per = schedule.period()
        if per is not None and per > 0.0:
            m = 1
            while m * per < T - 1e-12:
                times.append(m * per)
                m += 1
    return np.unique(np.asarray(times, dtype=float))
