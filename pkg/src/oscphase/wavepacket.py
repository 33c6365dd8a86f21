"""Grid evaluation of the squeezed packet and the Schrodinger-residual oracle.

The packet exists in two printed forms that must agree pointwise: the
guiding-trajectory form built from (q, p, k) and the transported form built
from the width, the accumulated angle, and the initial data only.  The grid
machinery here never time-steps the PDE; it exists to *verify* that the
evolved ansatz satisfies i hbar dPsi/dt = H Psi, with the time derivative
taken by central finite differences so the oracle stays independent of the
derivation it checks.

Half-line domains (x_min > 0) are mandatory for l != 0, where the
inverse-square term and the power prefactor are singular at the origin.  On
the printed ``minus`` power branch the prefactor x^(1/2-s) diverges as
x -> 0 for any l != 0 and the norm integral diverges outright for
l >= sqrt(3)/2 * hbar; grid verification of singular packets therefore runs
on the regular ``plus`` branch (see SystemParams.power_branch).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classical import SystemParams
from .errors import ConfigError
from .integrate import Trajectory
from .phases import PhaseLedger

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

DEFAULT_TRUNCATION = 1e-10
# For l != 0 the residual mask additionally keeps away from the origin,
# where power-law derivatives make pointwise finite differences meaningless.
DEFAULT_ORIGIN_GUARD_WIDTHS = 0.05


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on [x_min, x_max] with a truncation threshold for validity claims."""

    x_min: float
    x_max: float
    n: int
    truncation: float = DEFAULT_TRUNCATION

    def __post_init__(self):
        if self.n < 64:
            raise ConfigError(f"grid needs n >= 64 points, got {self.n}")
        if not self.x_max > self.x_min:
            raise ConfigError(f"x_max must exceed x_min, got [{self.x_min}, {self.x_max}]")
        if not 0.0 < self.truncation < 1.0:
            raise ConfigError(f"truncation threshold must be in (0, 1), got {self.truncation}")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)


@dataclass(frozen=True)
class WavePacket:
    """Complex amplitudes on a grid plus the parameter snapshot that built them."""

    grid: SpatialGrid
    psi: np.ndarray
    t: float
    q: complex
    p: complex
    beta: complex
    k: complex
    params: SystemParams

    def norm(self) -> float:
        """L2 norm by trapezoid quadrature."""
        return float(np.sqrt(_trapezoid(np.abs(self.psi) ** 2, self.grid.x)))

    def peak(self) -> float:
        return float(np.max(np.abs(self.psi)))

    def truncation_valid(self) -> bool:
        """Both endpoint amplitudes below the truncation threshold of the peak."""
        pk = self.peak()
        if pk == 0.0:
            return False
        edge = max(abs(self.psi[0]), abs(self.psi[-1]))
        return bool(edge < self.grid.truncation * pk)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "re", "im", "abs2"])
            for x, a in zip(self.grid.x, self.psi):
                writer.writerow(
                    [f"{x:.17g}", f"{a.real:.17g}", f"{a.imag:.17g}", f"{abs(a) ** 2:.17g}"]
                )


def _check_half_line(grid: SpatialGrid, params: SystemParams) -> None:
    if params.l != 0.0 and grid.x_min <= 0.0:
        raise ConfigError("l != 0 requires a half-line grid with x_min > 0")


def _power_prefactor(x: np.ndarray, params: SystemParams) -> np.ndarray:
    a = params.power_exponent
    if a == 0.0:
        return np.ones_like(x)
    return np.power(x, a)


def packet_from_state(grid: SpatialGrid, t, q, p, beta, k, params: SystemParams) -> WavePacket:
    """Guiding-trajectory form of the packet.

    Psi(x) = x^a exp{ (1/hbar) [ (1/2)(l + i p q) ( ((x-q)/q)^2 + 2 (x-q)/q ) + k ] }.

    The quadratic coefficient is carried entirely by (q, p); the ``beta``
    argument is recorded in the snapshot and must equal -(l + i p q)/(2 q^2)
    for the packet to be the evolved solution (tied initial data guarantees
    that).
    """
    _check_half_line(grid, params)
    q = complex(q)
    p = complex(p)
    if q == 0:
        raise ConfigError("packet undefined at q = 0")
    x = grid.x
    u = (x - q) / q
    expo = (0.5 * (params.l + 1j * p * q) * (u * u + 2.0 * u) + complex(k)) / params.hbar
    psi = _power_prefactor(x, params) * np.exp(expo)
    if not np.all(np.isfinite(psi.view(float))):
        raise ConfigError(
            "packet overflowed at the grid edges; widen the grid or increase Re(beta)"
        )
    return WavePacket(grid=grid, psi=psi, t=float(t), q=q, p=p, beta=complex(beta), k=complex(k), params=params)


def packet_from_ledger(
    grid: SpatialGrid,
    t,
    beta,
    ledger: PhaseLedger,
    q0,
    p0,
    k0,
    params: SystemParams,
) -> WavePacket:
    """Transported form of the packet, built from the ledger and initial data only.

    Psi(x) = (x sqrt(r))^a  exp{(1/4) ln r}  exp{i nu dtheta}
             exp{ (1/hbar) [ -beta x^2 - (1/2)(l + i p0 q0) + k0 ] }

    with r = QQ*(0)/QQ*(t) taken branch-free from the integrated ln(QQ*).
    The r-dependent factors compose to r^(nu/2), exactly the normalization
    that keeps the grid norm constant as the width breathes.
    """
    _check_half_line(grid, params)
    beta = complex(beta)
    ln_r = -ledger.ln_qq  # ln of QQ*(0)/QQ*(t)
    a = params.power_exponent
    x = grid.x
    amp = np.exp((0.5 * a + 0.25) * ln_r + 1j * params.nu * ledger.theta)
    const = (-0.5 * (params.l + 1j * complex(p0) * complex(q0)) + complex(k0)) / params.hbar
    psi = _power_prefactor(x, params) * amp * np.exp(-beta * x * x / params.hbar + const)
    if not np.all(np.isfinite(psi.view(float))):
        raise ConfigError(
            "packet overflowed at the grid edges; widen the grid or increase Re(beta)"
        )
    return WavePacket(
        grid=grid, psi=psi, t=float(t), q=complex(q0), p=complex(p0), beta=beta, k=complex(k0), params=params
    )


def apply_hamiltonian(packet: WavePacket, coeffs, params: SystemParams) -> WavePacket:
    """Discretized H Psi with 2nd-order central differences on interior points.

    H Psi = (1/2) [ -hbar^2 Z Psi'' + Y (-i hbar)(2 x Psi' + Psi) + X x^2 Psi
                    + Z l^2/x^2 Psi ]

    The symmetrized cross term p x + x p = -i hbar (2 x d/dx + 1) keeps the
    operator formally symmetric at 2nd order.  Endpoint values are zeroed;
    residual norms never include them.
    """
    x_c, y_c, z_c = coeffs
    grid = packet.grid
    x = grid.x
    h = grid.h
    hbar = params.hbar
    psi = packet.psi
    d1 = np.zeros_like(psi)
    d2 = np.zeros_like(psi)
    d1[1:-1] = (psi[2:] - psi[:-2]) / (2.0 * h)
    d2[1:-1] = (psi[2:] - 2.0 * psi[1:-1] + psi[:-2]) / (h * h)
    hpsi = 0.5 * (
        -(hbar**2) * z_c * d2
        + y_c * (-1j * hbar) * (2.0 * x * d1 + psi)
        + x_c * x * x * psi
    )
    if params.l != 0.0:
        _check_half_line(grid, params)
        hpsi += 0.5 * z_c * params.l**2 / (x * x) * psi
    hpsi[0] = 0.0
    hpsi[-1] = 0.0
    return WavePacket(
        grid=grid, psi=hpsi, t=packet.t, q=packet.q, p=packet.p,
        beta=packet.beta, k=packet.k, params=params,
    )


def _packet_at(trajectory: Trajectory, t: float, grid: SpatialGrid, params: SystemParams) -> WavePacket:
    st = trajectory.state_at(t)
    return packet_from_state(grid, t, st.q, st.p, st.beta, st.k, params)


def residual_mask(packet: WavePacket, origin_guard: float | None = None) -> np.ndarray:
    """Interior points where the packet lives above the truncation threshold.

    For l != 0 an additional origin guard (in units of the instantaneous
    width sqrt(hbar / 2 Re beta)) excludes the neighbourhood of the
    singular point, where power-law derivatives defeat pointwise finite
    differences.
    """
    mask = np.abs(packet.psi) >= packet.grid.truncation * packet.peak()
    mask[0] = mask[-1] = False
    if packet.params.l != 0.0:
        if origin_guard is None:
            origin_guard = DEFAULT_ORIGIN_GUARD_WIDTHS
        re_b = packet.beta.real
        if re_b > 0.0:
            width = np.sqrt(packet.params.hbar / (2.0 * re_b))
            mask &= packet.grid.x >= origin_guard * width
    return mask


def schrodinger_residual(
    trajectory: Trajectory,
    t: float,
    dt_fd: float,
    grid: SpatialGrid,
    params: SystemParams,
    schedule,
    origin_guard: float | None = None,
) -> float:
    """Relative norm of i hbar dPsi/dt - H Psi for the evolved packet at time t.

    The time derivative is a central difference over +-dt_fd with packets
    evaluated from the dense trajectory, so the oracle never reuses the
    analytic time derivative whose derivation it is checking.  Refuses
    truncation-invalid grids.
    """
    from .schedules import evaluate as eval_schedule

    pk = _packet_at(trajectory, t, grid, params)
    if not pk.truncation_valid():
        edge = max(abs(pk.psi[0]), abs(pk.psi[-1]))
        raise ConfigError(
            f"grid truncation-invalid at t={t:.6g}: edge amplitude {edge:.3e} vs peak "
            f"{pk.peak():.3e} (threshold {grid.truncation}); widen the grid"
        )
    plus = _packet_at(trajectory, t + dt_fd, grid, params)
    minus = _packet_at(trajectory, t - dt_fd, grid, params)
    coeffs = eval_schedule(schedule, t)
    hpsi = apply_hamiltonian(pk, coeffs, params).psi
    dpsi_dt = (plus.psi - minus.psi) / (2.0 * dt_fd)
    resid = 1j * params.hbar * dpsi_dt - hpsi
    mask = residual_mask(pk, origin_guard)
    if not np.any(mask):
        raise ConfigError("no truncation-valid interior points; refusing residual")
    return float(np.linalg.norm(resid[mask]) / np.linalg.norm(pk.psi[mask]))


def normalize_k0(grid: SpatialGrid, q0, p0, beta0, k0, params: SystemParams) -> float:
    """Real shift of k(0) that makes the grid L2 norm exactly one.

    Adding a real delta to k multiplies the packet by exp(delta/hbar), so the
    shift is -hbar ln ||Psi||.  Rejects non-normalizable widths.
    """
    beta0 = complex(beta0)
    if beta0.real <= 0.0:
        raise ConfigError(f"Re(beta) = {beta0.real:.3g} <= 0: packet not normalizable")
    pk = packet_from_state(grid, 0.0, q0, p0, beta0, k0, params)
    n = pk.norm()
    if not np.isfinite(n) or n <= 0.0:
        raise ConfigError("packet norm not finite; cannot normalize")
    return float(-params.hbar * np.log(n))
