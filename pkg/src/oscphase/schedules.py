"""Time-dependent coefficient schedules X(t), Y(t), Z(t) and the 2x2 flow matrix.

The three coefficients drive every piece of dynamics in the package: the
quadratic Hamiltonian ``(1/2)[Z p^2 + Y(pq+qp) + X q^2 + Z l^2/q^2]``, the
linear phase-space flow, and the width (Riccati) equation.  Schedules are
immutable after construction and safe to share across sweep workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError

TWO_PI = 2.0 * math.pi

# Probe resolution and tolerance for the declared-period validation.
PERIOD_PROBE_POINTS = 257
PERIOD_TOL = 1e-12

COEFF_NAMES = ("X", "Y", "Z")


@dataclass(frozen=True)
class FlowMatrix:
    """The trace-free generator of the linear phase-space flow.

    ``rhs_matrix`` is M = [[Y, Z], [-X, -Y]] so that d/dt (Q, P) = M (Q, P);
    ``calh`` is the Hamiltonian matrix -M appearing on the other side of the
    flow equation.  trace(M) = 0 exactly by construction, which is the
    area-preservation precondition for everything downstream.
    """

    rhs_matrix: np.ndarray

    @property
    def calh(self) -> np.ndarray:
        return -self.rhs_matrix


def flow_matrix(x: float, y: float, z: float) -> FlowMatrix:
    """Build the flow matrix M = [[Y, Z], [-X, -Y]] for one coefficient triple."""
    m = np.array([[y, z], [-x, -y]], dtype=complex)
    return FlowMatrix(rhs_matrix=m)


class CoefficientSchedule:
    """Base class: evaluates (X, Y, Z) at a time t.

    Subclasses must set ``kind`` and implement ``coefficients`` (vectorized
    over t).  ``domain`` is the closed interval on which evaluation is
    defined, or None when unbounded.
    """

    kind: str = "abstract"

    def __init__(self, declared_period: float | None = None):
        if declared_period is not None and not declared_period > 0.0:
            raise ConfigError(f"declared period must be > 0, got {declared_period}")
        self._declared_period = declared_period

    # -- evaluation --------------------------------------------------------

    def coefficients(self, t):
        raise NotImplementedError

    @property
    def domain(self) -> tuple[float, float] | None:
        return None

    def _check_domain(self, t) -> None:
        dom = self.domain
        if dom is None:
            return
        lo, hi = dom
        tmin = np.min(t)
        tmax = np.max(t)
        if tmin < lo - 1e-12 or tmax > hi + 1e-12:
            raise ConfigError(
                f"time {tmin if tmin < lo else tmax} outside schedule domain [{lo}, {hi}]"
            )

    # -- period ------------------------------------------------------------

    def natural_period(self) -> float | None:
        """Period implied by the schedule's own structure, if any."""
        return None

    def period(self) -> float | None:
        if self._declared_period is not None:
            return self._declared_period
        return self.natural_period()

    def validate_period(self, interval: tuple[float, float] | None = None) -> None:
        """Probe |coeff(t+T) - coeff(t)| < tolerance on a grid; raise if violated."""
        T = self.period()
        if T is None:
            return
        if interval is None:
            interval = self.domain or (0.0, T)
        lo, hi = interval
        ts = np.linspace(lo, max(hi - T, lo), PERIOD_PROBE_POINTS)
        base = np.asarray(self.coefficients(ts), dtype=float)
        shifted = np.asarray(self.coefficients(ts + T), dtype=float)
        gap = np.max(np.abs(shifted - base))
        if gap >= PERIOD_TOL:
            raise ConfigError(
                f"declared period {T} fails the periodicity probe (max gap {gap:.3e})"
            )

    def validate_positive_z(self, interval: tuple[float, float], n_probe: int = 1024) -> None:
        ts = np.linspace(interval[0], interval[1], n_probe)
        z = np.asarray(self.coefficients(ts)[2], dtype=float)
        if np.min(z) <= 0.0:
            t_bad = ts[int(np.argmin(z))]
            raise ConfigError(
                f"Z(t) <= 0 at t={t_bad:.6g} (min {np.min(z):.6g}); "
                "set allow_nonpositive_z to override"
            )


def evaluate(schedule: CoefficientSchedule, t: float) -> tuple[float, float, float]:
    """Instantaneous (X, Y, Z) at time t.  Deterministic and side-effect free."""
    schedule._check_domain(t)
    x, y, z = schedule.coefficients(t)
    return float(x), float(y), float(z)


def period(schedule: CoefficientSchedule) -> float | None:
    """Declared or structurally implied period of the schedule, if any."""
    return schedule.period()


class ConstantSchedule(CoefficientSchedule):
    kind = "constant"

    def __init__(self, x: float, y: float, z: float, declared_period: float | None = None):
        super().__init__(declared_period)
        self.values = (float(x), float(y), float(z))

    def coefficients(self, t):
        t = np.asarray(t, dtype=float)
        x0, y0, z0 = self.values
        return (np.full_like(t, x0), np.full_like(t, y0), np.full_like(t, z0))


@dataclass(frozen=True)
class SinusoidalComponent:
    """One coefficient of the form offset + amplitude * sin(omega * t + phase)."""

    offset: float
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __call__(self, t):
        if self.amplitude == 0.0:
            return self.offset + np.zeros_like(np.asarray(t, dtype=float))
        return self.offset + self.amplitude * np.sin(self.omega * t + self.phase)


class SinusoidalSchedule(CoefficientSchedule):
    kind = "sinusoidal"

    def __init__(
        self,
        x: SinusoidalComponent,
        y: SinusoidalComponent,
        z: SinusoidalComponent,
        declared_period: float | None = None,
    ):
        super().__init__(declared_period)
        self.components = (x, y, z)
        if declared_period is not None:
            self.validate_period((0.0, 2.0 * declared_period))

    def coefficients(self, t):
        cx, cy, cz = self.components
        return (cx(t), cy(t), cz(t))

    def natural_period(self) -> float | None:
        """Least common period of the active sinusoidal components.

        Components with zero amplitude or zero frequency impose no constraint.
        Frequency ratios are rationalized with a bounded denominator; if that
        fails the schedule is treated as aperiodic.
        """
        omegas = [
            abs(c.omega) for c in self.components if c.amplitude != 0.0 and c.omega != 0.0
        ]
        if not omegas:
            return None
        base = omegas[0]
        ratios = []
        for w in omegas:
            frac = Fraction(w / base).limit_denominator(1_000_000)
            if frac == 0 or abs(float(frac) - w / base) > 1e-12:
                return None
            ratios.append(frac)
        # common divisor of the frequencies: base * gcd(p_i)/lcm(q_i)
        num = ratios[0].numerator
        den = ratios[0].denominator
        for r in ratios[1:]:
            num = math.gcd(num, r.numerator)
            den = den * r.denominator // math.gcd(den, r.denominator)
        omega_gcd = base * num / den
        return TWO_PI / omega_gcd


class TabulatedSchedule(CoefficientSchedule):
    """Clamped cubic-spline interpolation of sampled (t, X, Y, Z) data.

    Clamped means zero first derivative at both ends; this keeps the drive
    continuously differentiable, which the adaptive stepper's error model
    needs.
    """

    kind = "tabulated"

    def __init__(self, times, values, declared_period: float | None = None):
        super().__init__(declared_period)
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ConfigError("tabulated schedule needs at least two time samples")
        if v.shape != (len(t), 3):
            raise ConfigError(f"tabulated values must be (n, 3), got {v.shape}")
        if not np.all(np.diff(t) > 0.0):
            raise ConfigError("tabulated times must be strictly increasing")
        self.times = t
        self.values = v
        self._splines = [
            CubicSpline(t, v[:, j], bc_type=((1, 0.0), (1, 0.0))) for j in range(3)
        ]
        if declared_period is not None:
            self.validate_period(self.domain)

    @property
    def domain(self) -> tuple[float, float]:
        return (float(self.times[0]), float(self.times[-1]))

    def coefficients(self, t):
        self._check_domain(t)
        return tuple(s(t) for s in self._splines)


def tabulated_from_csv(path: str | Path, declared_period: float | None = None) -> TabulatedSchedule:
    """Read a tabulated schedule from CSV with exact header ``t,X,Y,Z``."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["t", "X", "Y", "Z"]:
                raise ConfigError(f"{path}: expected header 't,X,Y,Z', got {header}")
            rows = [[float(cell) for cell in row] for row in reader if row]
    except OSError as exc:
        raise ConfigError(f"cannot read schedule file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric value in schedule table: {exc}") from exc
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least two rows")
    data = np.asarray(rows, dtype=float)
    return TabulatedSchedule(data[:, 0], data[:, 1:4], declared_period)
