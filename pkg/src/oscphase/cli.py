"""Config-driven runs, sweeps, residual studies, and the self-check battery.

Configs are flat INI-style text (see ``CONFIG_SCHEMA``); unknown sections or
keys are rejected.  Results go to an output directory as ``trajectory.csv``,
optional ``packet_<t>.csv`` snapshots, and a versioned ``summary.json``.
Floats are emitted with 17 significant digits so baselines round-trip
exactly.

Exit codes: 0 success, 2 config error, 3 singularity, 4 consistency or
realness failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import cmath
import configparser
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import classical, phases, schedules, wavepacket
from .classical import SystemParams
from .errors import ConfigError, ConsistencyError, OscPhaseError, OutputError
from .integrate import (
    IDX,
    BundledState,
    StepControl,
    Trajectory,
    adaptive_integrate,
    initial_bundle,
)
from .phases import PhaseLedger

SCHEMA_VERSION = 1

PRESETS = (
    "sho-constant",
    "cycle-nonadiabatic",
    "cycle-adiabatic",
    "singular-breather",
    "singular-packet",
    "sho-wrong-sign",
)

TRAJECTORY_COLUMNS = [
    "t",
    "q_re", "q_im", "p_re", "p_im",
    "Q_re", "Q_im", "P_re", "P_im",
    "beta_re", "beta_im",
    "theta", "theta_H", "theta_D",
    "k_re", "k_im",
]

# section -> key -> (kind, default); kind in {float,int,bool,str,pair,floats,ints}
# default None means required when the section applies.
CONFIG_SCHEMA = {
    "schedule": {
        "kind": ("str", None),
        "x": ("floats", None),
        "y": ("floats", None),
        "z": ("floats", None),
        "file": ("str", ""),
        "period": ("float", math.nan),
        "allow_nonpositive_z": ("bool", False),
    },
    "params": {
        "l": ("float", 0.0),
        "hbar": ("float", 1.0),
        "power_branch": ("str", "minus"),
        "riccati_sign": ("int", -1),
    },
    "initial": {
        "q0": ("pair", complex(1.0, 0.0)),
        "p0": ("str", "0 0"),
        "beta0": ("str", "fixed-point"),
        "normalize": ("bool", False),
    },
    "integration": {
        "t_final": ("float", None),
        "rel_tol": ("float", 1e-10),
        "abs_tol": ("float", 1e-12),
        "min_step": ("float", 1e-13),
        "max_step": ("float", math.inf),
        "max_steps": ("int", 1_000_000),
        "samples": ("int", 512),
        "eps_q": ("float", 1e-8),
        "ledger_beta": ("str", "linear"),
        "enforce_consistency": ("bool", True),
    },
    "grid": {
        "x_min": ("float", -8.0),
        "x_max": ("float", 8.0),
        "n": ("int", 2048),
        "truncation": ("float", 1e-10),
        "origin_guard": ("float", wavepacket.DEFAULT_ORIGIN_GUARD_WIDTHS),
    },
    "analyses": {
        "phases": ("bool", True),
        "packets": ("bool", False),
        "packet_samples": ("int", 16),
        "residual": ("bool", False),
        "residual_time": ("float", 1.0),
        "residual_sizes": ("ints", [512, 1024, 2048, 4096]),
        "residual_dt_factor": ("float", 0.5),
        "monodromy": ("bool", False),
        "adiabatic": ("bool", False),
        "adiabatic_epsilon": ("float", 0.0125),
        "adiabatic_levels": ("int", 2),
    },
    "output": {
        "dir": ("str", "out"),
        "packet_times": ("floats", []),
    },
}


# ---------------------------------------------------------------------------
# config parsing


def _parse_value(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "str":
            return raw
        if kind == "pair":
            parts = raw.split()
            if len(parts) == 1:
                return complex(float(parts[0]), 0.0)
            if len(parts) == 2:
                return complex(float(parts[0]), float(parts[1]))
            raise ValueError("expected 're im'")
        if kind == "floats":
            return [float(p) for p in raw.split()]
        if kind == "ints":
            return [int(p) for p in raw.split()]
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise AssertionError(kind)


@dataclass
class RunConfig:
    """Validated run configuration plus the constructed domain objects."""

    raw: dict
    schedule: schedules.CoefficientSchedule
    params: SystemParams
    control: StepControl
    t_final: float
    q0: complex
    p0: complex | str
    beta0: complex | None
    normalize: bool
    eps_q: float
    riccati_sign: int
    ledger_beta: str
    enforce_consistency: bool
    samples: int
    grid: wavepacket.SpatialGrid
    analyses: dict
    output_dir: Path
    packet_times: list = field(default_factory=list)
    label: str = ""


def _build_schedule(sec: dict, base_dir: Path) -> schedules.CoefficientSchedule:
    kind = sec["kind"]
    declared = None if math.isnan(sec["period"]) else sec["period"]
    if kind == "constant":
        vals = []
        for key in ("x", "y", "z"):
            v = sec[key]
            if v is None or len(v) != 1:
                raise ConfigError(f"schedule.{key}: constant schedules need one value")
            vals.append(v[0])
        return schedules.ConstantSchedule(*vals, declared_period=declared)
    if kind == "sinusoidal":
        comps = []
        for key in ("x", "y", "z"):
            v = sec[key]
            if v is None or len(v) not in (1, 4):
                raise ConfigError(
                    f"schedule.{key}: sinusoidal needs 'offset' or "
                    "'offset amplitude omega phase'"
                )
            comps.append(schedules.SinusoidalComponent(*v))
        return schedules.SinusoidalSchedule(*comps, declared_period=declared)
    if kind == "tabulated":
        if not sec["file"]:
            raise ConfigError("schedule.file required for tabulated schedules")
        path = Path(sec["file"])
        if not path.is_absolute():
            path = base_dir / path
        return schedules.tabulated_from_csv(path, declared_period=declared)
    raise ConfigError(f"schedule.kind must be constant|sinusoidal|tabulated, got {kind!r}")


def load_config(path_or_preset: str | Path) -> RunConfig:
    """Load and validate a config file (or packaged preset name)."""
    path = resolve_config(path_or_preset)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    parsed: dict = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        parsed[section] = {}
        for key, raw in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
            kind, _default = CONFIG_SCHEMA[section][key]
            parsed[section][key] = _parse_value(kind, raw, f"{path} [{section}] {key}")
    for section, keys in CONFIG_SCHEMA.items():
        sec = parsed.setdefault(section, {})
        for key, (_kind, default) in keys.items():
            if key not in sec:
                if default is None and section in ("schedule", "integration"):
                    if section == "schedule" and key in ("x", "y", "z") and parsed["schedule"].get("kind") == "tabulated":
                        sec[key] = None
                        continue
                    raise ConfigError(f"{path}: missing required key [{section}] {key}")
                sec[key] = default

    base_dir = path.parent
    schedule = _build_schedule(parsed["schedule"], base_dir)

    p = parsed["params"]
    if p["riccati_sign"] not in (-1, 1):
        raise ConfigError(f"params.riccati_sign must be -1 or 1, got {p['riccati_sign']}")
    params = SystemParams(l=p["l"], hbar=p["hbar"], power_branch=p["power_branch"])

    it = parsed["integration"]
    t_final = it["t_final"]
    if not t_final > 0.0:
        raise ConfigError(f"integration.t_final must be > 0, got {t_final}")
    if it["ledger_beta"] not in ("linear", "direct"):
        raise ConfigError("integration.ledger_beta must be linear|direct")
    try:
        control = StepControl(
            rel_tol=it["rel_tol"], abs_tol=it["abs_tol"],
            min_step=it["min_step"], max_step=it["max_step"], max_steps=it["max_steps"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    dom = schedule.domain
    if dom is not None and (dom[0] > 0.0 or dom[1] < t_final):
        raise ConfigError(
            f"schedule domain {dom} does not cover the run interval [0, {t_final}]"
        )
    schedule.validate_period((0.0, t_final))
    if not parsed["schedule"]["allow_nonpositive_z"]:
        schedule.validate_positive_z((0.0, t_final))

    ini = parsed["initial"]
    p0_raw = ini["p0"].strip()
    p0: complex | str
    if p0_raw == "tied":
        p0 = "tied"
    else:
        p0 = _parse_value("pair", p0_raw, "initial.p0")
    beta0_raw = ini["beta0"].strip()
    beta0 = None if beta0_raw == "fixed-point" else _parse_value("pair", beta0_raw, "initial.beta0")

    g = parsed["grid"]
    grid = wavepacket.SpatialGrid(
        x_min=g["x_min"], x_max=g["x_max"], n=g["n"], truncation=g["truncation"]
    )
    an = dict(parsed["analyses"])
    if (an["packets"] or an["residual"] or parsed["output"]["packet_times"]) and params.l != 0.0:
        if grid.x_min <= 0.0:
            raise ConfigError("grid.x_min must be > 0 for l != 0 packet analyses")
    an["origin_guard"] = g["origin_guard"]

    out_dir = Path(parsed["output"]["dir"])
    root = os.environ.get("OSCPHASE_OUT")
    if root and not out_dir.is_absolute():
        out_dir = Path(root) / out_dir

    return RunConfig(
        raw=parsed,
        schedule=schedule,
        params=params,
        control=control,
        t_final=t_final,
        q0=ini["q0"],
        p0=p0,
        beta0=beta0,
        normalize=ini["normalize"],
        eps_q=it["eps_q"],
        riccati_sign=p["riccati_sign"],
        ledger_beta=it["ledger_beta"],
        enforce_consistency=it["enforce_consistency"],
        samples=it["samples"],
        grid=grid,
        analyses=an,
        output_dir=out_dir,
        packet_times=list(parsed["output"]["packet_times"]),
        label=str(path_or_preset),
    )


def resolve_config(path_or_preset: str | Path) -> Path:
    """Existing file path, or the packaged preset of that name."""
    p = Path(path_or_preset)
    if p.exists():
        return p
    name = str(path_or_preset)
    if name in PRESETS:
        ref = resources.files("oscphase").joinpath(f"presets/{name}.cfg")
        with resources.as_file(ref) as real:
            return Path(real)
    raise ConfigError(f"no such config file or preset: {path_or_preset}")


# ---------------------------------------------------------------------------
# running


@dataclass
class RunResult:
    """Final ledger, per-sample ledger rows, diagnostics, and exit status."""

    final: PhaseLedger
    ledgers: list
    trajectory: Trajectory
    diagnostics: dict
    exit_status: int = 0


def _initial_data(config: RunConfig):
    coeffs0 = schedules.evaluate(config.schedule, 0.0)
    beta0 = config.beta0
    if beta0 is None:
        beta0 = classical.riccati_fixed_point(coeffs0, sign=config.riccati_sign)
    q0 = config.q0
    p0 = config.p0
    if p0 == "tied":
        p0 = classical.tied_momentum(q0, beta0, config.params)
    k0 = 0.0 + 0.0j
    if config.normalize:
        shift = wavepacket.normalize_k0(config.grid, q0, p0, beta0, k0, config.params)
        k0 = k0 + shift
    return q0, p0, complex(beta0), k0


def _empty_diagnostics() -> dict:
    return {
        "n_steps": None,
        "n_rejected": None,
        "max_area_drift": None,
        "max_realness_drift": None,
        "max_shadow_gap": None,
        "max_hannay_rate_gap": None,
        "max_total_rate_gap": None,
        "max_transport_residual": None,
        "gamma_two_form_gap": None,
        "k_identity_gap": None,
        "max_packet_norm_drift": None,
        "max_form_gap": None,
        "monodromy_det_re": None,
        "monodromy_det_im": None,
        "residual": None,
        "adiabatic": None,
        "error": None,
    }


def _sample_rate_checks(traj: Trajectory, params: SystemParams, schedule) -> dict:
    """Cross-formula gaps between the width-variable and frame-variable rates."""
    max_h_gap = 0.0
    max_t_gap = 0.0
    max_transport = 0.0
    for i in range(len(traj)):
        st = traj.sample(i)
        coeffs = schedules.evaluate(schedule, st.t)
        Qv, Pv = st.Q, st.P
        beta = classical.beta_from_linear(Qv, Pv)
        dQ, _dP = classical.linear_rhs(Qv, Pv, coeffs)
        dbeta = classical.riccati_rhs(beta, coeffs)
        dln = 2.0 * (dQ / Qv).real
        r = abs(Qv)
        dr = r * (dQ / Qv).real
        frame = phases.frame_from_linear(Qv, beta)
        dE = np.array([dr, 2j * (dbeta * r + beta * dr)], dtype=complex)
        h_frame = phases.hannay_rate_frame(frame, dE)
        h_beta = phases.hannay_rate_beta(beta, dbeta, dln)
        t_beta = phases.total_rate(beta, coeffs, dln)
        t_frame = phases.total_rate_frame(frame, dE, coeffs)
        max_h_gap = max(max_h_gap, abs(h_frame - h_beta))
        max_t_gap = max(max_t_gap, abs(t_beta - t_frame))
        resid = phases.transport_residual(frame, dE, h_frame)
        scale = np.linalg.norm(frame.vector) * max(np.linalg.norm(dE), 1e-300)
        max_transport = max(max_transport, abs(resid) / scale)
    return {
        "max_hannay_rate_gap": max_h_gap,
        "max_total_rate_gap": max_t_gap,
        "max_transport_residual": max_transport,
    }


def _packet_checks(config: RunConfig, traj: Trajectory, q0, p0, k0) -> dict:
    """Norm drift and agreement of the two packet forms at sampled times.

    Sample times snap to accepted integration nodes so the comparison sees
    exact ledger states; dense-output noise between nodes is integrator
    bookkeeping, not a property of the packet forms.
    """
    n_t = config.analyses["packet_samples"]
    targets = np.linspace(0.0, config.t_final, n_t)
    node_idx = sorted({int(np.argmin(np.abs(traj.node_ts - t))) for t in targets})
    max_norm_drift = 0.0
    max_gap = 0.0
    for i in node_idx:
        st = BundledState(t=float(traj.node_ts[i]), y=traj.node_ys[i])
        led = PhaseLedger.from_bundle(st, config.params)
        pa = wavepacket.packet_from_state(
            config.grid, st.t, st.q, st.p, st.beta, st.k, config.params
        )
        pb = wavepacket.packet_from_ledger(
            config.grid, st.t, st.beta, led, q0, p0, k0, config.params
        )
        mask = np.abs(pa.psi) > 1e-12 * pa.peak()
        gap = float(np.max(np.abs(pa.psi[mask] - pb.psi[mask]) / np.abs(pa.psi[mask])))
        max_gap = max(max_gap, gap)
        max_norm_drift = max(max_norm_drift, abs(pa.norm() - 1.0))
    return {"max_packet_norm_drift": max_norm_drift, "max_form_gap": max_gap}


def residual_study(config: RunConfig, traj: Trajectory) -> dict:
    """Grid-halving convergence table of the Schrodinger residual."""
    sizes = config.analyses["residual_sizes"]
    t = config.analyses["residual_time"]
    factor = config.analyses["residual_dt_factor"]
    rows = []
    for n in sizes:
        g = wavepacket.SpatialGrid(
            config.grid.x_min, config.grid.x_max, n, config.grid.truncation
        )
        dt_fd = factor * g.h
        r = wavepacket.schrodinger_residual(
            traj, t, dt_fd, g, config.params, config.schedule,
            origin_guard=config.analyses["origin_guard"],
        )
        rows.append({"n": n, "dt_fd": dt_fd, "residual": r})
    orders = [
        math.log2(a["residual"] / b["residual"])
        for a, b in zip(rows, rows[1:])
        if b["residual"] > 0.0
    ]
    return {"time": t, "rows": rows, "orders": orders}


def scale_slowness(config: RunConfig, eps: float) -> tuple:
    """Slow the schedule down by eps: omega -> eps*omega, horizon -> T/eps."""
    sched = config.schedule
    if not isinstance(sched, schedules.SinusoidalSchedule):
        raise ConfigError("slowness scaling requires a sinusoidal schedule")
    comps = [
        schedules.SinusoidalComponent(c.offset, c.amplitude, c.omega * eps, c.phase)
        for c in sched.components
    ]
    scaled = schedules.SinusoidalSchedule(*comps)
    return scaled, config.t_final / eps


def _hannay_at_slowness(config: RunConfig, eps: float, beta0=None, rel_tol=1e-9) -> float:
    scaled, T = scale_slowness(config, eps)
    coeffs0 = schedules.evaluate(scaled, 0.0)
    if beta0 is None:
        beta0 = classical.riccati_fixed_point(coeffs0, sign=config.riccati_sign)
    q0, p0 = config.q0, config.p0
    if p0 == "tied":
        p0 = classical.tied_momentum(q0, beta0, config.params)
    y0 = initial_bundle(
        scaled, config.params, q0=q0, p0=p0, beta0=beta0, riccati_sign=config.riccati_sign
    )
    control = StepControl(rel_tol=rel_tol, abs_tol=1e-12, max_steps=config.control.max_steps)
    # theta_H only involves the linear-flow width; the direct-width shadow
    # random-walks at the tolerance scale over these very long horizons, so
    # its 1e-8 equivalence gate (a preset-level check) is not enforced here.
    traj = adaptive_integrate(
        y0, scaled, T, control, params=config.params,
        riccati_sign=config.riccati_sign, eps_q=config.eps_q,
        enforce_consistency=False, n_samples=8,
    )
    return PhaseLedger.from_bundle(traj.sample(len(traj) - 1), config.params).theta_H


def adiabatic_oracle_beta0(config: RunConfig, eps: float) -> complex:
    """First-order adiabatic start: the fixed point plus its slow-drift correction.

    beta(0) = b*(0) + i eps b*'(0) / (2 omega(0)) with b* the instantaneous
    fixed-point width of the unscaled cycle.  Starting on the adiabatic
    manifold removes the O(eps) oscillatory transient, which is what makes
    the ultra-slow Richardson oracle converge cleanly.
    """
    d = 1e-6

    def fp(tau: float) -> complex:
        coeffs = schedules.evaluate(config.schedule, tau)
        return classical.riccati_fixed_point(coeffs, sign=config.riccati_sign)

    x0, y0_, z0 = schedules.evaluate(config.schedule, 0.0)
    omega0 = math.sqrt(x0 * z0 - y0_ * y0_)
    dfp = (fp(d) - fp(-d)) / (2.0 * d)
    return fp(0.0) + 1j * eps * dfp / (2.0 * omega0)


def adiabatic_study(config: RunConfig) -> dict:
    """Slowness ladder, Richardson extrapolation, and the ultra-slow oracle."""
    eps0 = config.analyses["adiabatic_epsilon"]
    levels = max(2, config.analyses["adiabatic_levels"])
    ladder = []
    for i in range(levels):
        eps = eps0 / (2**i)
        ladder.append({"epsilon": eps, "theta_H": _hannay_at_slowness(config, eps)})
    extrapolated = 2.0 * ladder[-1]["theta_H"] - ladder[-2]["theta_H"]
    oracle_rows = []
    for eps in (eps0, eps0 / 2.0):
        b0 = adiabatic_oracle_beta0(config, eps)
        oracle_rows.append(
            {"epsilon": eps, "theta_H": _hannay_at_slowness(config, eps, beta0=b0)}
        )
    oracle = 2.0 * oracle_rows[-1]["theta_H"] - oracle_rows[-2]["theta_H"]
    return {
        "ladder": ladder,
        "extrapolated": extrapolated,
        "oracle_ladder": oracle_rows,
        "oracle": oracle,
        "gap": abs(extrapolated - oracle),
    }


def run(config: RunConfig, write_outputs: bool = True) -> RunResult:
    """Execute the integration plus requested analyses; emit CSV/JSON outputs."""
    diagnostics = _empty_diagnostics()
    q0, p0, beta0, k0 = _initial_data(config)
    y0 = initial_bundle(
        config.schedule, config.params, q0=q0, p0=p0, beta0=beta0, k0=k0,
        riccati_sign=config.riccati_sign,
    )
    out_dir = config.output_dir
    try:
        traj = adaptive_integrate(
            y0,
            config.schedule,
            config.t_final,
            config.control,
            params=config.params,
            riccati_sign=config.riccati_sign,
            eps_q=config.eps_q,
            ledger_beta=config.ledger_beta,
            enforce_consistency=config.enforce_consistency,
            n_samples=config.samples,
        )
    except OscPhaseError as exc:
        diagnostics["error"] = str(exc)
        if write_outputs:
            _ensure_dir(out_dir)
            _write_json(out_dir / "summary.json", _summary_dict(config, None, diagnostics, exc.exit_code))
        raise

    diagnostics["n_steps"] = traj.stats["n_steps"]
    diagnostics["n_rejected"] = traj.stats["n_rejected"]
    diagnostics["max_area_drift"] = traj.monitors.max_area_drift
    diagnostics["max_realness_drift"] = traj.monitors.max_imag_drift
    diagnostics["max_shadow_gap"] = traj.monitors.max_shadow_gap

    ledgers = [
        PhaseLedger.from_bundle(traj.sample(i), config.params) for i in range(len(traj))
    ]
    final = ledgers[-1]

    if config.analyses["phases"]:
        diagnostics.update(_sample_rate_checks(traj, config.params, config.schedule))
        two_form = 0.0
        for led in ledgers:
            g1 = phases.gamma_total(config.params, led.S)
            g2 = phases.gamma_total_from_angles(config.params, led.theta, led.ln_qq)
            two_form = max(two_form, abs(g1 - g2))
        diagnostics["gamma_two_form_gap"] = two_form
        fin = traj.sample(len(traj) - 1)
        lhs = fin.k - complex(k0) + 2j * config.params.hbar * config.params.nu * fin.S
        rhs = 0.5j * (fin.p * fin.q - complex(p0) * complex(q0))
        diagnostics["k_identity_gap"] = abs(lhs - rhs)

    if config.analyses["monodromy"]:
        m = classical.monodromy(config.schedule, config.t_final, config.control)
        det = complex(np.linalg.det(m))
        diagnostics["monodromy_det_re"] = det.real
        diagnostics["monodromy_det_im"] = det.imag

    if config.analyses["packets"]:
        diagnostics.update(_packet_checks(config, traj, q0, p0, k0))

    if config.analyses["residual"]:
        diagnostics["residual"] = residual_study(config, traj)

    if config.analyses["adiabatic"]:
        diagnostics["adiabatic"] = adiabatic_study(config)

    result = RunResult(
        final=final, ledgers=ledgers, trajectory=traj, diagnostics=diagnostics
    )

    if write_outputs:
        _ensure_dir(out_dir)
        _write_trajectory_csv(out_dir / "trajectory.csv", traj)
        for t in config.packet_times:
            st = traj.state_at(float(t))
            pk = wavepacket.packet_from_state(
                config.grid, st.t, st.q, st.p, st.beta, st.k, config.params
            )
            pk.to_csv(out_dir / f"packet_{t:.6g}.csv")
        _write_json(out_dir / "summary.json", _summary_dict(config, result, diagnostics, 0))
    return result


def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {path} is not writable: {exc}") from exc


def _write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
            for i, t in enumerate(traj.times):
                y = traj.states[i]
                row = [t]
                for name in ("q", "p", "Q", "P", "beta"):
                    v = y[IDX[name]]
                    row.extend([v.real, v.imag])
                theta = y[IDX["theta"]].real
                theta_h = y[IDX["theta_H"]].real
                row.extend([theta, theta_h, theta - theta_h])
                kv = y[IDX["k"]]
                row.extend([kv.real, kv.imag])
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _summary_dict(config: RunConfig, result: RunResult | None, diagnostics: dict, status: int) -> dict:
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": config.label,
        "params": {
            "l": config.params.l,
            "hbar": config.params.hbar,
            "power_branch": config.params.power_branch,
            "s": config.params.s,
            "nu": config.params.nu,
            "riccati_sign": config.riccati_sign,
        },
        "t_final": config.t_final,
        "final": None,
        "diagnostics": _jsonable(diagnostics),
        "exit_status": status,
    }
    if result is not None:
        led = result.final
        summary["final"] = _jsonable(
            {
                "t": led.t,
                "theta": led.theta,
                "theta_H": led.theta_H,
                "theta_D": led.theta_D,
                "S": led.S,
                "k": led.k,
                "ln_qq": led.ln_qq,
                "gamma_l": led.gamma_l,
                "gamma_G": led.gamma_G,
            }
        )
    return summary


def _write_json(path: Path, payload: dict) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# sweeps


def _sweep_row(args):
    config_path, axis, value, out_dir = args
    config = load_config(config_path)
    try:
        # Sweep rows report the phase summary; grid-level analyses are per-run
        # concerns (and a swept l can invalidate the base config's grid).
        for key in ("packets", "residual", "adiabatic", "monodromy"):
            config.analyses[key] = False
        config.normalize = False
        if axis in ("l", "hbar"):
            params = SystemParams(
                l=value if axis == "l" else config.params.l,
                hbar=value if axis == "hbar" else config.params.hbar,
                power_branch=config.params.power_branch,
            )
            config.params = params
        elif axis == "slowness":
            scaled, T = scale_slowness(config, value)
            config.schedule = scaled
            config.t_final = T
        else:
            raise ConfigError(f"sweep axis must be l|hbar|slowness, got {axis!r}")
        config.output_dir = Path(out_dir)
        result = run(config, write_outputs=True)
        led = result.final
        ratio = led.gamma_G / led.theta_H if led.theta_H != 0.0 else math.nan
        return {
            "value": value,
            "status": 0,
            "s": config.params.s,
            "nu": config.params.nu,
            "theta": led.theta,
            "theta_H": led.theta_H,
            "gamma_G": led.gamma_G,
            "gamma_l_re": led.gamma_l.real,
            "gamma_l_im": led.gamma_l.imag,
            "ratio": ratio,
            "error": None,
        }
    except OscPhaseError as exc:
        return {
            "value": value, "status": exc.exit_code, "s": None, "nu": None,
            "theta": None, "theta_H": None, "gamma_G": None,
            "gamma_l_re": None, "gamma_l_im": None, "ratio": None, "error": str(exc),
        }


def sweep(config_path: str | Path, axis: str, values, out_dir: Path | None = None, workers: int = 1) -> list:
    """Independent runs along one axis; per-row failures recorded, sweep continues."""
    if axis not in ("l", "hbar", "slowness"):
        raise ConfigError(f"sweep axis must be l|hbar|slowness, got {axis!r}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if not all(math.isfinite(v) for v in values):
        raise ConfigError("sweep values must be finite")
    base = load_config(config_path)
    root = Path(out_dir) if out_dir is not None else base.output_dir
    jobs = [
        (str(resolve_config(config_path)), axis, v, str(root / f"row_{i:03d}"))
        for i, v in enumerate(values)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(job) for job in jobs]
    _ensure_dir(root)
    _write_json(root / "sweep_summary.json", {
        "schema_version": SCHEMA_VERSION,
        "axis": axis,
        "rows": _jsonable(rows),
    })
    try:
        with open(root / "sweep.csv", "w") as fh:
            cols = ["value", "status", "s", "nu", "theta", "theta_H", "gamma_G", "ratio"]
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(
                    ",".join(
                        "" if row[c] is None else f"{row[c]:.17g}" for c in cols
                    ) + "\n"
                )
    except OSError as exc:
        raise OutputError(f"cannot write sweep.csv: {exc}") from exc
    return rows


# ---------------------------------------------------------------------------
# CLI


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="oscphase",
        description="Squeezed-packet evolution and geometric phases of the "
        "driven singular oscillator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    p_run.add_argument("config", help="config file path or preset name")
    p_run.add_argument("--out", help="override output directory")

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", required=True, choices=["l", "hbar", "slowness"])
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", help="override output directory")
    p_sweep.add_argument("--workers", type=int, default=1)

    p_res = sub.add_parser("residual", help="grid-halving residual convergence study")
    p_res.add_argument("config")
    p_res.add_argument("--out", help="override output directory")

    p_check = sub.add_parser("selfcheck", help="run the built-in verification battery")
    p_check.add_argument("--quick", action="store_true", help="skip the slow adiabatic check")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            if args.out:
                config.output_dir = Path(args.out)
            result = run(config)
            led = result.final
            print(f"theta   = {led.theta:.12g}")
            print(f"theta_H = {led.theta_H:.12g}")
            print(f"gamma_l = {led.gamma_l.real:.12g} {led.gamma_l.imag:+.12g}i")
            print(f"gamma_G = {led.gamma_G:.12g}")
            print(f"outputs in {config.output_dir}")
            return 0
        if args.command == "sweep":
            try:
                values = [float(v) for v in args.values.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad sweep values: {exc}") from exc
            rows = sweep(
                args.config, args.axis, values,
                out_dir=Path(args.out) if args.out else None,
                workers=args.workers,
            )
            for row in rows:
                if row["status"] == 0:
                    print(
                        f"{args.axis}={row['value']:<10g} theta_H={row['theta_H']:+.10f} "
                        f"gamma_G={row['gamma_G']:+.10f} ratio={row['ratio']:+.12f}"
                    )
                else:
                    print(f"{args.axis}={row['value']:<10g} FAILED ({row['error']})")
            return 0 if all(r["status"] == 0 for r in rows) else 1
        if args.command == "residual":
            config = load_config(args.config)
            if args.out:
                config.output_dir = Path(args.out)
            config.analyses["residual"] = True
            result = run(config)
            study = result.diagnostics["residual"]
            for row in study["rows"]:
                print(f"n={row['n']:6d}  dt_fd={row['dt_fd']:.3e}  residual={row['residual']:.6e}")
            print("observed orders:", " ".join(f"{o:.3f}" for o in study["orders"]))
            return 0
        if args.command == "selfcheck":
            from .selfcheck import selfcheck

            report = selfcheck(quick=args.quick)
            return 0 if report.ok else 1
    except OscPhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
