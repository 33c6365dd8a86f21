"""Built-in verification battery: every module invariant at fixed presets.

Each check prints one PASS/FAIL line; the battery returns a report whose
``ok`` flag drives the process exit code.  The wrong-sign negative control is
an *expected failure*: the check passes when the residual plateaus high.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classical, cli
from .errors import OscPhaseError


@dataclass
class CheckReport:
    lines: list = field(default_factory=list)
    failures: int = 0

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def record(self, name: str, passed: bool, detail: str) -> None:
        status = "PASS" if passed else "FAIL"
        if not passed:
            self.failures += 1
        line = f"{status} {name}: {detail}"
        self.lines.append(line)
        print(line)


def _run_preset(name: str, out_root: Path):
    config = cli.load_config(name)
    config.output_dir = out_root / name
    return config, cli.run(config)


def selfcheck(quick: bool = False) -> CheckReport:
    report = CheckReport()
    with tempfile.TemporaryDirectory(prefix="oscphase-selfcheck-") as tmp:
        out_root = Path(tmp)

        try:
            config, res = _run_preset("sho-constant", out_root)
            led = res.final
            d = res.diagnostics
            report.record(
                "sho-closed-form",
                abs(led.gamma_l - (-math.pi)) < 1e-6
                and abs(led.theta - (-2 * math.pi)) < 1e-6
                and abs(led.theta_H) < 1e-8,
                f"gamma_l={led.gamma_l:.9f} theta={led.theta:.9f} theta_H={led.theta_H:.2e}",
            )
            det = complex(d["monodromy_det_re"], d["monodromy_det_im"])
            report.record(
                "sho-symplectic",
                abs(det - 1.0) < 1e-8 and d["max_area_drift"] < 1e-8,
                f"|det-1|={abs(det - 1.0):.2e} area_drift={d['max_area_drift']:.2e}",
            )
            report.record(
                "sho-width-equivalence",
                d["max_shadow_gap"] < 1e-8,
                f"max |beta_direct - (-iP/2Q)| = {d['max_shadow_gap']:.2e}",
            )
            report.record(
                "sho-k-identity",
                d["k_identity_gap"] < 1e-7,
                f"|i*int(L + Zl^2/q^2) - i*(pq - p0q0)/2| = {d['k_identity_gap']:.2e}",
            )
            report.record(
                "sho-packet-forms",
                d["max_form_gap"] < 1e-8 and d["max_packet_norm_drift"] < 1e-6,
                f"form_gap={d['max_form_gap']:.2e} norm_drift={d['max_packet_norm_drift']:.2e}",
            )
            study = d["residual"]
            orders_ok = all(1.7 <= o <= 2.3 for o in study["orders"])
            last = study["rows"][-1]
            report.record(
                "sho-residual",
                orders_ok and last["residual"] < 1e-5,
                "orders=" + "/".join(f"{o:.2f}" for o in study["orders"])
                + f" r(n={last['n']})={last['residual']:.2e}",
            )
        except OscPhaseError as exc:
            report.record("sho-constant", False, f"run failed: {exc}")

        try:
            config, res = _run_preset("cycle-nonadiabatic", out_root)
            led = res.final
            d = res.diagnostics
            report.record(
                "cycle-rate-identities",
                d["max_hannay_rate_gap"] < 1e-8
                and d["max_total_rate_gap"] < 1e-8
                and d["max_transport_residual"] < 1e-8,
                f"hannay_gap={d['max_hannay_rate_gap']:.2e} "
                f"total_gap={d['max_total_rate_gap']:.2e} "
                f"transport={d['max_transport_residual']:.2e}",
            )
            report.record(
                "cycle-prefactor",
                abs(led.theta_H) > 0.05 and abs(led.gamma_G - 0.5 * led.theta_H) < 1e-12,
                f"theta_H={led.theta_H:.6f} |gamma_G - theta_H/2|="
                f"{abs(led.gamma_G - 0.5 * led.theta_H):.2e}",
            )
            report.record(
                "cycle-two-form",
                d["gamma_two_form_gap"] < 1e-8,
                f"max gap between the S-integral and angle forms = {d['gamma_two_form_gap']:.2e}",
            )
        except OscPhaseError as exc:
            report.record("cycle-nonadiabatic", False, f"run failed: {exc}")

        for preset in ("singular-breather", "singular-packet"):
            try:
                config, res = _run_preset(preset, out_root)
                d = res.diagnostics
                checks = d["max_shadow_gap"] < 1e-8 and d["max_area_drift"] < 1e-8
                detail = (
                    f"shadow={d['max_shadow_gap']:.2e} area={d['max_area_drift']:.2e}"
                )
                if d["k_identity_gap"] is not None:
                    checks = checks and d["k_identity_gap"] < 1e-7
                    detail += f" k_gap={d['k_identity_gap']:.2e}"
                if d["max_form_gap"] is not None:
                    checks = checks and d["max_form_gap"] < 1e-8
                    detail += f" form_gap={d['max_form_gap']:.2e}"
                report.record(preset, checks, detail)
            except OscPhaseError as exc:
                report.record(preset, False, f"run failed: {exc}")

        try:
            rows = cli.sweep(
                "cycle-nonadiabatic", "l", [0.0, 1.0, 2.0], out_dir=out_root / "l-sweep"
            )
            failed = [r for r in rows if r["status"] != 0]
            if failed:
                report.record(
                    "l-sweep", False,
                    "; ".join(f"l={r['value']}: {r['error']}" for r in failed),
                )
            else:
                thetas = [r["theta_H"] for r in rows]
                spread = max(thetas) - min(thetas)
                ratio_gap = max(abs(r["ratio"] - r["nu"]) for r in rows)
                report.record(
                    "l-sweep",
                    spread < 1e-8 and ratio_gap < 1e-10,
                    f"theta_H spread={spread:.2e} max|ratio-(1-s)|={ratio_gap:.2e}",
                )
        except OscPhaseError as exc:
            report.record("l-sweep", False, f"sweep failed: {exc}")

        try:
            config, res = _run_preset("sho-wrong-sign", out_root)
            study = res.diagnostics["residual"]
            rs = [row["residual"] for row in study["rows"]]
            plateaued = min(rs) > 1e-2 and max(rs) / min(rs) < 2.0
            report.record(
                "wrong-sign-control (expected failure)",
                plateaued,
                "residual plateau " + "/".join(f"{r:.2e}" for r in rs),
            )
        except OscPhaseError as exc:
            report.record("wrong-sign-control", False, f"run failed: {exc}")

        if not quick:
            try:
                config = cli.load_config("cycle-adiabatic")
                study = cli.adiabatic_study(config)
                eps = [row["epsilon"] for row in study["ladder"]]
                th = [row["theta_H"] for row in study["ladder"]]
                cauchy = abs(th[-1] - th[-2]) < 0.3 * eps[-2]
                report.record(
                    "adiabatic-limit",
                    cauchy and study["gap"] < 1e-4,
                    f"extrapolated={study['extrapolated']:.8f} "
                    f"oracle={study['oracle']:.8f} gap={study['gap']:.2e}",
                )
            except OscPhaseError as exc:
                report.record("adiabatic-limit", False, f"study failed: {exc}")

    print(f"{'OK' if report.ok else 'FAILED'}: {len(report.lines) - report.failures}"
          f"/{len(report.lines)} checks passed")
    return report
