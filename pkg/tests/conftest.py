"""Shared fixtures: presets are expensive enough to run once per session."""

from __future__ import annotations

from pathlib import Path

import pytest

from oscphase import cli

PHASE_PRESETS = (
    "sho-constant",
    "cycle-nonadiabatic",
    "singular-breather",
    "singular-packet",
)


@pytest.fixture(scope="session")
def preset_results(tmp_path_factory):
    """Run the standard presets once; return {name: (config, RunResult)}."""
    root = tmp_path_factory.mktemp("preset-runs")
    out = {}
    for name in PHASE_PRESETS:
        config = cli.load_config(name)
        config.output_dir = Path(root) / name
        out[name] = (config, cli.run(config))
    return out


@pytest.fixture(scope="session")
def wrong_sign_result(tmp_path_factory):
    root = tmp_path_factory.mktemp("wrong-sign")
    config = cli.load_config("sho-wrong-sign")
    config.output_dir = Path(root)
    return config, cli.run(config)
