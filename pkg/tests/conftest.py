"""Shared fixtures: bundled runs are solved once per session through the CLI's solve path.

Set ``BURGERS_ASYM_RUN_CACHE`` to a directory to reuse runs across sessions; a cached run
is used only when its recorded config digest matches.
"""
import json
import os
from pathlib import Path

import pytest

from burgers_asym.cli import MANIFEST, load_manifest, run_solve
from burgers_asym.config import load_config

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def record():
    def _record(criterion: int, name: str, passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion:>2}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _record


@pytest.fixture(scope="session")
def run_dir(tmp_path_factory):
    cache = os.environ.get("BURGERS_ASYM_RUN_CACHE")
    made = {}

    def _get(name, **overrides):
        key = name + "".join(f"_{k}-{v}" for k, v in sorted(overrides.items()))
        if key in made:
            return made[key]
        cfg = load_config(name, overrides)
        base = Path(cache) if cache else tmp_path_factory.mktemp("runs")
        out = base / key
        m = out / MANIFEST
        if not (m.exists() and json.loads(m.read_text()).get("digest") == cfg.digest()):
            run_solve(cfg, out)
        made[key] = out
        return out

    return _get


@pytest.fixture(scope="session")
def load_run(run_dir):
    def _load(name, **overrides):
        return load_manifest(run_dir(name, **overrides))[1]
    return _load
