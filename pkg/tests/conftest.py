"""Shared fixtures and the per-criterion acceptance summary."""

from __future__ import annotations

from collections import defaultdict

import numpy as np
import pytest

from wncs_game import certifier, mgare, scenarios
from wncs_game.stochastic_model import build_pool, deterministic, finite, make_scenario

_CRITERIA: dict[int, list[tuple[str, str]]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "passed" if rep.passed and not hasattr(rep, "wasxfail") else "failed"
        if hasattr(rep, "wasxfail") and rep.skipped:
            status = "failed (expected)"
        _CRITERIA[mark.args[0]].append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        ok = all(s == "passed" for _, s in results)
        bad = [name for name, s in results if s != "passed"]
        detail = f"{len(results)} check{'s' if len(results) > 1 else ''}" if ok else "failing: " + ", ".join(bad)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  ({detail})")


@pytest.fixture(scope="session")
def ex1_pool():
    return build_pool(scenarios.example1(0.8))


@pytest.fixture(scope="session")
def ex1_certified(ex1_pool):
    cert = certifier.certify(ex1_pool)
    pool = ex1_pool.with_Ra(cert.Ra_chosen)
    return cert, pool, mgare.solve_fixed_point(pool)


def two_state_instance(Ra: float = 50.0):
    """Two-state instance with finite controller and attacker link laws."""
    rng = np.random.default_rng(1)
    A = rng.normal(size=(2, 2))
    B = [rng.normal(size=(2, 1))]
    return make_scenario(
        A, B, np.eye(2), np.eye(1), [[Ra]],
        [[finite([[[1.0]], [[0.3]]], [0.6, 0.4])]],
        [[finite([[[1.0]], [[-0.5]]], [0.5, 0.5])]],
        W=0.1 * np.eye(2), V=[[0.2]],
    )


def scalar_scenario(a=1.0, b=1.0, q=1.0, rc=1.0, Ra=None, ba=None, W=None):
    """One-state instance; ``ba`` is a deterministic attacker gain if given."""
    att = [[deterministic([[ba]])]] if ba is not None else ()
    return make_scenario(
        [[a]], [[[1.0]]], [[q]], [[rc]], None if Ra is None else [[Ra]],
        [[deterministic([[b]])]], att, W=W,
    )


def random_exact_instance(rng: np.random.Generator, S: int, Ra_scale: float = 200.0):
    """Small instance whose channels all have finite support."""
    A = rng.normal(size=(S, S)) / np.sqrt(S)
    B = [rng.normal(size=(S, 1)) for _ in range(2)]
    hc = [[finite([rng.normal(size=(1, 1)), rng.normal(size=(1, 1))], [0.7, 0.3]) for _ in range(2)]]
    ha = [[finite([np.eye(1) + 0.3 * rng.normal(size=(1, 1)), 0.2 * rng.normal(size=(1, 1))], [0.5, 0.5]) for _ in range(2)]]
    return make_scenario(A, B, np.eye(S), np.eye(1), Ra_scale * np.eye(1), hc, ha, W=np.eye(S))
