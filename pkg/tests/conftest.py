"""Shared fixtures and the acceptance-criterion result banner.

Acceptance tests are named `test_criterion_<n>_...`; a hook records their
outcomes and the terminal summary prints one pass/fail line per criterion
so the gate is readable straight from the pytest output.
"""

from __future__ import annotations

import re

import pytest

from discedge.scenario import load_scenario
from discedge.tokenizer import Vocab

_CRITERION_RE = re.compile(r"test_criterion_(\d+)")
_criterion_results: dict[int, tuple[str, str]] = {}

CRITERION_TITLES = {
    1: "cross-mode output equivalence (sim and live)",
    2: "consistency under mobility, <= 2 retries",
    3: "strong vs available policy at 50 ms replication",
    4: "client request bytes reduction >= 80%",
    5: "sync overhead: tokenized >= 10% below raw, client_side zero",
    6: "response time: tokenized below raw, widening gap",
    7: "tokens-per-second decay with turn number",
    8: "store convergence over 1000 random interleavings",
    9: "tokenizer round-trip and greedy maximality",
    10: "session TTL expiry on all replicas",
    11: "byte-identical metric CSVs for a fixed seed",
}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    match = _CRITERION_RE.search(item.name)
    if match and report.when == "call":
        number = int(match.group(1))
        _criterion_results[number] = (report.outcome, item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criterion_results):
        outcome, _ = _criterion_results[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        title = CRITERION_TITLES.get(number, "")
        terminalreporter.write_line(f"criterion {number:2d}: {verdict} - {title}")


# -- shared fixtures -----------------------------------------------------------

@pytest.fixture(scope="session")
def default_scenario():
    return load_scenario("default")


@pytest.fixture(scope="session")
def mobility_scenario():
    return load_scenario("mobility")


@pytest.fixture(scope="session")
def default_vocab(default_scenario):
    return default_scenario.load_vocab()


@pytest.fixture
def toy_vocab():
    """Small vocabulary with deliberate prefix overlaps."""
    return Vocab(model_id="toy", entries=("a", "ab", "abc", "bc", "c"))
