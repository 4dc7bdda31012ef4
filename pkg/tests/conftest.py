import numpy as np
import pytest

CRITERIA = {
    1: "table arithmetic",
    2: "parameter accounting",
    3: "cue-channel invariants",
    4: "fusion-block correctness",
    5: "synthetic generalization ordering",
    6: "frozen-block transfer",
    7: "determinism",
    8: "AUC oracle equivalence",
}

_outcomes: dict[int, list[str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        # an expected failure reports as skipped; a non-strict XPASS as passed
        ok = report.passed
        _outcomes.setdefault(n, []).append("ok" if ok else "bad")
        print(f"\n[criterion {n}] {item.name}: {'PASS' if ok else 'FAIL'}", flush=True)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        verdict = "PASS" if all(o == "ok" for o in _outcomes[n]) else "FAIL"
        terminalreporter.write_line(f"{verdict}  criterion {n}: {CRITERIA.get(n, '')}")
