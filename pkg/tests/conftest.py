"""Collects acceptance-criterion outcomes and prints one line per criterion."""
from collections import OrderedDict

import numpy as np
import pytest

_RESULTS = OrderedDict()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, title = mark.args
    entry = _RESULTS.setdefault(n, {"title": title, "passed": 0, "failed": []})
    if rep.passed:
        entry["passed"] += 1
    elif rep.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        e = _RESULTS[n]
        verdict = "PASS" if not e["failed"] else "FAIL"
        line = f"criterion {n}: {verdict}  {e['title']}  ({e['passed']} checks passed"
        line += f", failed: {', '.join(e['failed'])})" if e["failed"] else ")"
        tr.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_density(rng, d, rank=None):
    rank = d if rank is None else rank
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2
