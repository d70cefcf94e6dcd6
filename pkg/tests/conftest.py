import os
import re
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from graphflow.flows import Structure
from graphflow.graphs import parse_graph
from graphflow.metric import MetricStructure, parse_structure

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def fixture_text(name):
    return (FIXTURES / name).read_text()


def load_graph(name):
    return parse_graph(fixture_text(name))


def load_structure(name, manifold, tol=None):
    ms = parse_structure(fixture_text(name))
    return Structure.from_catalog(ms, manifold, *(tol,) if tol else ())


def make_structure(graph_name, lengths, labels, manifold, tol=None):
    ms = MetricStructure(load_graph(graph_name), lengths, labels)
    return Structure.from_catalog(ms, manifold, *(tol,) if tol else ())


@pytest.fixture
def fixtures_dir():
    return FIXTURES


# one line per acceptance criterion in the terminal summary
_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    name = m.group(2).replace("_", " ")
    if report.when == "call" or report.outcome != "passed":
        prev = _CRITERIA.get(key, (name, "PASS"))[1]
        status = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        if report.outcome == "skipped":
            status = "SKIP"
        _CRITERIA[key] = (name, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        name, status = _CRITERIA[key]
        terminalreporter.write_line(f"criterion {key:2d}: {status}  {name}")
