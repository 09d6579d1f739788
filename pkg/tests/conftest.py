from __future__ import annotations

from pathlib import Path

import pytest

from kgcode import data_path
from kgcode.core import load_schema
from kgcode.datasets import load_dataset

_criteria: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    num, title = crit
    entry = _criteria.setdefault(num, {"title": title, "outcomes": []})
    if report.when == "call" or report.outcome != "passed":
        entry["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        entry = _criteria[num]
        outs = entry["outcomes"]
        if any(o == "failed" for o in outs):
            status = "FAIL"
        elif outs and all(o == "skipped" for o in outs):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"[{status}] criterion {num}: {entry['title']}")


@pytest.fixture(scope="session")
def toy_dir() -> Path:
    return data_path("toy_conll04")


@pytest.fixture(scope="session")
def conll_schema(toy_dir):
    return load_schema(toy_dir / "schema.json")


@pytest.fixture(scope="session")
def toy_test(toy_dir, conll_schema):
    return load_dataset(toy_dir / "test.jsonl", conll_schema)


@pytest.fixture(scope="session")
def toy_train(toy_dir, conll_schema):
    return load_dataset(toy_dir / "train.jsonl", conll_schema)
