from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from llmgrade.gateway import ModelEndpoint  # noqa: E402
from llmgrade.sample import write_mock_fixtures, write_sample_config, write_sample_dataset  # noqa: E402

_CRITERIA: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    name = report.user_properties and dict(report.user_properties).get("criterion")
    if name:
        _CRITERIA[name] = "PASS" if report.passed else "FAIL"


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker:
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _CRITERIA.items():
        terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture
def endpoint():
    return ModelEndpoint(name="small-model", base_url="http://mock.invalid/v1", model_id="small-model")


@pytest.fixture
def sample_tree(tmp_path):
    """Dataset, fixtures and config under one temporary directory."""
    write_sample_dataset(tmp_path / "data")
    fixtures = write_mock_fixtures(tmp_path / "fixtures" / "mock.yaml")
    config = write_sample_config(tmp_path / "run.yaml", "data")
    return {"root": tmp_path, "data": tmp_path / "data", "fixtures": fixtures, "config": config}
