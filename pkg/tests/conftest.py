import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sybilwatch.detector import calibrate_thresholds  # noqa: E402
from sybilwatch.simulator import SimConfig, calibrate_isolation, generate  # noqa: E402


@pytest.fixture(scope="session")
def default_workload():
    return generate(SimConfig(seed=42))


@pytest.fixture(scope="session")
def training_workload():
    return generate(SimConfig(seed=7))


@pytest.fixture(scope="session")
def calibrated_classifier(training_workload):
    w = training_workload
    return calibrate_thresholds(w.events, w.truth.labels)


@pytest.fixture(scope="session")
def isolation_config():
    return calibrate_isolation(SimConfig(), 0.8)


@pytest.fixture(scope="session")
def isolation_workload(isolation_config):
    return generate(isolation_config)


@pytest.fixture(scope="session")
def default_log(tmp_path_factory, default_workload):
    from sybilwatch.pipeline.ingest import write_events

    path = tmp_path_factory.mktemp("logs") / "events.jsonl"
    write_events(path, default_workload.events)
    return path


# one PASS/FAIL line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
