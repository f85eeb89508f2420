import os

import pytest


@pytest.fixture(autouse=True, scope="session")
def _model_cache(tmp_path_factory):
    """Keep the reference-spectrum cache inside the test session."""
    if "SPECGAP_CACHE" not in os.environ:
        os.environ["SPECGAP_CACHE"] = str(tmp_path_factory.mktemp("specgap-cache"))
    yield


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion."""

    def record(n, passed, detail):
        _ACCEPTANCE.append((n, f"criterion {n:2d}: {'PASS' if passed else 'FAIL'} | {detail}"))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
