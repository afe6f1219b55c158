import numpy as np
import pytest
from PIL import Image

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, text = marker.args
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = _criteria.get(num, (text, "PASS"))[1]
        # a criterion passes only if every test for it passes
        if prev == "FAIL" or status == "FAIL":
            status = "FAIL"
        elif prev == "SKIP" or status == "SKIP":
            status = "SKIP" if status != "PASS" or prev == "SKIP" else status
        _criteria[num] = (text, status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        text, status = _criteria[num]
        terminalreporter.write_line(f"[{status}] criterion {num}: {text}")


def write_png(path, array, mode=None):
    Image.fromarray(np.asarray(array), mode=mode).save(path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
