import numpy as np
import pytest

from selpredict.core import Dataset, LabelSet, PredictionRecord

_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        doc = getattr(report, "criterion", None) or report.nodeid.split("::")[-1]
        _acceptance.append((report.outcome, doc))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = marker.args[0]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(text): acceptance criterion description")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for outcome, text in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {text}")


def make_dataset(truth, samples, det=None, labels=None, ids=None):
    truth = np.asarray(truth, dtype=float)
    samples = np.asarray(samples, dtype=float)
    D, L = truth.shape
    labels = LabelSet(labels or [f"l{i}" for i in range(L)])
    ids = ids or [f"r{i}" for i in range(D)]
    recs = [
        PredictionRecord(ids[i], truth[i], samples[i], None if det is None else det[i])
        for i in range(D)
    ]
    return Dataset(labels, tuple(recs))


@pytest.fixture
def small_dataset():
    # 2 records, 3 labels, N = 2
    truth = [[1, 0, 1], [0, 0, 1]]
    samples = [
        [[0.9, 0.2, 0.6], [0.7, 0.4, 0.8]],
        [[0.3, 0.1, 0.4], [0.1, 0.3, 0.2]],
    ]
    return make_dataset(truth, samples)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
