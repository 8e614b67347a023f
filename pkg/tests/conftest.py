import numpy as np
import pytest

from latent_unexp.dataset import InteractionLog


def grid_log(table, scale=(1.0, 5.0)):
    """Interaction log from a dense user x item table; NaN marks a missing rating."""
    records = []
    for u, row in enumerate(np.asarray(table, dtype=float)):
        for i, r in enumerate(row):
            if not np.isnan(r):
                records.append((f"u{u}", f"i{i}", float(r)))
    return InteractionLog.from_records(records, scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
        item.config._criteria.append((marker.args[0], report.passed, detail))


def pytest_terminal_summary(terminalreporter, config):
    rows = getattr(config, "_criteria", [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in rows:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else ""))
