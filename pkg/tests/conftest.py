"""
Shared fixtures.

Every DisparityMap built while the suite runs is histogrammed on the spot and
checked for conservation (sum of U-map = sum of V-map = valid pixel count).
The acceptance module runs last and reports one line per criterion.
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from stereoavoid import imgio  # noqa: E402
from stereoavoid.uvmap import build_uvmaps  # noqa: E402

HIST_LOG = {"maps": 0, "failures": []}

_original_post_init = imgio.DisparityMap.__post_init__


def _checked_post_init(self):
    _original_post_init(self)
    n_valid = int(self.valid.sum())
    if n_valid:
        d_max = self.d_max or int(np.floor(self.values[self.valid].max())) + 1
    else:
        d_max = self.d_max or 1
    u, v = build_uvmaps(self, d_max)
    su, sv = int(u.counts.sum()), int(v.counts.sum())
    HIST_LOG["maps"] += 1
    if not su == sv == n_valid:
        HIST_LOG["failures"].append((self.shape, su, sv, n_valid))


imgio.DisparityMap.__post_init__ = _checked_post_init

CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_collection_modifyitems(session, config, items):
    last = [it for it in items if it.fspath.basename == "test_acceptance.py"]
    rest = [it for it in items if it.fspath.basename != "test_acceptance.py"]
    items[:] = rest + last


def pytest_runtest_logreport(report):
    entry = CRITERIA.get(report.nodeid)
    if entry is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "SKIP" if report.skipped else "PASS" if report.passed else "FAIL"
        CRITERIA[report.nodeid] = (entry[0], outcome)


def pytest_itemcollected(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        name = m.args[0]
        if "[" in item.nodeid:
            name += " [" + item.nodeid.split("[", 1)[1]
        CRITERIA[item.nodeid] = (name, None)


def pytest_terminal_summary(terminalreporter):
    rows = [v for v in CRITERIA.values() if v[1] is not None]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in rows:
        terminalreporter.write_line(f"{outcome:4}  {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
