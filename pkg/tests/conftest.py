import numpy as np
import pytest

from robustce import load_fixture
from robustce.io import fixture_names

# the 2-D fixtures compared against the grid oracle
GRID_FIXTURES = ["step2d", "straddle", "depth3", "oblique", "ensemble2", "relu221"]
TREE_FIXTURES = ["step_tree", "step2d", "straddle", "depth3", "oblique", "thin_leaves", "jump_tree"]


@pytest.fixture(scope="session")
def fixtures():
    return {name: load_fixture(name) for name in fixture_names()}


def factual_of(model):
    return np.asarray(model.meta["factual"], dtype=float)


from hypothesis import settings  # noqa: E402

settings.register_profile("repro", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("repro")


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(test_acceptance.RESULTS):
        verdict, title, secs = test_acceptance.RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title} ({secs:.2f} s)")
