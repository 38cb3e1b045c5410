import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from roekuiper import SpaceSpec, realize_window

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


def builtin_windows():
    """One modest window per built-in kind (name, window)."""
    Z = SpaceSpec.integer_line()
    return [
        ("explicit", realize_window(SpaceSpec.explicit([[0, 1, 2], [1, 0, 1], [2, 1, 0]]))),
        ("bounded", realize_window(SpaceSpec.bounded_infinite(3), {"n": 6})),
        ("line", realize_window(Z, {"n": 6})),
        ("lattice", realize_window(SpaceSpec.integer_lattice(2), {"n": 2})),
        ("expblocks", realize_window(SpaceSpec.exponential_blocks(), {"blocks": 3})),
        ("fibered", realize_window(SpaceSpec.fibered_line(), {"n": 2, "fibers": 3})),
        ("disjoint", realize_window(SpaceSpec.disjoint_power(Z, 3), {"base": {"n": 3}})),
        ("sparse", realize_window(SpaceSpec.sparse_augmented(Z, 10),
                                  {"base": {"n": 3}, "tail": 3})),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def line64():
    return realize_window(SpaceSpec.integer_line(), {"n": 64})


@pytest.fixture(scope="session")
def fibered_small():
    return realize_window(SpaceSpec.fibered_line(), {"n": 4, "fibers": 5})


# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
