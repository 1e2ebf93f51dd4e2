from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from shadowprice.gfunction import expected_utility_g, separable_sqrt_g
from shadowprice.market import MarketState, Quote, UtilitySpec

ROOT = Path(__file__).resolve().parents[1]
LATTICES = ROOT / "lattices"


@pytest.fixture
def sqrt_g():
    return separable_sqrt_g(2)


@pytest.fixture
def two_asset_g():
    """Log utility over three affinely independent scenarios; strictly concave."""
    S = np.array([[0.9, 1.6], [1.5, 0.9], [1.3, 1.3]])
    return expected_utility_g(UtilitySpec.log(), S, [0.3, 0.3, 0.4])


@pytest.fixture
def wide_quote():
    return Quote([1.0, 1.0], [1.2, 1.1])


@pytest.fixture
def lattice_dir():
    return LATTICES


def state(x, y):
    return MarketState(x, y)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the run summary."""
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
