import numpy as np
import pytest

from mdaccel import (
    DynamicsParams,
    make_double_well_1d,
    make_triple_well_1d,
    make_flat,
)
from mdaccel.statemap import BASIN, MinimaRegistry, StateDefinition, make_labeler


@pytest.fixture(scope="session")
def double_well():
    return make_double_well_1d()


@pytest.fixture(scope="session")
def triple_well():
    return make_triple_well_1d()


@pytest.fixture(scope="session")
def flat_1d():
    return make_flat(1)


@pytest.fixture()
def dw_basins(double_well):
    """(definition, registry, labeler) for double-well basin states.

    Labels come out left-to-right: 0 = left well, 1 = right well.
    """
    definition = StateDefinition(kind=BASIN, scan_box=[(-3.0, 3.0)])
    registry = MinimaRegistry()
    labeler = make_labeler(double_well, definition, registry)
    return definition, registry, labeler


@pytest.fixture()
def tw_basins(triple_well):
    """Triple-well basin labeler; labels 0/1/2 left-to-right."""
    definition = StateDefinition(kind=BASIN, scan_box=[(-2.0, 2.0)])
    registry = MinimaRegistry()
    labeler = make_labeler(triple_well, definition, registry)
    return definition, registry, labeler


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", default=False,
                     help="skip the statistically heavy tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skip-slow"):
        marker = pytest.mark.skip(reason="--skip-slow given")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(marker)


def three_sigma_fraction(p_hat, p, n):
    """|p_hat - p| within three binomial standard errors."""
    se = np.sqrt(p * (1.0 - p) / n)
    return abs(p_hat - p) <= 3.0 * se + 1e-12
