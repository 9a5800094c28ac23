import sys

import numpy as np
import pytest

from habitat_cd.raster import CATEGORICAL, CONTINUOUS, GeoGrid
from habitat_cd.taxonomy import load_class_scheme, load_transition_rules


def label_grid(values, nodata=None, pixel_size=0.2, origin=(0.0, 0.0)):
    return GeoGrid.from_array(np.asarray(values, dtype=np.uint8), kind=CATEGORICAL,
                              nodata=nodata, pixel_size=pixel_size, origin=origin)


def dtm_grid(values, pixel_size=0.2, origin=(0.0, 0.0)):
    return GeoGrid.from_array(np.asarray(values, dtype=np.float64), kind=CONTINUOUS,
                              tag="DTM", pixel_size=pixel_size, origin=origin)


@pytest.fixture(scope="session")
def scheme():
    return load_class_scheme()


@pytest.fixture(scope="session")
def rules():
    return load_transition_rules()


@pytest.fixture
def rs():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.line(n))
