import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pdk.classes import Category, ClassSet
from pdk.dataset_io import PanopticMap, SegmentInfo

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_KEY = pytest.StashKey[list]()

# two stuff classes and three thing classes, enough for hand-built cases
TOY = ClassSet(
    [
        Category(1, "road", False, (128, 64, 128)),
        Category(2, "sky", False, (70, 130, 180)),
        Category(10, "car", True, (0, 0, 142)),
        Category(11, "person", True, (220, 20, 60)),
        Category(12, "bike", True, (119, 11, 32)),
    ]
)


@pytest.fixture
def toy_classes():
    return TOY


def make_pan(ids, cats, crowd=(), classes=TOY):
    """PanopticMap from an id raster and {id: category_id}."""
    ids = np.asarray(ids, dtype=np.int64)
    segs = {i: SegmentInfo(i, c, classes[c].isthing, i in crowd) for i, c in cats.items()}
    return PanopticMap(ids, segs)


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(ACCEPTANCE_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(rows):
        terminalreporter.write_line(f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {name}  {detail}")
