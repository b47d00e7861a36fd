import numpy as np
import pytest

from clutterbench.scene_gen import GenConfig, batch_generate
from clutterbench.voxel_core import GridFrame, VoxelGrid


def random_grid(rng, frame, density=None):
    p = rng.uniform(0.05, 0.6) if density is None else density
    return VoxelGrid(frame, rng.random(frame.dims) < p)


def random_frame(rng, max_side=48, res=0.005):
    dims = tuple(int(d) for d in rng.integers(1, max_side + 1, 3))
    origin = tuple(float(o) for o in rng.integers(-20, 20, 3) * res)
    return GridFrame(origin, res, dims)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    cfg = GenConfig(n_scenes=12, seed=7)
    handle = batch_generate(cfg, root)
    return root, handle


# one line per acceptance criterion, filled in by tests/test_acceptance.py
CRITERIA_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA_RESULTS):
        terminalreporter.write_line(CRITERIA_RESULTS[n])
