import sys
from pathlib import Path

import numpy as np
import pytest

from trafficgrid import features

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(params=features.available_backends())
def backend(request):
    """Run a test once per descriptor backend."""
    previous = features.get_backend()
    features.set_backend(request.param)
    yield request.param
    features.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def synthetic_corpus(n_frames, seed, vehicles=None, grid=(9, 8, 44, 44)):
    """Frames + labels with a random number (or a fixed count) of vehicle cells."""
    from trafficgrid.pipeline import SyntheticSceneSpec, generate_synthetic_frame, random_vehicle_cells

    rows, cols, cw, ch = grid
    r = np.random.default_rng(seed)
    frames, labels = [], []
    for i in range(n_frames):
        k = int(r.integers(0, rows * cols + 1)) if vehicles is None else vehicles
        spec = SyntheticSceneSpec(rows, cols, cw, ch, random_vehicle_cells(rows, cols, k, r),
                                  noise_seed=int(r.integers(0, 2**63)))
        fid = f"f{i:04d}"
        img, labs = generate_synthetic_frame(spec, fid)
        frames.append((fid, img))
        labels.extend(labs)
    return frames, labels


@pytest.fixture(scope="session")
def synthetic_model():
    from trafficgrid.imaging import GridSpec, Roi
    from trafficgrid.pipeline import build_dataset
    from trafficgrid.svm import TrainConfig, train

    frames, labels = synthetic_corpus(30, seed=99)
    ds = build_dataset(frames, Roi(0, 0, 352, 396), GridSpec(), labels)
    return train(ds.features, ds.labels, TrainConfig(seed=0, epochs=20))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
