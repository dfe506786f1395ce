import os
import subprocess
import sys

import numpy as np
import pytest

from trafficgrid import features
from trafficgrid.features import LbpParams, HogParams, extract_batch, hog_stack, lbp_stack

compiled = pytest.mark.skipif("compiled" not in features.available_backends(),
                              reason="compiled extension not built")


@pytest.fixture
def restore_backend():
    prev = features.get_backend()
    yield
    features.set_backend(prev)


def _both(fn, *args):
    out = {}
    for name in ("compiled", "python"):
        features.set_backend(name)
        out[name] = fn(*args)
    return out["compiled"], out["python"]


@compiled
@pytest.mark.parametrize("shape", [(5, 44, 44), (3, 17, 29), (2, 60, 45)])
def test_hog_backends_agree(restore_backend, rng, shape):
    cells = rng.integers(0, 256, shape).astype(float)
    a, b = _both(hog_stack, cells, HogParams())
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@compiled
@pytest.mark.parametrize("params", [LbpParams(), LbpParams(2, 8), LbpParams(3, 16)])
def test_lbp_backends_agree(restore_backend, rng, params):
    cells = rng.integers(0, 256, (4, 44, 44)).astype(float)
    a, b = _both(lbp_stack, cells, params)
    np.testing.assert_array_equal(a, b)


@compiled
def test_backends_agree_on_real_valued_cells(restore_backend, rng):
    cells = rng.uniform(0, 255, (4, 44, 44))
    a, b = _both(extract_batch, cells)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_set_backend_rejects_unknown(restore_backend):
    with pytest.raises(ValueError):
        features.set_backend("gpu")
    features.set_backend("python")
    assert features.get_backend() == "python"
    features.set_backend("auto")
    assert features.get_backend() == features.available_backends()[0]


def _probe(code, **env):
    full = dict(os.environ, **env)
    return subprocess.run([sys.executable, "-c", code], env=full, capture_output=True,
                          text=True, check=True).stdout.strip()


def test_env_forces_python_backend():
    assert _probe("import trafficgrid.features as f; print(f.get_backend())",
                  TRAFFICGRID_BACKEND="python") == "python"


def test_fallback_when_extension_missing():
    code = (
        "import sys\n"
        "class Block:\n"
        "    def find_spec(self, name, path=None, target=None):\n"
        "        if name == 'trafficgrid._kernels':\n"
        "            raise ImportError('blocked')\n"
        "sys.meta_path.insert(0, Block())\n"
        "import numpy as np\n"
        "import trafficgrid.features as f\n"
        "print(f.get_backend(), f.available_backends(), f.extract_features(\n"
        "    __import__('trafficgrid').Image(np.full((44, 44), 9))).shape)\n"
    )
    assert _probe(code) == "python ['python'] (1594,)"
