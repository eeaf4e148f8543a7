import numpy as np
import pytest

from percep import model_io, perception, stimuli
from percep.inference import pin_blas

pin_blas()


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture-model")
    return model_io.gen_fixture(7, out)


@pytest.fixture(scope="session")
def fixture_model(fixture_paths):
    return model_io.load_model(*fixture_paths)


@pytest.fixture(scope="session")
def probe_grid():
    return stimuli.StimulusGrid(size=96)


@pytest.fixture(scope="session")
def fixture_probe(fixture_model, probe_grid):
    return perception.probe_channels(fixture_model, "probe", probe_grid)


def conv_oracle(x, weight, bias=None, stride=1, padding=0):
    """Direct quadruple-loop cross-correlation in float64."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    c, h, w = x.shape
    o, _, kh, kw = weight.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((o, oh, ow))
    for oc in range(o):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ic in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            ii = i * stride + u - padding
                            jj = j * stride + v - padding
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += x[ic, ii, jj] * weight[oc, ic, u, v]
                out[oc, i, j] = acc + (bias[oc] if bias is not None else 0.0)
    return out
