import os
import sys
from pathlib import Path

import pytest
import torch
from torch import nn

PRIMARY_SRC = Path(__file__).resolve().parents[2] / "src"
EXPORTER_SRC = Path(__file__).resolve().parents[1] / "src"

# make `python -m percep` resolvable in subprocesses even without installs
os.environ["PYTHONPATH"] = os.pathsep.join(
    [str(PRIMARY_SRC), str(EXPORTER_SRC),
     os.environ.get("PYTHONPATH", "")]).rstrip(os.pathsep)

PRIMARY_CMD = (sys.executable, "-m", "percep")


@pytest.fixture(scope="session")
def primary_cmd():
    return PRIMARY_CMD


def toy_stack(seed=0):
    """Small conv/relu/maxpool network in torchvision's .features style."""
    torch.manual_seed(seed)
    model = nn.Sequential()
    model.features = nn.Sequential(
        nn.Conv2d(3, 8, 5, stride=1, padding=2),
        nn.ReLU(inplace=True),
        nn.MaxPool2d(2, 2),
        nn.Conv2d(8, 12, 3, stride=1, padding=1),
        nn.ReLU(inplace=True),
    )

    class Wrapper(nn.Module):
        def __init__(self, features):
            super().__init__()
            self.features = features

    return Wrapper(model.features)


@pytest.fixture(scope="session")
def vgg16_random():
    torch.manual_seed(7)
    import torchvision.models as tvm

    return tvm.vgg16(weights=None)
