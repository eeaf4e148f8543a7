"""Export torchvision classification networks into the percep toolkit's
container + manifest formats.

Only conv / relu / maxpool chains are exportable; BatchNorm directly after
a conv is folded into the conv weights (exact at inference). Anything else
aborts with the offending layer named. Export fails if activation parity
against the percep engine exceeds the tolerance on the probe batch.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .container import write_container
from .parity import run_parity_check

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
PARITY_TOLERANCE = 1e-3
DEFAULT_INPUT_SIZE = 224

# convs per block for relu{block}_{index} naming
_VGG_BLOCKS = {"vgg16": (2, 2, 3, 3, 3)}


class ExportError(Exception):
    pass


class UnsupportedLayerError(ExportError):
    def __init__(self, position, module):
        self.position = position
        self.module = module
        super().__init__(
            f"unsupported layer at position {position}: "
            f"{type(module).__name__} ({module})"
        )


@dataclass
class ExportReport:
    network: str
    layer_count: int
    tap_deviations: dict
    max_deviation: float
    input_size: int
    notes: list = field(default_factory=list)

    def write(self, path):
        doc = {
            "network": self.network,
            "layer_count": self.layer_count,
            "tap_deviations": self.tap_deviations,
            "max_deviation": self.max_deviation,
            "input_size": self.input_size,
            "notes": self.notes,
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")


def zoo_model(name, pretrained=True):
    """Instantiate a torchvision model; pretrained weights when requested."""
    import torchvision.models as tvm

    builders = {
        "vgg16": tvm.vgg16,
        "alexnet": tvm.alexnet,
        "squeezenet1_1": tvm.squeezenet1_1,
        "shufflenet_v2_x1_0": tvm.shufflenet_v2_x1_0,
    }
    if name not in builders:
        raise ExportError(f"unknown model {name!r}; "
                          f"supported: {sorted(builders)}")
    weights = "DEFAULT" if pretrained else None
    return builders[name](weights=weights)


def feature_modules(model):
    """Primitive modules of the feature extractor, in execution order.

    Sequential containers are flattened; a compound module (Fire block,
    InvertedResidual, ...) is kept as one opaque entry and will abort the
    export if it sits before the deepest requested tap.
    """
    modules = []

    def walk(module):
        if isinstance(module, nn.Sequential):
            for child in module.children():
                walk(child)
        else:
            modules.append(module)

    if hasattr(model, "features"):
        walk(model.features)
    else:
        # shufflenet-style: conv1 / maxpool / stage2 / ... attributes
        for child in model.children():
            if isinstance(child, (nn.AdaptiveAvgPool2d, nn.Linear)):
                break
            walk(child)
    return modules


def _fold_batchnorm(conv, bn):
    """Return a conv equivalent to bn(conv(x)) using bn's running stats."""
    scale = bn.weight.detach() / torch.sqrt(bn.running_var + bn.eps)
    weight = conv.weight.detach() * scale[:, None, None, None]
    bias = conv.bias.detach() if conv.bias is not None \
        else torch.zeros_like(bn.running_mean)
    bias = (bias - bn.running_mean) * scale + bn.bias.detach()
    folded = nn.Conv2d(conv.in_channels, conv.out_channels,
                       conv.kernel_size, stride=conv.stride,
                       padding=conv.padding, bias=True)
    with torch.no_grad():
        folded.weight.copy_(weight)
        folded.bias.copy_(bias)
    return folded


def fold_batchnorms(modules):
    """Fold every (Conv2d, BatchNorm2d) pair; lone BatchNorm stays (and
    will be rejected as unsupported)."""
    out = []
    i = 0
    while i < len(modules):
        if (isinstance(modules[i], nn.Conv2d) and i + 1 < len(modules)
                and isinstance(modules[i + 1], nn.BatchNorm2d)):
            out.append(_fold_batchnorm(modules[i], modules[i + 1]))
            i += 2
        else:
            out.append(modules[i])
            i += 1
    return out


def _square(value, what, position):
    pair = (value, value) if isinstance(value, int) else tuple(value)
    if len(pair) != 2 or pair[0] != pair[1]:
        raise ExportError(
            f"layer {position}: non-square {what} {value} unsupported"
        )
    return int(pair[0])


def _check_conv(conv, position):
    if conv.groups != 1:
        raise UnsupportedLayerError(position, conv)
    if _square(conv.dilation, "dilation", position) != 1:
        raise UnsupportedLayerError(position, conv)
    pad = conv.padding
    if isinstance(pad, str):
        raise UnsupportedLayerError(position, conv)
    return (_square(conv.stride, "stride", position),
            _square(pad, "padding", position))


def _check_pool(pool, position):
    if pool.ceil_mode or _square(pool.padding, "padding", position) != 0 \
            or _square(pool.dilation, "dilation", position) != 1:
        raise UnsupportedLayerError(position, pool)
    return (_square(pool.kernel_size, "kernel", position),
            _square(pool.stride, "stride", position))


def tap_names(model_name, modules):
    """Post-activation tap name for each module position (ReLU outputs).

    VGG nets get the conventional relu{block}_{index} names; everything
    else is numbered relu1, relu2, ...
    """
    names = {}
    blocks = _VGG_BLOCKS.get(model_name)
    block, index, count = 1, 1, 0
    for pos, module in enumerate(modules):
        if isinstance(module, nn.ReLU):
            count += 1
            if blocks:
                names[f"relu{block}_{index}"] = pos
                index += 1
                if index > blocks[block - 1]:
                    block += 1
                    index = 1
            else:
                names[f"relu{count}"] = pos
    return names


def export_model(name, taps, out_dir, model=None, pretrained=True,
                 input_size=DEFAULT_INPUT_SIZE, parity_inputs=12,
                 tolerance=PARITY_TOLERANCE, primary_cmd=None, notes=None):
    """Export `name` up to the deepest requested tap and verify parity.

    Returns (ExportReport, manifest_path, container_path). `model` may
    supply an already-built torch module (bypassing the zoo).
    """
    if model is None:
        model = zoo_model(name, pretrained=pretrained)
    model.eval()
    modules = fold_batchnorms(feature_modules(model))
    available = tap_names(name, modules)
    missing = [t for t in taps if t not in available]
    if missing:
        raise ExportError(
            f"unknown tap(s) {missing}; available: {sorted(available)}"
        )
    deepest = max(available[t] for t in taps)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layers = []
    tensors = {}
    conv_no = 0
    kept = []
    for pos, module in enumerate(modules[: deepest + 1]):
        if isinstance(module, nn.Conv2d):
            stride, padding = _check_conv(module, pos)
            conv_no += 1
            wname, bname = f"conv{conv_no}.weight", f"conv{conv_no}.bias"
            tensors[wname] = module.weight.detach().numpy()
            bias = module.bias.detach().numpy() if module.bias is not None \
                else np.zeros(module.out_channels, np.float32)
            tensors[bname] = bias
            layers.append({"type": "conv", "weight": wname, "bias": bname,
                           "stride": stride, "padding": padding})
        elif isinstance(module, nn.ReLU):
            layers.append({"type": "relu"})
        elif isinstance(module, nn.MaxPool2d):
            kernel, stride = _check_pool(module, pos)
            layers.append({"type": "maxpool", "kernel": kernel,
                           "stride": stride})
        else:
            raise UnsupportedLayerError(pos, module)
        kept.append(module)

    manifest = {
        "name": name,
        "input": {
            "channels": 3,
            "height": input_size,
            "width": input_size,
            "mean": list(IMAGENET_MEAN),
            "std": list(IMAGENET_STD),
        },
        "layers": layers,
        "taps": {t: available[t] for t in taps},
    }
    manifest_path = out / f"{name}.json"
    container_path = out / f"{name}.tensors"
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    write_container(container_path, tensors)

    deviations = run_parity_check(
        torch_prefix=nn.Sequential(*kept),
        tap_positions={t: available[t] for t in taps},
        manifest_path=manifest_path,
        container_path=container_path,
        input_size=input_size,
        n_inputs=parity_inputs,
        primary_cmd=primary_cmd,
    )
    report = ExportReport(
        network=name,
        layer_count=len(layers),
        tap_deviations=deviations,
        max_deviation=max(deviations.values()),
        input_size=input_size,
        notes=list(notes or []),
    )
    report.write(out / f"{name}.report.json")
    if report.max_deviation > tolerance:
        raise ExportError(
            f"activation parity failed: max relative deviation "
            f"{report.max_deviation:.2e} > {tolerance:g}"
        )
    return report, manifest_path, container_path
