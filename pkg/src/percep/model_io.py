"""Tensor container and network manifest I/O, plus the fixture generator.

Container layout (bit-exact): bytes 0-7 little-endian u64 header length N,
bytes 8..8+N UTF-8 JSON mapping tensor name -> {"dtype": "F32", "shape":
[...], "data_offsets": [begin, end]} with offsets into the raw little-endian
float32 payload that follows. Manifests are JSON.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContainerError, ManifestError, UnsupportedOpError
from .inference import (ConvLayer, InputSpec, MaxPoolLayer, NetworkModel,
                        ReluLayer)

_HEADER_LEN_BYTES = 8


def write_container(path, tensors):
    """Write named float32 tensors; byte-deterministic for equal inputs."""
    entries = {}
    payload = bytearray()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        begin = len(payload)
        payload.extend(arr.tobytes())
        entries[name] = {
            "dtype": "F32",
            "shape": [int(d) for d in arr.shape],
            "data_offsets": [begin, len(payload)],
        }
    header = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def read_container(path):
    """Parse a container file into {name: float32 array}, validating layout."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER_LEN_BYTES:
        raise ContainerError(f"{path}: file shorter than header length field")
    (header_len,) = struct.unpack("<Q", raw[:_HEADER_LEN_BYTES])
    if _HEADER_LEN_BYTES + header_len > len(raw):
        raise ContainerError(f"{path}: declared header length {header_len} "
                             "exceeds file size")
    try:
        header = json.loads(raw[_HEADER_LEN_BYTES:_HEADER_LEN_BYTES + header_len])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise ContainerError(f"{path}: malformed header: not a name map")
    payload = raw[_HEADER_LEN_BYTES + header_len:]
    tensors = {}
    spans = []
    for name, entry in header.items():
        try:
            dtype = entry["dtype"]
            shape = [int(d) for d in entry["shape"]]
            begin, end = (int(v) for v in entry["data_offsets"])
        except (TypeError, KeyError, ValueError) as exc:
            raise ContainerError(
                f"{path}: malformed header entry for {name!r}"
            ) from exc
        if dtype != "F32":
            raise ContainerError(
                f"{path}: tensor {name!r} has non-f32 dtype {dtype!r}"
            )
        if any(d <= 0 for d in shape):
            raise ContainerError(f"{path}: tensor {name!r} has non-positive dim")
        count = int(np.prod(shape))
        if end - begin != 4 * count:
            raise ContainerError(
                f"{path}: tensor {name!r} byte range length {end - begin} != "
                f"4*{count}"
            )
        if begin < 0 or end > len(payload):
            raise ContainerError(
                f"{path}: tensor {name!r} byte range [{begin}, {end}) out of "
                f"bounds (payload {len(payload)} bytes)"
            )
        spans.append((begin, end, name))
        arr = np.frombuffer(payload[begin:end], dtype="<f4").reshape(shape)
        tensors[name] = np.ascontiguousarray(arr)
    spans.sort()
    for (b1, e1, n1), (b2, e2, n2) in zip(spans, spans[1:]):
        if b2 < e1:
            raise ContainerError(
                f"{path}: tensors {n1!r} and {n2!r} have overlapping ranges"
            )
    return tensors


def write_manifest(path, manifest):
    """Write a manifest dict as deterministic JSON."""
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _require(cond, message):
    if not cond:
        raise ManifestError(message)


def parse_manifest(path):
    """Load and structurally check a manifest JSON (no container yet)."""
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    _require(isinstance(manifest, dict), f"{path}: manifest must be an object")
    for key in ("input", "layers", "taps"):
        _require(key in manifest, f"{path}: missing {key!r} section")
    inp = manifest["input"]
    for key in ("channels", "height", "width", "mean", "std"):
        _require(key in inp, f"{path}: input spec missing {key!r}")
    _require(
        len(inp["mean"]) == inp["channels"] and len(inp["std"]) == inp["channels"],
        f"{path}: input mean/std length != channels",
    )
    _require(all(s != 0 for s in inp["std"]), f"{path}: zero input std")
    _require(isinstance(manifest["layers"], list) and manifest["layers"],
             f"{path}: empty layer list")
    for i, layer in enumerate(manifest["layers"]):
        kind = layer.get("type")
        if kind == "conv":
            for key in ("weight", "bias", "stride", "padding"):
                _require(key in layer, f"{path}: conv layer {i} missing {key!r}")
            _require(layer["stride"] >= 1 and layer["padding"] >= 0,
                     f"{path}: conv layer {i} has invalid stride/padding")
        elif kind == "maxpool":
            for key in ("kernel", "stride"):
                _require(key in layer,
                         f"{path}: maxpool layer {i} missing {key!r}")
            _require(layer["kernel"] >= 1 and layer["stride"] >= 1,
                     f"{path}: maxpool layer {i} has invalid kernel/stride")
        elif kind != "relu":
            raise UnsupportedOpError(
                f"{path}: layer {i} has unsupported op {kind!r} "
                "(supported: conv, relu, maxpool)"
            )
    _require(isinstance(manifest["taps"], dict) and manifest["taps"],
             f"{path}: taps must be a non-empty name -> layer-index map")
    n_layers = len(manifest["layers"])
    for name, idx in manifest["taps"].items():
        _require(isinstance(idx, int) and 0 <= idx < n_layers,
                 f"{path}: tap {name!r} references non-existent layer {idx}")
    return manifest


def load_model(manifest_path, container_path):
    """Link manifest and container into an immutable, validated NetworkModel.

    All invariants are verified eagerly: tensor names resolve, conv shapes
    chain from the input spec, taps exist, and the declared input size
    keeps every spatial dim positive.
    """
    manifest = parse_manifest(manifest_path)
    tensors = read_container(container_path)
    inp = manifest["input"]
    spec = InputSpec(
        channels=int(inp["channels"]),
        height=int(inp["height"]),
        width=int(inp["width"]),
        mean=np.asarray(inp["mean"], dtype=np.float32),
        std=np.asarray(inp["std"], dtype=np.float32),
    )
    layers = []
    c = spec.channels
    for i, entry in enumerate(manifest["layers"]):
        if entry["type"] == "conv":
            for key in ("weight", "bias"):
                if entry[key] not in tensors:
                    raise ManifestError(
                        f"{manifest_path}: layer {i} references missing tensor "
                        f"{entry[key]!r}"
                    )
            weight = tensors[entry["weight"]]
            bias = tensors[entry["bias"]]
            if weight.ndim != 4:
                raise ManifestError(
                    f"{manifest_path}: conv weight {entry['weight']!r} must be "
                    f"[out,in,kh,kw], got shape {weight.shape}"
                )
            if weight.shape[1] != c:
                raise ManifestError(
                    f"{manifest_path}: shape-chain mismatch at layer {i}: "
                    f"weight {entry['weight']!r} expects {weight.shape[1]} input "
                    f"channels, chain provides {c}"
                )
            if bias.shape != (weight.shape[0],):
                raise ManifestError(
                    f"{manifest_path}: bias {entry['bias']!r} shape {bias.shape} "
                    f"!= ({weight.shape[0]},)"
                )
            layers.append(ConvLayer(
                weight=weight, bias=bias,
                stride=int(entry["stride"]), padding=int(entry["padding"]),
                weight_name=entry["weight"], bias_name=entry["bias"],
            ))
            c = weight.shape[0]
        elif entry["type"] == "relu":
            layers.append(ReluLayer())
        else:
            layers.append(MaxPoolLayer(kernel=int(entry["kernel"]),
                                       stride=int(entry["stride"])))
    model = NetworkModel(
        input_spec=spec,
        layers=tuple(layers),
        taps=dict(manifest["taps"]),
        name=str(manifest.get("name", Path(manifest_path).stem)),
    )
    try:
        model.layer_shapes()
    except Exception as exc:
        raise ManifestError(
            f"{manifest_path}: layer chain invalid for declared "
            f"{spec.height}x{spec.width} input: {exc}"
        ) from exc
    return model


# --- fixture network ---------------------------------------------------------
#
# 16 channels of 7x7 kernels probing three behaviors:
#   0-7   oriented Gabor band-pass (orientations k*22.5 deg, 0.25 cyc/px)
#   8-11  low-pass Gaussian averaging (sigma 0.8 .. 2.2)
#   12-15 constant-DC: flat kernels with tiny gain over a dominant bias,
#         so their response curve is flat in both frequency and orientation

FIXTURE_CHANNELS = 16
FIXTURE_GABOR_CHANNELS = tuple(range(8))
FIXTURE_LOWPASS_CHANNELS = (8, 9, 10, 11)
FIXTURE_DC_CHANNELS = (12, 13, 14, 15)
FIXTURE_KERNEL = 7
FIXTURE_INPUT_SIZE = 96
_FIXTURE_DC_GAIN = 1e-3


def gabor_kernel(theta_deg, size=FIXTURE_KERNEL, freq_cpp=0.25, sigma=1.8,
                 gamma=0.55):
    """Zero-mean cosine Gabor; carrier varies along the theta direction."""
    c = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - c
    y, x = np.meshgrid(coords, coords, indexing="ij")
    t = np.deg2rad(theta_deg)
    xt = x * np.cos(t) + y * np.sin(t)
    yt = -x * np.sin(t) + y * np.cos(t)
    env = np.exp(-(xt ** 2 + (gamma * yt) ** 2) / (2.0 * sigma ** 2))
    g = env * np.cos(2.0 * np.pi * freq_cpp * xt)
    g -= g.mean()
    g /= np.sqrt((g ** 2).sum())
    return g


def _gaussian_kernel(sigma, size=FIXTURE_KERNEL):
    c = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - c
    y, x = np.meshgrid(coords, coords, indexing="ij")
    k = np.exp(-(x ** 2 + y ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def fixture_tensors(seed):
    """Deterministic fixture conv weights/biases for a given seed."""
    rng = np.random.default_rng(seed)
    k = FIXTURE_KERNEL
    weight = np.zeros((FIXTURE_CHANNELS, 1, k, k), dtype=np.float64)
    bias = np.zeros(FIXTURE_CHANNELS, dtype=np.float64)
    # per-channel gain jitter keeps distinct seeds byte-distinct without
    # disturbing the band/orientation structure
    jitter = 1.0 + 0.02 * rng.uniform(-1.0, 1.0, size=FIXTURE_CHANNELS)
    for i, ch in enumerate(FIXTURE_GABOR_CHANNELS):
        weight[ch, 0] = gabor_kernel(22.5 * i) * jitter[ch]
    for i, ch in enumerate(FIXTURE_LOWPASS_CHANNELS):
        weight[ch, 0] = _gaussian_kernel(0.8 + 0.45 * i) * jitter[ch]
    for i, ch in enumerate(FIXTURE_DC_CHANNELS):
        weight[ch, 0] = (_FIXTURE_DC_GAIN / (k * k)) * jitter[ch]
        bias[ch] = 0.85 + 0.1 * i
    return {
        "conv1.weight": weight.astype(np.float32),
        "conv1.bias": bias.astype(np.float32),
    }


def gen_fixture(seed, out_dir):
    """Write the fixture manifest + container; byte-identical per seed.

    Returns (manifest_path, container_path).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": f"fixture-seed{seed}",
        "input": {
            "channels": 1,
            "height": FIXTURE_INPUT_SIZE,
            "width": FIXTURE_INPUT_SIZE,
            "mean": [0.0],
            "std": [1.0],
        },
        "layers": [
            {"type": "conv", "weight": "conv1.weight", "bias": "conv1.bias",
             "stride": 1, "padding": 0},
            {"type": "relu"},
        ],
        "taps": {"probe": 1},
    }
    manifest_path = out / "fixture.json"
    container_path = out / "fixture.tensors"
    write_manifest(manifest_path, manifest)
    write_container(container_path, fixture_tensors(seed))
    return manifest_path, container_path
