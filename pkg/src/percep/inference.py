"""Forward inference engine with named activation taps.

Supports conv / relu / maxpool chains in float32. Convolution follows the
cross-correlation convention (no kernel flip) with zero padding, so weights
exported from standard frameworks reproduce their source activations.
Forward passes are pure functions of (model, image) and bit-reproducible
on a single machine when BLAS threading is pinned (see ``pin_blas``).
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, UnknownTapError

_BLAS_PINNED = False


def pin_blas():
    """Limit BLAS pools to one thread so GEMM reduction order is fixed.

    Worker-level parallelism (one forward call per stimulus) is unaffected;
    this only removes run-to-run nondeterminism from threaded GEMM.
    """
    global _BLAS_PINNED
    if _BLAS_PINNED:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=1, user_api="blas")
        _BLAS_PINNED = True
    except ImportError:  # pragma: no cover - dependency is declared
        pass


def conv_out_dim(n, kernel, stride, padding):
    return (n + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class ConvLayer:
    weight: np.ndarray  # [out_c, in_c, kh, kw] float32
    bias: np.ndarray    # [out_c] float32
    stride: int = 1
    padding: int = 0
    weight_name: str = ""
    bias_name: str = ""

    def out_shape(self, c, h, w):
        o, ci, kh, kw = self.weight.shape
        if ci != c:
            raise ShapeError(
                f"conv expects {ci} input channels, layer input has {c}"
            )
        return (o,
                conv_out_dim(h, kh, self.stride, self.padding),
                conv_out_dim(w, kw, self.stride, self.padding))


@dataclass(frozen=True)
class ReluLayer:
    def out_shape(self, c, h, w):
        return (c, h, w)


@dataclass(frozen=True)
class MaxPoolLayer:
    kernel: int
    stride: int

    def out_shape(self, c, h, w):
        return (c,
                conv_out_dim(h, self.kernel, self.stride, 0),
                conv_out_dim(w, self.kernel, self.stride, 0))


@dataclass(frozen=True)
class InputSpec:
    channels: int
    height: int
    width: int
    mean: np.ndarray  # [channels] float32
    std: np.ndarray   # [channels] float32


@dataclass(frozen=True)
class NetworkModel:
    """Validated layer chain with resolved weights; immutable after load."""

    input_spec: InputSpec
    layers: tuple
    taps: dict  # tap name -> layer index (output of layers[index])
    name: str = "network"

    def layer_shapes(self, height=None, width=None):
        """Shapes after each layer for a given input size (default declared)."""
        h = self.input_spec.height if height is None else height
        w = self.input_spec.width if width is None else width
        c = self.input_spec.channels
        shapes = []
        for i, layer in enumerate(self.layers):
            c, h, w = layer.out_shape(c, h, w)
            if h <= 0 or w <= 0:
                raise ShapeError(
                    f"layer {i} ({type(layer).__name__}) yields non-positive "
                    f"spatial dim {h}x{w}"
                )
            shapes.append((c, h, w))
        return shapes

    def tap_shape(self, tap, height=None, width=None):
        if tap not in self.taps:
            raise UnknownTapError(tap, self.taps)
        return self.layer_shapes(height, width)[self.taps[tap]]

    def tap_channels(self, tap):
        return self.tap_shape(tap)[0]


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation of [C,H,W] input with [O,C,kh,kw] kernels.

    Zero padding; output spatial dim = floor((n + 2*pad - k)/stride) + 1.
    Computed as an im2col GEMM in float32.
    """
    x = np.asarray(x, dtype=np.float32)
    weight = np.asarray(weight, dtype=np.float32)
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(
            f"conv2d expects input [C,H,W] and weight [O,C,kh,kw], got "
            f"{x.shape} and {weight.shape}"
        )
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d requires stride >= 1 and padding >= 0")
    c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input {c}, weight {ci}")
    oh = conv_out_dim(h, kh, stride, padding)
    ow = conv_out_dim(w, kw, stride, padding)
    if oh <= 0 or ow <= 0:
        raise ShapeError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x"
            f"{w + 2 * padding}"
        )
    if padding > 0:
        xp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=np.float32)
        xp[:, padding:padding + h, padding:padding + w] = x
    else:
        xp = x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # k-major rows: reduction index (c, kh, kw) fixed for reproducibility
    cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(
        c * kh * kw, oh * ow
    )
    out = weight.reshape(o, c * kh * kw) @ cols
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float32)
        if bias.shape != (o,):
            raise ShapeError(f"bias shape {bias.shape} != ({o},)")
        out += bias[:, None]
    return out.reshape(o, oh, ow)


def relu(x):
    """max(0, x) elementwise."""
    return np.maximum(np.asarray(x, dtype=np.float32), np.float32(0))


def maxpool(x, kernel, stride):
    """Window max over kernel x kernel patches, floor output sizing."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise ShapeError(f"maxpool expects [C,H,W], got {x.shape}")
    if kernel < 1 or stride < 1:
        raise ShapeError("maxpool requires kernel >= 1 and stride >= 1")
    c, h, w = x.shape
    if kernel > h or kernel > w:
        raise ShapeError(f"pool window {kernel} larger than input {h}x{w}")
    win = sliding_window_view(x, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    return win.max(axis=(3, 4))


def _apply(layer, x):
    if isinstance(layer, ConvLayer):
        return conv2d(x, layer.weight, layer.bias, layer.stride, layer.padding)
    if isinstance(layer, ReluLayer):
        return relu(x)
    if isinstance(layer, MaxPoolLayer):
        return maxpool(x, layer.kernel, layer.stride)
    raise ShapeError(f"unknown layer type {type(layer).__name__}")


def prepare_input(model, image):
    """Replicate a single-channel image to the model's input width.

    Any other channel mismatch is an error.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3:
        raise ShapeError(f"input image must be [C,H,W], got {image.shape}")
    want = model.input_spec.channels
    if image.shape[0] == want:
        return image
    if image.shape[0] == 1:
        return np.repeat(image, want, axis=0)
    raise ShapeError(
        f"input has {image.shape[0]} channels, model expects {want}"
    )


def forward(model, image, taps):
    """Run the layer chain on one image and return the named tap activations.

    Applies per-channel normalization (x - mean)/std first. The result maps
    tap name -> float32 [C,H,W] activation.
    """
    for name in taps:
        if name not in model.taps:
            raise UnknownTapError(name, model.taps)
    x = prepare_input(model, image)
    # validates the whole chain for this input size before any compute
    model.layer_shapes(x.shape[1], x.shape[2])
    spec = model.input_spec
    x = (x - spec.mean[:, None, None]) / spec.std[:, None, None]
    wanted = {}
    for name in taps:
        wanted.setdefault(model.taps[name], []).append(name)
    last = max(wanted) if wanted else -1
    out = {}
    for i, layer in enumerate(model.layers[: last + 1]):
        x = _apply(layer, x)
        for name in wanted.get(i, ()):
            out[name] = x
    return out
