"""Dense float32 tensor primitives.

Activation maps use row-major [channels, height, width] layout throughout.
The data plane is float32; reductions that feed channel scores accumulate
in float64. Every operation here guarantees a finite result or raises
NumericError.
"""
import numpy as np

from .errors import NumericError, ShapeError


def as_tensor(data, shape=None):
    """Build a C-contiguous float32 array, validating finiteness.

    ``shape``, when given, must match the element count of ``data``.
    """
    arr = np.asarray(data, dtype=np.float32)
    if shape is not None:
        if any(int(d) <= 0 for d in shape):
            raise ShapeError(f"non-positive dim in shape {tuple(shape)}")
        if arr.size != int(np.prod(shape)):
            raise ShapeError(
                f"data length {arr.size} != product of shape {tuple(shape)}"
            )
        arr = arr.reshape(shape)
    arr = np.ascontiguousarray(arr)
    _check_finite(arr, "as_tensor")
    return arr


def _check_finite(arr, op):
    if not np.isfinite(arr).all():
        raise NumericError(f"{op} produced non-finite values")
    return arr


def _check_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


def spatial_mean(t):
    """Per-channel mean over spatial positions of a [C,H,W] tensor.

    Returns a float64 vector of length C.
    """
    t = np.asarray(t)
    if t.ndim != 3:
        raise ShapeError(f"spatial_mean expects rank-3 [C,H,W], got rank {t.ndim}")
    if t.shape[1] * t.shape[2] < 1:
        raise ShapeError("spatial_mean needs at least one spatial position")
    out = t.astype(np.float64).mean(axis=(1, 2))
    return _check_finite(out, "spatial_mean")


def sub(a, b):
    """Elementwise difference; shapes must match."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    _check_same_shape(a, b, "sub")
    return _check_finite(a - b, "sub")


def mul(a, b):
    """Elementwise product; shapes must match."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    _check_same_shape(a, b, "mul")
    return _check_finite(a * b, "mul")


def square(a):
    """Elementwise square."""
    a = np.asarray(a, dtype=np.float32)
    return _check_finite(a * a, "square")


def sum_all(a):
    """Sum over all elements, accumulated in float64."""
    a = np.asarray(a)
    out = float(a.astype(np.float64).sum())
    if not np.isfinite(out):
        raise NumericError("sum_all produced non-finite value")
    return out
