"""Full-reference perceptual distance over a channel subset, plus the
pixel-space baselines (mean squared error and single-scale SSIM).
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import PercepError, ShapeError
from .images import to_luminance
from .inference import forward
from .perception import ChannelSubset
from .tensor import square, sub, sum_all

WEIGHTINGS = ("uniform", "pe-proportional")


@dataclass(frozen=True)
class MetricConfig:
    """A model tap restricted to a channel subset, with a weighting mode."""

    model: object
    tap: str
    subset: ChannelSubset
    weighting: str = "uniform"

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise PercepError(
                f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}"
            )
        width = self.model.tap_channels(self.tap)
        bad = [i for i in self.subset.indices if i >= width]
        if bad:
            raise PercepError(
                f"subset indices {bad} out of range for tap {self.tap!r} "
                f"({width} channels)"
            )
        if not self.subset.indices:
            raise PercepError("subset is empty")


def subset_weights(subset, weighting):
    """Per-channel weights with mean 1: all ones, or proportional to the
    subset's stored PE scores."""
    n = len(subset)
    if weighting == "uniform":
        return np.ones(n, dtype=np.float64)
    pe = np.asarray(subset.weights, dtype=np.float64)
    total = float(pe.sum())
    if total <= 0.0:
        raise PercepError("pe-proportional weighting needs positive PE weights")
    return n * pe / total


def tap_features(cfg, image):
    """Tap activations restricted to the subset channels: float32 [M',H,W]."""
    acts = forward(cfg.model, image, [cfg.tap])[cfg.tap]
    return acts[list(cfg.subset.indices)]


def distance_from_features(cfg, feats1, feats2):
    """Mean squared feature difference, weighted per channel.

    (1 / (M'*H*W)) * sum_m w_m * ||phi_m(I1) - phi_m(I2)||^2 accumulated in
    float64, channel by channel.
    """
    if feats1.shape != feats2.shape:
        raise ShapeError(
            f"feature shapes differ: {feats1.shape} vs {feats2.shape}"
        )
    m, h, w = feats1.shape
    weights = subset_weights(cfg.subset, cfg.weighting)
    per_channel = np.empty(m, dtype=np.float64)
    hw = float(h * w)
    for i in range(m):
        diff = (feats1[i] - feats2[i]).astype(np.float64)
        per_channel[i] = weights[i] * float(np.sum(diff * diff)) / hw
    return float(np.sum(per_channel) / m)


def perceptual_distance(cfg, img1, img2):
    """Perceptual distance between two images through cfg's tap and subset."""
    img1 = np.asarray(img1, dtype=np.float32)
    img2 = np.asarray(img2, dtype=np.float32)
    if img1.shape != img2.shape:
        raise ShapeError(f"image shapes differ: {img1.shape} vs {img2.shape}")
    return distance_from_features(cfg, tap_features(cfg, img1),
                                  tap_features(cfg, img2))


def baseline_l2(img1, img2):
    """Mean squared pixel difference, composed from the tensor primitives."""
    a = np.asarray(img1, dtype=np.float32)
    b = np.asarray(img2, dtype=np.float32)
    return sum_all(square(sub(a, b))) / a.size


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_RANGE = 1.0


def _gaussian_window(size=_SSIM_WINDOW, sigma=_SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _filter_valid(img, kernel):
    """Separable valid-mode correlation with a 1-D kernel."""
    out = sliding_window_view(img, len(kernel), axis=1) @ kernel
    return sliding_window_view(out, len(kernel), axis=0) @ kernel


def baseline_ssim(img1, img2):
    """Single-scale SSIM on luminance, 11x11 Gaussian window sigma=1.5.

    Standard constants k1=0.01, k2=0.03 at dynamic range 1.0; mean over
    valid windows. Result in [-1, 1].
    """
    a = to_luminance(img1)
    b = to_luminance(img2)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < _SSIM_WINDOW:
        raise ShapeError(
            f"image {a.shape} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} "
            "SSIM window"
        )
    k = _gaussian_window()
    mu1 = _filter_valid(a, k)
    mu2 = _filter_valid(b, k)
    sigma1_sq = _filter_valid(a * a, k) - mu1 * mu1
    sigma2_sq = _filter_valid(b * b, k) - mu2 * mu2
    sigma12 = _filter_valid(a * b, k) - mu1 * mu2
    c1 = (_SSIM_K1 * _SSIM_RANGE) ** 2
    c2 = (_SSIM_K2 * _SSIM_RANGE) ** 2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * sigma12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (sigma1_sq + sigma2_sq + c2)
    return float(np.mean(num / den))
