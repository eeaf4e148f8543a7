"""Deterministic synthetic textures and blur-degradation QA datasets.

Desk-scale stand-in for external QA corpora: each texture layers a
mid-band noise component (what band-pass channels respond to, matched
across textures) over a low-frequency component whose amplitude varies
per texture. Blur severity is the DMOS proxy.
"""
import csv
from pathlib import Path

import numpy as np

from .images import encode_pgm
from .protocols import gaussian_blur

# (seed, mean luminance, low-frequency amplitude)
DEFAULT_TEXTURE_SPECS = (
    (11, 0.50, 0.012),
    (22, 0.48, 0.020),
    (33, 0.52, 0.330),
)
EXTENDED_TEXTURE_SPECS = DEFAULT_TEXTURE_SPECS + (
    (44, 0.46, 0.060),
    (55, 0.54, 0.180),
)
DEFAULT_BLUR_LEVELS = (0.70, 0.775, 0.85, 0.925, 1.0)

MID_BAND = (0.25, 0.32)   # cycles/pixel; matched content across textures
LF_BAND = (0.02, 0.05)    # cycles/pixel; amplitude varies per texture
MID_AMPLITUDE = 0.10


def band_noise(seed, size, f_lo, f_hi):
    """Isotropic noise band-limited to [f_lo, f_hi] cycles/pixel, peak 1."""
    rng = np.random.default_rng(seed)
    spectrum = np.fft.fft2(rng.normal(0.0, 1.0, (size, size)))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.hypot(fy, fx)
    keep = (radius >= f_lo) & (radius <= f_hi)
    band = np.real(np.fft.ifft2(spectrum * keep))
    return band / np.abs(band).max()


def layered_texture(seed, size=96, mean=0.5, lf_amp=0.02,
                    mid_amp=MID_AMPLITUDE):
    """One [1,H,W] float32 texture; values stay inside (0, 1)."""
    mid = band_noise(seed, size, *MID_BAND)
    lf = band_noise(seed + 1000, size, *LF_BAND)
    img = mean + mid_amp * mid + lf_amp * lf
    return np.clip(img, 0.0, 1.0).astype(np.float32)[None]


def build_blur_qa_dataset(out_dir, size=96, texture_specs=DEFAULT_TEXTURE_SPECS,
                          blur_levels=DEFAULT_BLUR_LEVELS):
    """Write reference/blurred PGMs plus a QA manifest; DMOS = blur sigma.

    Returns the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for ti, (seed, mean, lf_amp) in enumerate(texture_specs):
        ref_name = f"ref{ti}.pgm"
        ref = layered_texture(seed, size=size, mean=mean, lf_amp=lf_amp)
        encode_pgm(out / ref_name, ref)
        for sigma in blur_levels:
            dist_name = f"ref{ti}_blur{sigma:g}.pgm"
            encode_pgm(out / dist_name, gaussian_blur(ref, sigma))
            rows.append((ref_name, dist_name, sigma))
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ref", "dist", "dmos"])
        for ref_name, dist_name, sigma in rows:
            writer.writerow([ref_name, dist_name, repr(float(sigma))])
    return manifest
