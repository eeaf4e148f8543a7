"""Activation-parity harness: compare source-framework activations with
the percep engine on a shared probe batch.

Probe inputs are written as 8-bit PPM files and read back before either
side sees them, so both engines consume identical pixel values. The
percep side runs through its CLI (`percep forward`), which dumps tap
activations in the container format.
"""
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .container import read_container

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ParityError(Exception):
    pass


def default_primary_cmd():
    return (sys.executable, "-m", "percep")


def probe_inputs(size, n_inputs=12, seed=0):
    """Probe batch: smoothed random images plus sinusoidal gratings."""
    n_gratings = min(4, n_inputs)
    n_random = n_inputs - n_gratings
    images = []
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        img = rng.uniform(0.0, 1.0, (size, size))
        # cheap smoothing so content is not pure pixel noise
        img = (img + np.roll(img, 1, 0) + np.roll(img, 1, 1)
               + np.roll(img, (1, 1), (0, 1))) / 4.0
        images.append(np.repeat(img[None], 3, axis=0).astype(np.float32))
    c = (size - 1) / 2.0
    coords = np.arange(size) - c
    y, x = np.meshgrid(coords, coords, indexing="ij")
    specs = [("radial", 4.0 / 32), ("radial", 8.0 / 32),
             ("oriented", 0.0), ("oriented", 45.0)]
    for kind, param in specs[:n_gratings]:
        if kind == "radial":
            arg = np.hypot(x, y) * param
        else:
            t = np.deg2rad(param)
            arg = (x * np.cos(t) + y * np.sin(t)) * (8.0 / 32)
        plane = 0.5 + 0.5 * np.cos(2 * np.pi * arg)
        images.append(np.repeat(plane[None], 3, axis=0).astype(np.float32))
    return images


def write_ppm(path, image_chw):
    u8 = np.clip(np.rint(np.asarray(image_chw) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), "RGB").save(path, format="PPM")


def read_ppm(path):
    arr = np.asarray(Image.open(path), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def torch_tap_activations(prefix, tap_positions, image_chw):
    """Run the (already folded) module list, grabbing outputs by position."""
    x = torch.from_numpy(np.asarray(image_chw, dtype=np.float32))
    mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
    x = ((x - mean) / std).unsqueeze(0)
    wanted = {}
    with torch.no_grad():
        for pos, module in enumerate(prefix):
            x = module(x)
            for name, tap_pos in tap_positions.items():
                if tap_pos == pos:
                    wanted[name] = x.squeeze(0).numpy().copy()
    return wanted


def primary_tap_activations(manifest_path, container_path, image_path, taps,
                            out_path, primary_cmd=None):
    cmd = list(primary_cmd or default_primary_cmd()) + [
        "forward", "--model", str(manifest_path),
        "--weights", str(container_path), "--image", str(image_path),
        "--taps", ",".join(taps), "--out", str(out_path),
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ParityError(
            f"percep forward failed ({proc.returncode}): {proc.stderr.strip()}"
        )
    return read_container(out_path)


def run_parity_check(torch_prefix, tap_positions, manifest_path,
                     container_path, input_size, n_inputs=12, seed=0,
                     primary_cmd=None):
    """Max relative deviation per tap over the probe batch.

    Deviation is ||torch - percep||_inf / ||torch||_inf per (input, tap).
    """
    worst = {name: 0.0 for name in tap_positions}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for i, image in enumerate(probe_inputs(input_size, n_inputs, seed)):
            img_path = tmp / f"probe{i:02d}.ppm"
            write_ppm(img_path, image)
            decoded = read_ppm(img_path)
            reference = torch_tap_activations(torch_prefix, tap_positions,
                                              decoded)
            measured = primary_tap_activations(
                manifest_path, container_path, img_path, list(tap_positions),
                tmp / f"acts{i:02d}.tensors", primary_cmd)
            for name in tap_positions:
                ref = reference[name]
                got = measured[name]
                if ref.shape != tuple(got.shape):
                    raise ParityError(
                        f"tap {name!r} shape mismatch: torch {ref.shape} vs "
                        f"percep {tuple(got.shape)}"
                    )
                scale = max(float(np.abs(ref).max()), 1e-12)
                dev = float(np.abs(ref - got).max()) / scale
                worst[name] = max(worst[name], dev)
    return worst
