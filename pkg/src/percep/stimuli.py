"""Sinusoidal grating stimulus generation.

Two stimulus families: radially symmetric gratings swept over spatial
frequency, and plane-wave gratings of fixed frequency swept over
orientation. Frequencies are specified in cycles per degree and converted
to cycles per pixel through a viewing geometry.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import StimulusError

DEFAULT_PPD = 32.0
DEFAULT_CONTRAST = 1.0
DEFAULT_FREQ_RANGE = (0.5, 16.0, 0.25)   # cpd: start, stop (inclusive), step
DEFAULT_ORIENTATION_STEP = 5.0           # degrees; sweep covers [0, 180)


@dataclass(frozen=True)
class ViewingGeometry:
    """Maps visual angle to pixels. Frequencies above Nyquist are rejected."""

    pixels_per_degree: float = DEFAULT_PPD

    def __post_init__(self):
        if self.pixels_per_degree <= 0:
            raise StimulusError("pixels_per_degree must be positive")

    @property
    def nyquist_cpd(self):
        return self.pixels_per_degree / 2.0

    def cycles_per_pixel(self, f_cpd):
        return f_cpd / self.pixels_per_degree


def frequency_sweep(start=DEFAULT_FREQ_RANGE[0], stop=DEFAULT_FREQ_RANGE[1],
                    step=DEFAULT_FREQ_RANGE[2]):
    """Inclusive arithmetic frequency grid in cpd."""
    n = int(round((stop - start) / step)) + 1
    return tuple(float(start + i * step) for i in range(n))


def orientation_sweep(step=DEFAULT_ORIENTATION_STEP):
    """Orientation grid over [0, 180) degrees; 180 is the same grating as 0."""
    n = int(round(180.0 / step))
    return tuple(float(i * step) for i in range(n))


@dataclass(frozen=True)
class StimulusGrid:
    """Probe configuration: frequency/orientation grids, contrast, geometry."""

    frequencies: tuple = field(default_factory=frequency_sweep)
    orientations: tuple = field(default_factory=orientation_sweep)
    contrast: float = DEFAULT_CONTRAST
    size: int = 224
    geometry: ViewingGeometry = field(default_factory=ViewingGeometry)
    channels: int = 1

    def __post_init__(self):
        if not 0.0 < self.contrast <= 1.0:
            raise StimulusError(f"contrast {self.contrast} outside (0, 1]")
        if self.size < 1 or self.channels < 1:
            raise StimulusError("size and channels must be >= 1")
        freqs = tuple(float(f) for f in self.frequencies)
        if not freqs:
            raise StimulusError("empty frequency grid")
        if any(f2 <= f1 for f1, f2 in zip(freqs, freqs[1:])):
            raise StimulusError("frequencies must be strictly increasing")
        for f in freqs:
            _check_frequency(f, self.geometry)
        oris = tuple(float(t) for t in self.orientations)
        if len(set(oris)) != len(oris):
            raise StimulusError("orientations must be unique")
        for t in oris:
            _check_orientation(t)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "orientations", oris)


def _check_frequency(f_cpd, geometry):
    if f_cpd <= 0:
        raise StimulusError(f"frequency {f_cpd} cpd must be positive")
    if f_cpd > geometry.nyquist_cpd:
        raise StimulusError(
            f"frequency {f_cpd} cpd above Nyquist "
            f"({geometry.nyquist_cpd} cpd at {geometry.pixels_per_degree} ppd)"
        )


def _check_orientation(theta_deg):
    if not 0.0 <= theta_deg < 180.0:
        raise StimulusError(f"orientation {theta_deg} outside [0, 180)")


def _centered_coords(size):
    c = (size - 1) / 2.0
    return np.arange(size, dtype=np.float64) - c


def radial_grating(f_cpd, grid):
    """Radially symmetric grating, mean 0.5, amplitude 0.5*contrast.

    luminance(x, y) = 0.5 + 0.5*C*cos(2*pi*k*r) with k the frequency in
    cycles per pixel and r the distance from the image center. The single
    luminance plane is replicated across ``grid.channels``.
    """
    _check_frequency(f_cpd, grid.geometry)
    k = grid.geometry.cycles_per_pixel(f_cpd)
    c = _centered_coords(grid.size)
    r = np.hypot(c[:, None], c[None, :])
    plane = 0.5 + 0.5 * grid.contrast * np.cos(2.0 * np.pi * k * r)
    return np.broadcast_to(
        plane.astype(np.float32), (grid.channels, grid.size, grid.size)
    ).copy()


def oriented_grating(theta_deg, f_cpd, grid):
    """Plane-wave grating at orientation theta (degrees) and frequency f (cpd).

    theta = 0 varies along x (columns) and is constant down each column.
    Orientations are periodic with period 180 (cosine evenness); theta is
    folded into [0, 180) with an exact fmod so theta and theta+180 produce
    bitwise-identical images.
    """
    theta_deg = float(theta_deg)
    if not np.isfinite(theta_deg):
        raise StimulusError(f"orientation {theta_deg} is not finite")
    theta_deg = np.fmod(theta_deg, 180.0)
    if theta_deg < 0.0:
        theta_deg += 180.0
    _check_frequency(f_cpd, grid.geometry)
    k = grid.geometry.cycles_per_pixel(f_cpd)
    t = np.deg2rad(theta_deg)
    c = _centered_coords(grid.size)
    # phase argument x*cos(theta) + y*sin(theta) with centered pixel coords
    arg = c[None, :] * np.cos(t) + c[:, None] * np.sin(t)
    plane = 0.5 + 0.5 * grid.contrast * np.cos(2.0 * np.pi * k * arg)
    return np.broadcast_to(
        plane.astype(np.float32), (grid.channels, grid.size, grid.size)
    ).copy()
