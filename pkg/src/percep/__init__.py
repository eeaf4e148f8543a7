"""Grating-probe analysis of CNN channels and subset perceptual metrics."""

__version__ = "0.1.0"
