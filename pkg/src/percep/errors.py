"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: user/config problems (bad files, bad
shapes, degenerate inputs) exit 2, internal numeric failures exit 1.
"""


class PercepError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(PercepError):
    """Operand rank/shape mismatch or impossible output geometry."""


class NumericError(PercepError):
    """Non-finite values produced where finiteness is guaranteed."""


class ContainerError(PercepError):
    """Malformed tensor container file."""


class ManifestError(PercepError):
    """Invalid network manifest or manifest/container inconsistency."""


class UnsupportedOpError(ManifestError):
    """Manifest names a layer type outside conv/relu/maxpool."""


class UnknownTapError(PercepError):
    """Requested tap name not declared by the model."""

    def __init__(self, name, available):
        self.name = name
        self.available = sorted(available)
        super().__init__(
            f"unknown tap {name!r}; available taps: {', '.join(self.available) or '(none)'}"
        )


class StimulusError(PercepError):
    """Stimulus parameter outside the representable range."""


class DegenerateLayerError(PercepError):
    """All mu1 or all mu2 scores vanish; PE normalization undefined."""


class CorrelationUndefinedError(PercepError):
    """Zero-variance input makes a correlation coefficient undefined."""


class ImageFormatError(PercepError):
    """Unsupported or corrupt PGM/PPM file."""


class DatasetError(PercepError):
    """Bad evaluation manifest or record contents."""
