"""Model-zoo export and dataset conversion for the percep toolkit."""

__version__ = "0.1.0"
