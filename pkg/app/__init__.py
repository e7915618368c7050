"""One-source-at-a-time single channel source separation."""

__version__ = "0.1.0"
