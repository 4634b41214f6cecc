"""Random-feature score models on Gaussian mixtures."""

__version__ = "0.1.0"
