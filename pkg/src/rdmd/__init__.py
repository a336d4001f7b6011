"""Resolvent-based spectral analysis of data-driven Koopman operator approximations."""

__version__ = "0.1.0"
