"""Numerical laboratory for GAN-type estimation of singular distributions."""

__version__ = "0.1.0"
