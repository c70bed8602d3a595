"""Scattering and wave propagation for divergence-form potentials in three dimensions."""
__version__ = "0.1.0"
