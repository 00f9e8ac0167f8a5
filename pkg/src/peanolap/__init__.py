"""Peano-curve graph approximations of self-similar spaces and their Laplacian spectra."""
__version__ = "0.1.0"
