"""Executable parabolic De Giorgi classes: regimes, bounds, energies, iteration."""

__version__ = "0.1.0"
