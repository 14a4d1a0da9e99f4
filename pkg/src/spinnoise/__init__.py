"""Spin-noise spectroscopy with polarization-squeezed probes: physics model,
trace synthesis, spectral estimation, line fitting and calibration."""

__version__ = "0.1.0"
