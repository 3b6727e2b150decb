"""Pulse-level simulator and calibration toolkit for a continuous
controlled-phase gate set on two flux-tunable transmons."""

from .device import DeviceParams, FluxFrequencyMap, ResonatorCoupling, default_device

__all__ = ["DeviceParams", "FluxFrequencyMap", "ResonatorCoupling", "default_device"]
__version__ = "0.1.0"
