"""Laser-phase-noise quantum random number generation: simulator and digital back-end."""

__version__ = "0.1.0"
