"""Zero-propellant reorientation guidance with on-line reference adjustment."""

__version__ = "0.1.0"
