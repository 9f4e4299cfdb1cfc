"""turnloc: iterative dialog-based localization on synthetic floor maps."""

__version__ = "0.1.0"
