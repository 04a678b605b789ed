"""Multi-fidelity reconstruction of rotating-detonation fields from sparse sensors."""

__version__ = "0.1.0"
