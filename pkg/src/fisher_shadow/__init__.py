"""Fisher-information tools for shadow tomography of quantum states."""

__version__ = "0.1.0"
