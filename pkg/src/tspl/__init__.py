"""Random operator splitting for the Allen-Cahn equation in a background flow."""

__version__ = "0.1.0"
