"""Demonstration-guided sampling-based planning for narrow-space insertion."""

__version__ = "0.1.0"
