"""Cam-follower impact oscillator toolkit."""

__version__ = "0.1.0"
