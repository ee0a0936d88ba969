"""Headless frame-limited runner for assembled pygame games."""

from .runner import FrameLimitReached, run_headless

__version__ = "0.1.0"

__all__ = ["FrameLimitReached", "run_headless", "__version__"]
