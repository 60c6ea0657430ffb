"""Multimodal emotion recognition with late fusion."""

from ._ercfuse import *  # noqa: F401,F403
from ._ercfuse import ErcfuseError

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
