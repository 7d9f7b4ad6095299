"""Kernel backends: compiled Cython core with a pure-NumPy fallback."""

from . import fallback

try:
    from . import _core as compiled
except ImportError:
    compiled = None

__all__ = ["fallback", "compiled"]
