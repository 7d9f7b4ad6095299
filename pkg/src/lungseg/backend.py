"""Selects the active kernel backend at import time.

The compiled Cython core is preferred when it built; the NumPy fallback is
always available. Override with LUNGSEG_BACKEND=compiled|fallback, or call
set_backend() (used by the parity tests and the benchmark).
"""

import os

from . import _kernels

active = _kernels.fallback

_requested = os.environ.get("LUNGSEG_BACKEND", "").strip().lower()
if _requested == "fallback":
    active = _kernels.fallback
elif _requested == "compiled":
    if _kernels.compiled is None:
        raise ImportError("LUNGSEG_BACKEND=compiled but the extension is not built")
    active = _kernels.compiled
elif _kernels.compiled is not None:
    active = _kernels.compiled


def name() -> str:
    return active.NAME


def available() -> dict:
    """All importable backends, keyed by name."""
    out = {"fallback": _kernels.fallback}
    if _kernels.compiled is not None:
        out["compiled"] = _kernels.compiled
    return out


def set_backend(backend_name: str):
    """Swap the active backend; returns the previous one for restoring."""
    global active
    prev = active
    active = available()[backend_name]
    return prev
