"""Select the resampling kernel implementation at import time.

The compiled OpenMP extension is used when it imports; otherwise the numpy
fallback.  ``OMNIDENSITY_BACKEND=python`` forces the fallback.
"""
import logging
import os

from . import _fallback

logger = logging.getLogger(__name__)


def _load_compiled():
    try:
        from . import _kernels
    except ImportError:
        logger.debug("compiled kernels unavailable, using numpy fallback")
        return None
    return _kernels


compiled = None if os.environ.get("OMNIDENSITY_BACKEND", "").lower() == "python" else _load_compiled()
fallback = _fallback
kernels = compiled if compiled is not None else _fallback
NAME = "compiled" if compiled is not None else "python"


def get(name: str | None = None):
    """Return the kernel module by name ("compiled" or "python"); default is
    the import-time selection."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "compiled":
        if compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")


def default_threads() -> int:
    env = os.environ.get("OMNIDENSITY_THREADS")
    if env:
        return max(1, int(env))
    return 1
