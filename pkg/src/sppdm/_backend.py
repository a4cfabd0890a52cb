"""Kernel backend selection.

The compiled kernels are used when the extension was built; otherwise the
numpy fallback is loaded.  ``SPPDM_BACKEND=python`` (or ``cython``) forces a
choice at import time.
"""
import os

from . import _kernels_py

try:
    from . import _kernels_ext
except ImportError:  # extension not built
    _kernels_ext = None

_BACKENDS = {"python": _kernels_py}
if _kernels_ext is not None:
    _BACKENDS["cython"] = _kernels_ext


def available_backends():
    return sorted(_BACKENDS)


def get_kernels(name=None):
    """Return the kernel module called ``name`` (default: fastest available)."""
    if name is None:
        return _BACKENDS.get("cython", _kernels_py)
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ImportError(
            f"kernel backend {name!r} is not available (have: {available_backends()})"
        ) from None


kernels = get_kernels(os.environ.get("SPPDM_BACKEND") or None)
BACKEND = kernels.NAME
