"""Kernel backend selection.

The compiled Cython core is used when importable; otherwise the NumPy
fallback takes over. ``FOODREC_KERNELS=numpy`` or ``=compiled`` forces a
backend (the benchmark and the cross-backend tests rely on this).
"""

import os

from . import _kernels_np as numpy_kernels

try:
    from . import _kernels as compiled_kernels
except ImportError:
    compiled_kernels = None


def available_backends():
    """Name -> kernel module, for everything importable in this install."""
    found = {"numpy": numpy_kernels}
    if compiled_kernels is not None:
        found["compiled"] = compiled_kernels
    return found


def _select():
    forced = os.environ.get("FOODREC_KERNELS", "").strip().lower()
    if forced in ("numpy", "py", "fallback"):
        return "numpy", numpy_kernels
    if forced in ("compiled", "cython", "c"):
        if compiled_kernels is None:
            raise ImportError(
                "FOODREC_KERNELS=compiled but the foodrec._kernels extension "
                "is not built; reinstall with a C compiler available")
        return "compiled", compiled_kernels
    if forced:
        raise ValueError(f"unknown FOODREC_KERNELS value: {forced!r}")
    if compiled_kernels is not None:
        return "compiled", compiled_kernels
    return "numpy", numpy_kernels


ACTIVE, _mod = _select()

conv2d_forward = _mod.conv2d_forward
conv2d_backward_input = _mod.conv2d_backward_input
conv2d_backward_weights = _mod.conv2d_backward_weights
label_components = _mod.label_components
