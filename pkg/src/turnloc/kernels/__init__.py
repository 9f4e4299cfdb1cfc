"""Kernel backend selection.

The compiled extension (`turnloc.kernels._native`, Cython) is used when
importable; otherwise the numpy reference implementation takes over.  Set
``TURNLOC_KERNELS=reference`` or ``TURNLOC_KERNELS=native`` to force a
backend (forcing ``native`` raises if the extension is not built).
"""

from __future__ import annotations

import os

from . import reference

_forced = os.environ.get("TURNLOC_KERNELS", "").strip().lower()

if _forced == "reference":
    _impl = reference
    BACKEND = "reference"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        if _forced == "native":
            raise ImportError(
                "TURNLOC_KERNELS=native but the compiled extension is not built; "
                "run `python setup.py build_ext --inplace`"
            )
        _impl = reference
        BACKEND = "reference"

im2col = _impl.im2col
col2im = _impl.col2im
bilinear_resize = _impl.bilinear_resize
bilinear_resize_backward = _impl.bilinear_resize_backward


def backend_name() -> str:
    return BACKEND
