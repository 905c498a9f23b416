"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built and
``MSFUSE_PURE_PYTHON`` is unset; otherwise the numpy/pure-Python
``_pykernels`` module is used. Both expose identical functions.
"""

from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("MSFUSE_PURE_PYTHON"):
    _impl = compiled_backend
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"

SRC_RGB = _pykernels.SRC_RGB
SRC_THERMAL = _pykernels.SRC_THERMAL

iou_matrix = _impl.iou_matrix
dpair_indices = _impl.dpair_indices
greedy_match = _impl.greedy_match
nms = _impl.nms

__all__ = ["BACKEND", "iou_matrix", "dpair_indices", "greedy_match", "nms",
           "python_backend", "compiled_backend", "SRC_RGB", "SRC_THERMAL"]
