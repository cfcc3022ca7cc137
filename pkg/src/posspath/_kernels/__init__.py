"""Kernel backend selection.

The compiled Cython extension is preferred; the pure-numpy fallback is used
when it is unavailable or when POSSPATH_KERNEL=python is set (the benchmark
uses this to compare the two).
"""

import os

from . import py_backend

if os.environ.get("POSSPATH_KERNEL", "").lower() == "python":
    backend = py_backend
else:
    try:
        from . import _ckernels as backend  # type: ignore[no-redef]
    except ImportError:
        backend = py_backend

BACKEND_NAME = backend.BACKEND
sparse_forward = backend.sparse_forward
sparse_backward = backend.sparse_backward
sparse_viterbi = backend.sparse_viterbi

__all__ = [
    "BACKEND_NAME",
    "backend",
    "py_backend",
    "sparse_forward",
    "sparse_backward",
    "sparse_viterbi",
]
