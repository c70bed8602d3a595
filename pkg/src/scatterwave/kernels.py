"""Backend selection for the direct-summation kernels.

The Cython extension is used when it imports; otherwise the numpy versions
are used. Setting ``SCATTERWAVE_PURE_PYTHON=1`` forces the numpy path.
"""
import os
import warnings

import numpy as np

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("SCATTERWAVE_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError as e:
        warnings.warn(f"scatterwave: compiled kernels unavailable ({e}); using numpy fallback")

COMPILED = compiled_backend is not None
_backend = compiled_backend if COMPILED else python_backend


def _prep(targets, center, sources, weights, vector=False):
    t = np.ascontiguousarray(np.atleast_2d(targets), dtype=float)
    c = np.ascontiguousarray(center, dtype=float).reshape(3)
    s = np.ascontiguousarray(np.atleast_2d(sources), dtype=float)
    w = np.ascontiguousarray(weights, dtype=complex)
    if vector:
        w = w.reshape(len(s), 3)
    return t, c, s, w


def amp_sum(targets, center, sources, weights, k, backend=None):
    b = backend or _backend
    return b.amp_sum(*_prep(targets, center, sources, weights), complex(k))


def amp_grad_sum(targets, center, sources, weights, k, backend=None):
    b = backend or _backend
    return b.amp_grad_sum(*_prep(targets, center, sources, weights, vector=True), complex(k))


def farfield_sum(sigmas, center, sources, weights, k, backend=None):
    b = backend or _backend
    return b.farfield_sum(*_prep(sigmas, center, sources, weights), complex(k))
