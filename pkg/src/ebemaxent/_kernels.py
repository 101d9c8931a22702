"""Backend selection for the hot quadrature reductions.

The compiled extension is used when it imports; otherwise, or when
``EBEMAXENT_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
numpy implementation is used. Both expose ``exp_weights``, ``moments`` and
``gram`` with identical signatures.
"""

import os

from . import _kernels_py


def _load_compiled():
    try:
        from . import _kernels_ext
    except ImportError:
        return None
    return _kernels_ext


_compiled = _load_compiled()

if os.environ.get("EBEMAXENT_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    _impl = _kernels_py
    BACKEND = "python"
else:
    _impl = _compiled
    BACKEND = "cython"

exp_weights = _impl.exp_weights
moments = _impl.moments
gram = _impl.gram


def available_backends():
    """Mapping of backend name to implementation module (for tests and benchmarks)."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
