"""Excitation kernels with a compiled backend and a NumPy fallback.

The compiled Cython module is used when importable; set
``PE_AMPC_PURE_PYTHON=1`` to force the fallback.  :data:`BACKEND` names the
active implementation.
"""

import os

from . import _pykernels

python_backend = _pykernels

if os.environ.get("PE_AMPC_PURE_PYTHON", "") not in ("", "0"):
    compiled_backend = None
else:
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

pe_gram = _impl.pe_gram
pe_screen = _impl.pe_screen

__all__ = ["BACKEND", "pe_gram", "pe_screen", "python_backend", "compiled_backend"]
