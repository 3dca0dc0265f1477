"""Backend selection for the Gibbs kernels.

The compiled extension is used when it imports; set ``LINKREG_PURE_PYTHON=1``
to force the pure-Python twin.
"""
import os

from . import _pykernel as python_backend

compiled_backend = None
if not os.environ.get("LINKREG_PURE_PYTHON"):
    try:
        from . import _ckernel as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "compiled" if compiled_backend is not None else "python"


def get_backend(name=None):
    """Return the kernel module called ``name`` ("compiled" or "python"), default the active one."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("the compiled kernel extension is not available")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
