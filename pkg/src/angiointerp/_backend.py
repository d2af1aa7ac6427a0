"""Select the kernel implementation at import time.

The compiled extension is preferred; set ``ANGIOINTERP_PURE_PYTHON=1`` to
force the numpy fallback.
"""
import os

from . import _pykernels

NAME = "python"
kernels = _pykernels

if os.environ.get("ANGIOINTERP_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        kernels = _ckernels
        NAME = "cython"


def available():
    """Names of all importable backends, compiled first."""
    names = []
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    names.append("python")
    return names


def get(name=None):
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def select(name):
    """Make ``name`` the process-wide default backend."""
    global kernels, NAME
    kernels = get(name)
    NAME = name
    return kernels
