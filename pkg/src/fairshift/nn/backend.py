"""Kernel backend selection.

The compiled Cython kernels are used when the extension imported cleanly;
otherwise the numpy implementation takes over. Both expose the same three
functions with identical semantics (results agree to float rounding).

Override order: FAIRSHIFT_BACKEND env var at import time, then
set_backend()/use_backend() at runtime.
"""

import contextlib
import os

from fairshift.nn import _kernels_np

_BACKENDS = {"python": _kernels_np}
try:
    from fairshift.nn import _kernels_c
    _BACKENDS["cython"] = _kernels_c
except ImportError:
    _kernels_c = None

_DEFAULT = "cython" if "cython" in _BACKENDS else "python"
_env = os.environ.get("FAIRSHIFT_BACKEND", "").strip().lower()
if _env:
    if _env not in _BACKENDS:
        raise ImportError(f"FAIRSHIFT_BACKEND={_env!r} requested but only "
                          f"{sorted(_BACKENDS)} are available")
    _DEFAULT = _env

_current = _DEFAULT


def available_backends():
    return sorted(_BACKENDS)


def get_backend():
    return _current


def set_backend(name):
    global _current
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}")
    _current = name


@contextlib.contextmanager
def use_backend(name):
    prev = _current
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def kernels():
    return _BACKENDS[_current]
