"""Kernel backend selection.

The hot inner loops (strided 3D convolution and 3D max pooling, forward and
backward) exist twice: a numba @njit implementation and a pure-numpy
implementation. The active backend is chosen once at import time:

  GAZEATTN_BACKEND=numba   force numba (ImportError if unavailable)
  GAZEATTN_BACKEND=numpy   force the pure-numpy path
  unset                    numba when importable, numpy otherwise

Both backends implement the same contract and produce the same results up to
floating-point rounding; ``benchmarks/bench_backends.py`` compares them.
"""

import os

from . import kernels_numpy
from .errors import ConfigError

_ENV_VAR = "GAZEATTN_BACKEND"

_active_name: str = "numpy"
_active = kernels_numpy


def _import_numba_kernels():
    from . import kernels_numba

    return kernels_numba


def _select() -> None:
    global _active, _active_name
    requested = os.environ.get(_ENV_VAR, "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ConfigError(
            f"{_ENV_VAR} must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numpy":
        _active, _active_name = kernels_numpy, "numpy"
        return
    try:
        _active, _active_name = _import_numba_kernels(), "numba"
    except ImportError:
        if requested == "numba":
            raise ConfigError(
                f"{_ENV_VAR}=numba but numba is not importable"
            ) from None
        _active, _active_name = kernels_numpy, "numpy"


def active_backend() -> str:
    """Name of the backend in use: 'numba' or 'numpy'."""
    return _active_name


def set_backend(name: str) -> str:
    """Switch backends at runtime (used by tests and the benchmark).

    Returns the previously active backend name.
    """
    global _active, _active_name
    previous = _active_name
    if name == "numpy":
        _active, _active_name = kernels_numpy, "numpy"
    elif name == "numba":
        _active, _active_name = _import_numba_kernels(), "numba"
    else:
        raise ConfigError(f"unknown backend {name!r}")
    return previous


def conv3d_fwd(xp, w, stride):
    return _active.conv3d_fwd(xp, w, stride)


def conv3d_bwd_x(dout, w, stride, xp_shape):
    return _active.conv3d_bwd_x(dout, w, stride, xp_shape)


def conv3d_bwd_w(dout, xp, w_shape, stride):
    return _active.conv3d_bwd_w(dout, xp, w_shape, stride)


def maxpool3d_fwd(xp, kernel, stride):
    return _active.maxpool3d_fwd(xp, kernel, stride)


def maxpool3d_bwd(dout, argmax, xp_shape):
    return _active.maxpool3d_bwd(dout, argmax, xp_shape)


_select()
