"""Backend switch for the hot numeric kernels.

Every kernel in :mod:`maxlab.kernels` exists twice: a loop version compiled
with ``numba.njit`` and a vectorised pure-numpy twin.  The numba path is used
when numba imports and ``MAXLAB_DISABLE_JIT`` is unset (or ``0``).  Setting
``MAXLAB_DISABLE_JIT=1`` forces the numpy path, which is also the automatic
fallback when numba is missing.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

try:  # pragma: no cover - exercised implicitly
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

HAVE_NUMBA = _numba is not None

_FALSY = ("", "0", "false", "no", "off")


def _env_disabled() -> bool:
    return os.environ.get("MAXLAB_DISABLE_JIT", "0").strip().lower() not in _FALSY


_backend = "numba" if (HAVE_NUMBA and not _env_disabled()) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextmanager
def using_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
