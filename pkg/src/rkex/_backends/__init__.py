"""Kernel backend selection.

Two interchangeable kernel sets implement the hot inner loops (modular
matrix multiply, Gaussian elimination, NH block hashing): a numba
``@njit`` backend and a pure-numpy vectorized backend.  The environment
variable ``RKEX_BACKEND`` picks one (``numba`` or ``numpy``); unset, the
numba backend is preferred and numpy is the fallback when numba cannot
be imported.

Switching is process-global, not per-thread: call ``set_backend`` /
``use_backend`` only from single-threaded setup code (the benchmark
harness and tests do this; servers should not switch mid-flight).
"""

from __future__ import annotations

import importlib
import os
from contextlib import contextmanager

ENV_VAR = "RKEX_BACKEND"

_BACKEND_MODULES = {
    "numpy": "rkex._backends.numpy_backend",
    "numba": "rkex._backends.numba_backend",
}

_active_name: str | None = None
_loaded: dict[str, object] = {}


def available_backends() -> tuple[str, ...]:
    names = ["numpy"]
    try:
        importlib.import_module("numba")
    except ImportError:
        pass
    else:
        names.append("numba")
    return tuple(names)


def _load(name: str):
    if name not in _BACKEND_MODULES:
        raise ValueError(f"unknown backend {name!r}; expected one of {sorted(_BACKEND_MODULES)}")
    if name not in _loaded:
        _loaded[name] = importlib.import_module(_BACKEND_MODULES[name])
    return _loaded[name]


def _default_name() -> str:
    env = os.environ.get(ENV_VAR, "").strip().lower()
    if env:
        return env
    return "numba" if "numba" in available_backends() else "numpy"


def set_backend(name: str) -> None:
    global _active_name
    _load(name)
    _active_name = name


def active_backend() -> str:
    global _active_name
    if _active_name is None:
        set_backend(_default_name())
    return _active_name  # type: ignore[return-value]


def get_backend():
    return _load(active_backend())


@contextmanager
def use_backend(name: str):
    """Temporarily switch the active backend (process-global)."""
    previous = active_backend()
    set_backend(name)
    try:
        yield _load(name)
    finally:
        set_backend(previous)
