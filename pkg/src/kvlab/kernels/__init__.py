"""Hot attention kernels with a numba fast path and a pure-numpy fallback.

Backend selection, in order:

  1. ``KVLAB_BACKEND=numpy`` or ``KVLAB_BACKEND=numba`` in the environment;
  2. otherwise numba if importable, else numpy.

Callers must go through the module attributes (``kernels.attend(...)``),
never ``from kvlab.kernels import attend``, so that :func:`set_backend`
(used by the benchmark and backend-equivalence tests) takes effect.
"""

from __future__ import annotations

import os

from . import _numpy

_BACKENDS = ("numba", "numpy")

active_backend = "numpy"
attend = _numpy.attend
selector_weights = _numpy.selector_weights


def set_backend(name: str) -> None:
    """Rebind the kernel entry points to the named backend."""
    global active_backend, attend, selector_weights
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; expected one of {_BACKENDS}")
    if name == "numba":
        from . import _numba as impl
    else:
        impl = _numpy
    attend = impl.attend
    selector_weights = impl.selector_weights
    active_backend = name


def _select_default() -> None:
    forced = os.environ.get("KVLAB_BACKEND", "").strip().lower()
    if forced and forced not in _BACKENDS:
        raise ValueError(f"KVLAB_BACKEND={forced!r} not supported; use 'numba' or 'numpy'")
    if forced == "numpy":
        set_backend("numpy")
        return
    try:
        set_backend("numba")
    except ImportError:
        if forced == "numba":
            raise
        set_backend("numpy")


_select_default()
