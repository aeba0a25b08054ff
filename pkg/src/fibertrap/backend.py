"""Kernel backend selection: compiled extension if built, numpy fallback
otherwise. Override with FIBERTRAP_BACKEND={compiled,python}."""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _kernels
except ImportError:
    _kernels = None

_BY_NAME = {"python": _pykernels}
if _kernels is not None:
    _BY_NAME["compiled"] = _kernels


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BY_NAME))


def get_backend(name: str | None = None):
    """Return the kernel module to use. Resolution order: explicit name,
    FIBERTRAP_BACKEND environment variable, compiled if built, python."""
    if name is None:
        name = os.environ.get("FIBERTRAP_BACKEND")
    if name is not None:
        if name not in _BY_NAME:
            raise ValueError(
                f"backend '{name}' not available; have {available_backends()}"
            )
        return _BY_NAME[name]
    return _BY_NAME.get("compiled", _pykernels)
