"""Kernel backend selection.

Hot loops exist in two variants: a numba-jitted scalar version and a
vectorized numpy fallback.  The active variant is chosen once at import
time from the ``VOLREN_BACKEND`` environment variable:

    auto   use numba when importable, numpy otherwise (default)
    numba  require numba, fail loudly if it is missing
    numpy  force the pure-numpy path even when numba is installed

Both variants of a kernel module share one function-level API, so
callers do ``k = select_kernels("raycast")`` and never branch again.
"""
from __future__ import annotations

import importlib
import os

_CHOICES = ("auto", "numba", "numpy")

BACKEND_ENV = "VOLREN_BACKEND"


def _resolve() -> str:
    requested = os.environ.get(BACKEND_ENV, "auto").strip().lower()
    if requested not in _CHOICES:
        raise ValueError(
            f"{BACKEND_ENV} must be one of {_CHOICES}, got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise ImportError(
                f"{BACKEND_ENV}=numba but numba is not installed"
            ) from None
        return "numpy"
    return "numba"


#: Name of the backend in use for this process, "numba" or "numpy".
ACTIVE = _resolve()

USING_NUMBA = ACTIVE == "numba"


def njit(*args, **kwargs):
    """numba.njit with project defaults (cached, nogil, exact fp)."""
    import numba

    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    kwargs.setdefault("fastmath", False)
    return numba.njit(*args, **kwargs)


def select_kernels(name: str, backend: str | None = None):
    """Import and return the kernel module for `name`.

    `backend` overrides the process-wide choice; the benchmark uses this
    to time both variants side by side.
    """
    suffix = {"numba": "nb", "numpy": "np"}[backend or ACTIVE]
    return importlib.import_module(f"volren.kernels.{name}_{suffix}")
