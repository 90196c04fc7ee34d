"""Backend switch for the numeric kernels.

Every hot kernel exists twice: a numba ``@njit`` loop and a numpy (or plain
Python) fallback.  The two are written to perform the same floating point
operations in the same order, so switching backends never changes results.

Set ``CLFVAR_DISABLE_NUMBA=1`` to force the fallback path.
"""

import os

DISABLE_ENV = "CLFVAR_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False


def _flag_set(value):
    return value.strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _flag_set(os.environ.get(DISABLE_ENV, ""))


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    fastmath stays off: it would allow reassociation and FMA contraction,
    which break bitwise agreement with the fallback path.
    """
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if USE_NUMBA else "numpy"


def set_backend(name):
    """Select the kernel backend at runtime; returns the previous one."""
    global USE_NUMBA
    previous = backend()
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        USE_NUMBA = True
    elif name == "numpy":
        USE_NUMBA = False
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous
