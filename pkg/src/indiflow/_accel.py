"""Backend switch for the compiled kernels.

Set ``INDIFLOW_DISABLE_NUMBA=1`` before importing the package to run the
pure-numpy fallback kernels instead of the numba-compiled ones.
"""
import os

DISABLE_ENV = "INDIFLOW_DISABLE_NUMBA"


def _flag_set():
    return os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes", "on")


try:
    if _flag_set():
        raise ImportError("numba disabled by " + DISABLE_ENV)
    import numba  # noqa: F401

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
