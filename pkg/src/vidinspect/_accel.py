# Numba kernels are available when numba imports cleanly and
# VIDINSPECT_DISABLE_NUMBA is unset. Otherwise every kernel runs on numpy.

import logging
import os

logger = logging.getLogger(__name__)

_FLAG = "VIDINSPECT_DISABLE_NUMBA"


def _flag_set() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # workqueue is always present; tbb may be too old and only warns
        numba.config.THREADING_LAYER = "workqueue"
    njit = numba.njit
    prange = numba.prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    logger.warning("numba not importable, falling back to numpy kernels")

    def njit(*args, **kwargs):
        def wrap(func):
            return func
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return wrap

    prange = range
    HAVE_NUMBA = False


USE_NUMBA = HAVE_NUMBA and not _flag_set()


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
