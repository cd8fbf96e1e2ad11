"""Hot numeric kernels, numba-compiled or pure numpy depending on the backend flag."""
from .._accel import NUMBA_ENABLED, backend_name

if NUMBA_ENABLED:
    from ._numba import (  # noqa: F401
        advance, analytic_G, invert, lag_step, pair_divergence, rls_update, translational_accel,
    )
else:
    from ._numpy import (  # noqa: F401
        advance, analytic_G, invert, lag_step, pair_divergence, rls_update, translational_accel,
    )

__all__ = [
    "advance", "analytic_G", "invert", "lag_step", "pair_divergence", "rls_update",
    "translational_accel", "backend_name", "NUMBA_ENABLED",
]
