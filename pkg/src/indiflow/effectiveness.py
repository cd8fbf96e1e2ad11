"""Control effectiveness of flow with respect to ``[pitch, roll, thrust]``.

Two data-driven routes are provided, both driven by the same recursive least
squares recursion:

* ``"G"`` mode identifies ``dydot ~ G du`` and must invert the estimate before
  it can be used for control.
* ``"Ginv"`` mode identifies ``du ~ G_inv dydot`` directly, so the control
  increment is a single matrix-vector product.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import ControlInput, PhysicalParams, RelativeState
from .errors import ConfigInvalid, DegenerateHeight, DimensionMismatch, IllConditioned
from .flow import SensorParams

DEFAULT_COND_MAX = 1e8
# diagonal prior for blind initialisation of G_inv (pitch, roll, thrust rows)
BLIND_GINV_DIAG = (0.1, -0.1, 3.0)


def analytic_G(x: RelativeState, u: ControlInput, physical: PhysicalParams = PhysicalParams(),
               sensor: SensorParams = SensorParams()) -> np.ndarray:
    """Jacobian of the flow derivative with respect to ``u`` (rows x, y, z flow)."""
    if not x.height > 0:
        raise DegenerateHeight(f"relative height {x.height} <= 0")
    cx, cy, cz = sensor.c
    return kernels.analytic_G(float(x.height), float(u.pitch), float(u.roll), float(u.thrust),
                              float(physical.mass), float(cx), float(cy), float(cz))


def invert(G, cond_max=DEFAULT_COND_MAX) -> np.ndarray:
    """Matrix inverse guarded by a 1-norm condition estimate.

    Raises ``IllConditioned`` for singular, non-finite or badly conditioned input.
    """
    G = np.ascontiguousarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {G.shape}")
    Gi, ok, cond = kernels.invert(G, float(cond_max))
    if not ok:
        raise IllConditioned(f"condition estimate {cond:.3g} exceeds {cond_max:.3g}")
    return Gi


def true_Ginv(x: RelativeState, u: ControlInput, physical: PhysicalParams = PhysicalParams(),
              sensor: SensorParams = SensorParams(), cond_max=DEFAULT_COND_MAX) -> np.ndarray:
    return invert(analytic_G(x, u, physical, sensor), cond_max)


@dataclass
class RlsEstimatorState:
    """Exponentially weighted RLS over the rows of a parameter matrix.

    ``theta`` has one row per output; row ``r`` is fitted with its own
    covariance ``P[r]``. With ``diagonal`` only the diagonal is identified and
    each row sees a scalar regressor.
    """

    theta: np.ndarray
    P: np.ndarray
    gamma: float
    mode: str = "Ginv"
    diagonal: bool = False
    eps_reg: float = 1e-6
    trace_max: float = 3e4
    count: int = 0
    skipped: bool = False
    skip_count: int = 0

    def __post_init__(self):
        if self.mode not in ("G", "Ginv"):
            raise ConfigInvalid(f"unknown estimator mode {self.mode!r}", "estimator.mode")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigInvalid("forgetting factor must lie in (0, 1]", "estimator.gamma")

    @classmethod
    def create(cls, initial, gamma, mode="Ginv", p0=1e3, diagonal=False, eps_reg=1e-6,
               trace_factor=10.0):
        initial = np.array(initial, dtype=float, ndmin=2)
        rows, cols = initial.shape
        n = 1 if diagonal else cols
        P = np.tile(p0 * np.eye(n), (rows, 1, 1))
        return cls(initial.copy(), P, float(gamma), mode, diagonal, eps_reg,
                   trace_max=trace_factor * p0 * n)

    @property
    def estimate(self) -> np.ndarray:
        return self.theta

    def copy(self):
        return copy.deepcopy(self)

    def update(self, regressor, response) -> bool:
        """In-place update; returns True when skipped for lack of excitation."""
        regressor = np.asarray(regressor, dtype=float)
        response = np.asarray(response, dtype=float)
        rows, cols = self.theta.shape
        if regressor.shape != (cols,) or response.shape != (rows,):
            raise DimensionMismatch(
                f"regressor {regressor.shape} / response {response.shape} do not fit "
                f"a {rows}x{cols} estimate")
        if self.diagonal:
            diag = np.diagonal(self.theta).copy()[:, None]
            phi = regressor[:rows, None].copy()
            skipped = kernels.rls_update(diag, self.P, phi, response, self.gamma, self.eps_reg,
                                         self.trace_max)
            self.theta[np.diag_indices(rows)] = diag[:, 0]
        else:
            phi = np.ascontiguousarray(np.broadcast_to(regressor, (rows, cols)))
            skipped = kernels.rls_update(self.theta, self.P, phi, response, self.gamma,
                                         self.eps_reg, self.trace_max)
        self.skipped = skipped > 0
        if self.skipped:
            self.skip_count += 1
        else:
            self.count += 1
        return self.skipped


def rls_update(state: RlsEstimatorState, regressor, response) -> RlsEstimatorState:
    """Functional form of :meth:`RlsEstimatorState.update`; ``state`` is not modified."""
    new = state.copy()
    new.update(regressor, response)
    return new


def increments(mode, du, dydot):
    """``(regressor, response)`` for a given identification mode.

    ``G`` mode regresses the flow-derivative increment on the input increment;
    ``Ginv`` mode the other way round.
    """
    if mode == "G":
        return du, dydot
    return dydot, du


@dataclass
class EstimatorConfig:
    gamma: float | None = None  # None: 0.8 for G mode, 0.95 for Ginv mode
    p0: float = 1e3
    init: str = "perturbed"  # or "blind"
    perturbation: float = 0.2
    eps_reg: float = 1e-6
    diagonal: bool = False
    cond_max: float = DEFAULT_COND_MAX
    trace_factor: float = 10.0

    def gamma_for(self, mode):
        if self.gamma is not None:
            return self.gamma
        return 0.8 if mode == "G" else 0.95

    def validate(self):
        if self.gamma is not None and not 0.0 < self.gamma <= 1.0:
            raise ConfigInvalid("forgetting factor must lie in (0, 1]", "estimator.gamma")
        if not self.p0 > 0:
            raise ConfigInvalid("initial covariance must be positive", "estimator.p0")
        if self.init not in ("perturbed", "blind"):
            raise ConfigInvalid(f"unknown init policy {self.init!r}", "estimator.init")
        if not self.eps_reg >= 0:
            raise ConfigInvalid("excitation threshold must be non-negative", "estimator.eps_reg")
        return self


def initial_estimate(cfg: EstimatorConfig, mode, true_G, vertical_only=False):
    """Starting parameter matrix for the estimator.

    ``perturbed`` scales the true matrix at the initial state by
    ``1 + perturbation``; ``blind`` uses a fixed diagonal prior.
    """
    sl = slice(2, 3) if vertical_only else slice(0, 3)
    if cfg.init == "perturbed":
        G = np.asarray(true_G, dtype=float)[sl, sl]
        base = G if mode == "G" else invert(G)
    else:
        Gi0 = np.diag(BLIND_GINV_DIAG)[sl, sl]
        base = Gi0 if mode == "Ginv" else np.linalg.inv(Gi0)
    return (1.0 + cfg.perturbation) * base if cfg.init == "perturbed" else base.copy()
