"""Outer-loop INDI flow controller.

One tick runs: filter the measured flow, differentiate it, update the
effectiveness estimate with last tick's increments, form the PID virtual
input, and command ``u = u_prev + G_inv (nu - ydot)`` through saturation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dynamics import ActuatorLimits, ControlInput, PhysicalParams, RelativeState
from .effectiveness import (
    DEFAULT_COND_MAX, EstimatorConfig, RlsEstimatorState, analytic_G, increments, initial_estimate,
    invert,
)
from .errors import ConfigInvalid, IllConditioned
from .flow import SensorParams, low_pass


class Method(str, Enum):
    CONVENTIONAL_G = "conventional_g"
    DIRECT_GINV = "direct_ginv"
    ANALYTIC_ORACLE = "analytic_oracle"


class Mode(str, Enum):
    FULL_3AXIS = "full_3axis"
    VERTICAL_ONLY = "vertical_only"


class FlightPhase(str, Enum):
    ACTIVE = "active"
    SHUTDOWN = "shutdown"


@dataclass
class GainConfig:
    kp: tuple = (1.0, 1.0, 1.0)
    ki: tuple = (0.0, 0.0, 0.0)
    kd: tuple = (0.0, 0.0, 0.0)
    setpoint_x: float = 0.0
    setpoint_y: float = 0.0
    setpoint_z: float = -0.1
    integral_limit: float = 0.5

    @property
    def setpoint(self):
        return np.array([self.setpoint_x, self.setpoint_y, self.setpoint_z])

    def validate(self):
        for name in ("kp", "ki", "kd"):
            vals = getattr(self, name)
            if len(vals) != 3 or min(vals) < 0:
                raise ConfigInvalid(f"{name} must be three non-negative gains", f"gains.{name}")
        if not self.integral_limit >= 0:
            raise ConfigInvalid("integral limit must be non-negative", "gains.integral_limit")
        return self


@dataclass
class GuardConfig:
    min_height: float = 0.05
    touchdown_flow: float | None = None

    def validate(self):
        if not self.min_height > 0:
            raise ConfigInvalid("guard height must be positive", "guard.min_height")
        return self


@dataclass
class ExcitationConfig:
    """Small sinusoidal probing signal added to the commands.

    Keeps the input increments informative when the loop is otherwise quiet
    (noiseless runs), so the online estimate can follow the true map.
    """

    amplitude: tuple = (0.0, 0.0, 0.0)  # pitch [rad], roll [rad], thrust [N]
    frequency_hz: tuple = (1.3, 1.7, 1.1)

    def validate(self):
        if len(self.amplitude) != 3 or min(self.amplitude) < 0:
            raise ConfigInvalid("amplitudes must be three non-negative values",
                                "control.excitation.amplitude")
        if len(self.frequency_hz) != 3 or min(self.frequency_hz) <= 0:
            raise ConfigInvalid("frequencies must be three positive values",
                                "control.excitation.frequency_hz")
        return self

    @property
    def active(self):
        return any(a > 0 for a in self.amplitude)

    def __call__(self, t):
        return np.asarray(self.amplitude, dtype=float) * np.sin(
            2.0 * math.pi * np.asarray(self.frequency_hz, dtype=float) * t)


@dataclass
class ControllerState:
    method: Method = Method.DIRECT_GINV
    mode: Mode = Mode.FULL_3AXIS
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_error: np.ndarray | None = None
    y_filtered: np.ndarray | None = None
    ydot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ydot_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))
    du: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_inverse: np.ndarray | None = None
    samples: int = 0


def virtual_input(y, ydot, state: ControllerState, gains: GainConfig, dt):
    """PID virtual input on the flow error; advances the trapezoidal integral."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    err = np.asarray(y, dtype=float) - gains.setpoint
    if state.last_error is not None:
        state.integral = state.integral + 0.5 * (err + state.last_error) * dt
        lim = gains.integral_limit
        state.integral = np.clip(state.integral, -lim, lim)
    state.last_error = err
    return (-np.asarray(gains.kp) * err - np.asarray(gains.ki) * state.integral
            - np.asarray(gains.kd) * np.asarray(ydot, dtype=float))


class DerivativeEstimator:
    """Backward difference of the low-pass filtered flow.

    ``f_c=None`` (or infinite) disables the filter. ``f_c2`` optionally
    smooths the difference with a second single-pole stage. The first sample
    returns a zero derivative.
    """

    def __init__(self, dt, f_c=None, f_c2=None):
        self.dt = dt
        self.f_c = f_c
        self.f_c2 = f_c2
        self.value = None
        self.rate = None

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.value is None:
            self.value = y.copy()
            self.rate = np.zeros_like(y)
            return self.value, self.rate
        prev = self.value
        self.value = _smooth(prev, y, self.f_c, self.dt)
        self.rate = _smooth(self.rate, (self.value - prev) / self.dt, self.f_c2, self.dt)
        return self.value, self.rate


def _smooth(prev, raw, f_c, dt):
    if f_c is None or math.isinf(f_c):
        return np.array(raw, dtype=float)
    return low_pass(prev, raw, f_c, dt)


class InputSynchronizer:
    """Reference input for the increment, delayed like the flow derivative.

    Commands pass through a model of the inner loop (first-order lag, averaged
    over the hold interval) and then through the same filter cascade as the
    flow, so ``u_ref`` lines up in time with the filtered ``ydot``.
    """

    def __init__(self, u0, dt, tau, f_c=None, f_c2=None):
        u0 = np.asarray(u0, dtype=float)
        self.dt = dt
        self.decay = np.exp(-dt / np.asarray(tau, dtype=float))
        self.tau = np.asarray(tau, dtype=float)
        self.f_c, self.f_c2 = f_c, f_c2
        self.applied = u0.copy()
        self.stage1 = u0.copy()
        self.value = u0.copy()

    def __call__(self, last_command):
        cmd = np.asarray(last_command, dtype=float)
        start = self.applied
        self.applied = cmd + (start - cmd) * self.decay
        # exact mean of the lag response over the interval
        mean = cmd + (start - cmd) * self.tau / self.dt * (1.0 - self.decay)
        self.stage1 = _smooth(self.stage1, mean, self.f_c, self.dt)
        self.value = _smooth(self.value, self.stage1, self.f_c2, self.dt)
        return self.value


def estimate_ydot(samples, dt, f_c=None):
    """Flow derivative for every sample of a history (rows are time)."""
    samples = np.atleast_1d(np.asarray(samples, dtype=float))
    est = DerivativeEstimator(dt, f_c)
    return np.array([est(s)[1] for s in samples])


def _commit(state: ControllerState, u_new, limits: ActuatorLimits, mode: Mode):
    if mode is Mode.VERTICAL_ONLY:
        u_new = np.array([0.0, 0.0, u_new[2]])
    sat, hit = limits.saturate(u_new)
    state.du = sat - state.u_prev
    state.u_prev = sat
    return ControlInput.from_array(sat), hit


def _error(nu, ydot, mode: Mode):
    e = np.asarray(nu, dtype=float) - np.asarray(ydot, dtype=float)
    return e[2:] if mode is Mode.VERTICAL_ONLY else e


def _expand(delta, mode: Mode):
    if mode is Mode.VERTICAL_ONLY:
        return np.array([0.0, 0.0, float(delta[0])])
    return delta


def control_step_direct(nu, ydot, Ginv, state: ControllerState,
                        limits: ActuatorLimits = ActuatorLimits()):
    """``u = sat(u_prev + G_inv (nu - ydot))``; returns ``(u, saturated)``."""
    Ginv = np.atleast_2d(np.asarray(Ginv, dtype=float))
    delta = _expand(Ginv @ _error(nu, ydot, state.mode), state.mode)
    return _commit(state, state.u_prev + delta, limits, state.mode)


def control_step_conventional(nu, ydot, G, state: ControllerState,
                              limits: ActuatorLimits = ActuatorLimits(), cond_max=DEFAULT_COND_MAX):
    """Invert ``G`` and apply the increment; holds ``u_prev`` when inversion fails.

    Returns ``(u, saturated, held)``.
    """
    try:
        Ginv = invert(np.atleast_2d(G), cond_max)
    except IllConditioned:
        state.du = np.zeros(3)
        state.last_inverse = None
        return ControlInput.from_array(state.u_prev), False, True
    state.last_inverse = Ginv
    u, hit = control_step_direct(nu, ydot, Ginv, state, limits)
    return u, hit, False


def height_guard(height, guard: GuardConfig, phase: FlightPhase = FlightPhase.ACTIVE, flow_z=None):
    """Latched shutdown once the height reaches the guard (inclusive).

    When ``height`` is None the measured divergence magnitude is compared to
    ``guard.touchdown_flow`` instead, if configured.
    """
    if phase is FlightPhase.SHUTDOWN:
        return FlightPhase.SHUTDOWN
    if height is not None:
        return FlightPhase.SHUTDOWN if height <= guard.min_height else FlightPhase.ACTIVE
    if flow_z is not None and guard.touchdown_flow is not None and abs(flow_z) >= guard.touchdown_flow:
        return FlightPhase.SHUTDOWN
    return FlightPhase.ACTIVE


@dataclass
class TickOutput:
    command: ControlInput
    nu: np.ndarray
    ydot: np.ndarray
    y_filtered: np.ndarray
    du: np.ndarray
    g_diag: np.ndarray
    ginv_diag: np.ndarray
    saturated: bool
    held: bool
    skipped: bool


def _diag3(M, mode: Mode):
    out = np.full(3, np.nan)
    if M is None:
        return out
    if mode is Mode.VERTICAL_ONLY:
        out[2] = M[0, 0]
    else:
        out[:] = np.diagonal(M)
    return out


class IndiController:
    """Stateful per-run controller wiring filters, estimator and increment law.

    With ``synchronize`` (default) the increment base ``u_prev`` is reset every
    tick to the filtered, lag-modelled input history, and the estimator is fed
    increments of that same signal; otherwise the base is the last command and
    last tick's command increment is paired with the current ``ydot`` change.
    """

    def __init__(self, method: Method, mode: Mode, gains: GainConfig, limits: ActuatorLimits,
                 dt, u0, estimator: RlsEstimatorState | None = None, f_c=None, f_c2=None,
                 cond_max=DEFAULT_COND_MAX, physical: PhysicalParams = PhysicalParams(),
                 sensor: SensorParams = SensorParams(), synchronize=True, tau=(0.05, 0.05, 0.02),
                 excitation: ExcitationConfig | None = None):
        self.method = Method(method)
        self.mode = Mode(mode)
        self.gains = gains
        self.limits = limits
        self.dt = dt
        self.cond_max = cond_max
        self.physical = physical
        self.sensor = sensor
        u0 = np.asarray(u0, dtype=float).copy()
        self.state = ControllerState(self.method, self.mode, u_prev=u0.copy())
        self.derivative = DerivativeEstimator(dt, f_c, f_c2)
        self.sync = InputSynchronizer(u0, dt, tau, f_c, f_c2) if synchronize else None
        self.excitation = excitation if excitation is not None and excitation.active else None
        # the probing signal is tracked separately so it does not accumulate in the base
        self.sync_probe = InputSynchronizer(np.zeros(3), dt, tau, f_c, f_c2)
        self.command = u0.copy()
        self.probe = np.zeros(3)
        self.u_ref = u0.copy()
        self.probe_ref = np.zeros(3)
        self.probe_step = np.zeros(3)
        self.estimator = estimator
        if self.method is not Method.ANALYTIC_ORACLE and estimator is None:
            raise ConfigInvalid("data-driven methods need an estimator", "estimator")

    @classmethod
    def from_config(cls, method, mode, gains, limits, dt, u0, est_cfg: EstimatorConfig,
                    true_G0, physical=PhysicalParams(), sensor=SensorParams(), **kwargs):
        method, mode = Method(method), Mode(mode)
        estimator = None
        if method is not Method.ANALYTIC_ORACLE:
            emode = "G" if method is Method.CONVENTIONAL_G else "Ginv"
            theta0 = initial_estimate(est_cfg, emode, true_G0, mode is Mode.VERTICAL_ONLY)
            estimator = RlsEstimatorState.create(
                theta0, est_cfg.gamma_for(emode), emode, est_cfg.p0, est_cfg.diagonal,
                est_cfg.eps_reg, est_cfg.trace_factor)
        return cls(method, mode, gains, limits, dt, u0, estimator, cond_max=est_cfg.cond_max,
                   physical=physical, sensor=sensor, **kwargs)

    def _reduce(self, v):
        return v[2:] if self.mode is Mode.VERTICAL_ONLY else v

    def step(self, y_meas, truth: tuple[RelativeState, ControlInput] | None = None) -> TickOutput:
        """Run one control tick on the raw measured flow.

        ``truth`` (relative state, applied input) is only consulted by the
        analytic oracle method.
        """
        st = self.state
        y_f, ydot = self.derivative(y_meas)
        st.y_filtered = y_f
        st.ydot_prev, st.ydot = st.ydot, ydot
        st.samples += 1

        if self.sync is not None:
            ref_prev, probe_prev = self.u_ref, self.probe_ref
            self.u_ref = self.sync(self.command)
            if self.excitation is not None:
                self.probe_ref = self.sync_probe(self.probe)
            du_data = (self.u_ref - ref_prev) + (self.probe_ref - probe_prev)
            st.u_prev = self.u_ref
        else:
            du_data = st.du + self.probe_step

        skipped = False
        if self.estimator is not None and st.samples >= 3:
            reg, resp = increments(self.estimator.mode, self._reduce(du_data),
                                   self._reduce(st.ydot - st.ydot_prev))
            skipped = self.estimator.update(reg, resp)

        nu = virtual_input(y_f, ydot, st, self.gains, self.dt)

        G = Gi = None
        held = False
        if self.method is Method.DIRECT_GINV:
            Gi = self.estimator.theta
            u, hit = control_step_direct(nu, ydot, Gi, st, self.limits)
        elif self.method is Method.CONVENTIONAL_G:
            G = self.estimator.theta
            u, hit, held = control_step_conventional(nu, ydot, G, st, self.limits, self.cond_max)
        else:
            x, u_applied = truth
            G = analytic_G(x, u_applied, self.physical, self.sensor)
            if self.mode is Mode.VERTICAL_ONLY:
                G = G[2:, 2:]
            u, hit, held = control_step_conventional(nu, ydot, G, st, self.limits, self.cond_max)
            Gi = st.last_inverse
        if self.method is Method.CONVENTIONAL_G:
            Gi = st.last_inverse
        self.command = st.u_prev.copy()
        if self.excitation is not None:
            base = self.command
            probe = self.excitation(st.samples * self.dt)
            if self.mode is Mode.VERTICAL_ONLY:
                probe[:2] = 0.0
            sat, hit_p = self.limits.saturate(base + probe)
            self.probe_step = (sat - base) - self.probe
            self.probe = sat - base
            u, hit = ControlInput.from_array(sat), hit or hit_p
        return TickOutput(u, nu, ydot, y_f, st.du.copy(), _diag3(G, self.mode),
                          _diag3(Gi, self.mode), hit, held, skipped)
