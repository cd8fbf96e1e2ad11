"""Translational MAV dynamics, first-order inner loop and platform motion.

Axes are inertial North-East-Up. Thrust acts along body +Z, yaw is frozen at
zero, and aerodynamic forces are modelled as linear drag ``-k * v``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import kernels
from .errors import ConfigInvalid, DegenerateHeight


@dataclass(frozen=True)
class PhysicalParams:
    mass: float = 1.2
    gravity: float = 9.81
    drag: tuple = (0.0, 0.0, 0.0)

    def validate(self):
        if not self.mass > 0:
            raise ConfigInvalid("mass must be positive", "physical.mass")
        if not self.gravity > 0:
            raise ConfigInvalid("gravity must be positive", "physical.gravity")
        if len(self.drag) != 3 or min(self.drag) < 0:
            raise ConfigInvalid("drag must be three non-negative coefficients", "physical.drag")
        return self

    @property
    def hover_thrust(self):
        return self.mass * self.gravity


@dataclass(frozen=True)
class Attitude:
    pitch: float = 0.0
    roll: float = 0.0
    yaw: float = 0.0


@dataclass(frozen=True)
class ControlInput:
    """Outer-loop input ``u = [pitch, roll, thrust]``."""

    pitch: float = 0.0
    roll: float = 0.0
    thrust: float = 0.0

    def as_array(self):
        return np.array([self.pitch, self.roll, self.thrust], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ActuatorLimits:
    max_pitch: float = 0.35
    max_roll: float = 0.35
    max_thrust: float = 2 * 1.2 * 9.81

    def as_array(self):
        return np.array([self.max_pitch, self.max_roll, self.max_thrust], dtype=float)

    def saturate(self, u):
        """Clip a ``[pitch, roll, thrust]`` array; returns ``(clipped, hit)``."""
        lim = self.as_array()
        lo = np.array([-lim[0], -lim[1], 0.0])
        out = np.minimum(np.maximum(u, lo), lim)
        return out, bool(np.any(out != u))


@dataclass(frozen=True)
class InnerLoop:
    """First-order lag time constants of the attitude and thrust loops."""

    tau_attitude: float = 0.05
    tau_thrust: float = 0.02


@dataclass
class WorldState:
    position: np.ndarray
    velocity: np.ndarray
    attitude: Attitude
    thrust: float
    platform_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    platform_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    platform_accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0

    @property
    def actuator(self):
        return np.array([self.attitude.pitch, self.attitude.roll, self.thrust])

    def relative(self) -> RelativeState:
        return RelativeState(
            float(self.position[2] - self.platform_position[2]),
            float(self.velocity[0] - self.platform_velocity[0]),
            float(self.velocity[1] - self.platform_velocity[1]),
            float(self.velocity[2] - self.platform_velocity[2]),
        )


@dataclass(frozen=True)
class RelativeState:
    height: float
    vx: float
    vy: float
    vz: float

    def as_array(self):
        return np.array([self.height, self.vx, self.vy, self.vz])


# -- platform motion variants ------------------------------------------------

@dataclass(frozen=True)
class Static:
    position: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Sinusoidal3D:
    """Per-axis ``offset + amplitude * sin(omega * t + phase)``."""

    amplitude: tuple = (0.5, 0.5, 0.2)
    omega: tuple = (0.3, 0.4, 0.5)
    phase: tuple = (0.0, 0.0, 0.0)
    offset: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class UndulatingTerrain:
    """Static ground with height ``base + bump * sin(2 pi (x + y) / wavelength)``."""

    base_height: float = 0.0
    bump_amplitude: float = 0.05
    wavelength: float = 3.0


PlatformMotion = Union[Static, Sinusoidal3D, UndulatingTerrain]


def validate_motion(motion):
    if isinstance(motion, Sinusoidal3D):
        if min(motion.amplitude) < 0:
            raise ConfigInvalid("amplitudes must be non-negative", "platform.amplitude")
    elif isinstance(motion, UndulatingTerrain):
        if motion.bump_amplitude < 0:
            raise ConfigInvalid("bump amplitude must be non-negative", "platform.bump_amplitude")
        if not motion.wavelength > 0:
            raise ConfigInvalid("wavelength must be positive", "platform.wavelength")
    elif not isinstance(motion, Static):
        raise ConfigInvalid(f"unknown platform motion {motion!r}", "platform.kind")
    return motion


def platform_state(motion, t, mav_horizontal=(0.0, 0.0), mav_velocity=(0.0, 0.0),
                   mav_accel=(0.0, 0.0)):
    """Platform ``(position, velocity, acceleration)`` at time ``t``.

    Terrain height depends on where the MAV is, so its vertical rate comes from
    the chain rule through the MAV's horizontal velocity and acceleration.
    """
    if isinstance(motion, Static):
        return np.array(motion.position, dtype=float), np.zeros(3), np.zeros(3)
    if isinstance(motion, Sinusoidal3D):
        a = np.asarray(motion.amplitude, dtype=float)
        w = np.asarray(motion.omega, dtype=float)
        arg = w * t + np.asarray(motion.phase, dtype=float)
        pos = np.asarray(motion.offset, dtype=float) + a * np.sin(arg)
        return pos, a * w * np.cos(arg), -a * w * w * np.sin(arg)
    if isinstance(motion, UndulatingTerrain):
        k = 2.0 * math.pi / motion.wavelength
        A = motion.bump_amplitude
        s = mav_horizontal[0] + mav_horizontal[1]
        s_dot = mav_velocity[0] + mav_velocity[1]
        s_ddot = mav_accel[0] + mav_accel[1]
        h = motion.base_height + A * math.sin(k * s)
        hd = A * k * math.cos(k * s) * s_dot
        hdd = -A * k * k * math.sin(k * s) * s_dot ** 2 + A * k * math.cos(k * s) * s_ddot
        return np.array([0.0, 0.0, h]), np.array([0.0, 0.0, hd]), np.array([0.0, 0.0, hdd])
    raise ConfigInvalid(f"unknown platform motion {motion!r}", "platform.kind")


# -- derivatives --------------------------------------------------------------

def translational_derivatives(state: WorldState, params: PhysicalParams) -> np.ndarray:
    """MAV acceleration for the applied attitude and thrust."""
    return kernels.translational_accel(
        np.asarray(state.velocity, dtype=float), state.actuator,
        params.mass, params.gravity, np.asarray(params.drag, dtype=float))


def relative_derivatives(x: RelativeState, u_applied: ControlInput, params: PhysicalParams,
                         platform_accel, absolute_velocity=None) -> RelativeState:
    """Time derivative of the reduced relative state.

    Drag acts on the absolute MAV velocity; pass ``absolute_velocity`` when drag
    is non-zero and the platform moves, otherwise the relative velocity is used.
    """
    if not x.height > 0:
        raise DegenerateHeight(f"relative height {x.height} <= 0")
    v = np.array([x.vx, x.vy, x.vz]) if absolute_velocity is None else np.asarray(absolute_velocity)
    acc = kernels.translational_accel(v.astype(float), u_applied.as_array(), params.mass,
                                      params.gravity, np.asarray(params.drag, dtype=float))
    acc = acc - np.asarray(platform_accel, dtype=float)
    return RelativeState(x.vz, float(acc[0]), float(acc[1]), float(acc[2]))


def inner_loop_step(current: ControlInput, command: ControlInput, tau_att, tau_T, dt,
                    limits: ActuatorLimits | None = None) -> ControlInput:
    """One explicit step of the first-order attitude/thrust lag, clamped to limits."""
    if not dt > 0 or not tau_att > 0 or not tau_T > 0:
        raise ValueError("dt and time constants must be positive")
    lim = (limits or ActuatorLimits(np.inf, np.inf, np.inf)).as_array()
    out = kernels.lag_step(current.as_array(), command.as_array(), float(dt),
                           float(tau_att), float(tau_T), lim)
    return ControlInput.from_array(out)


def integrate_step(state: WorldState, u_cmd: ControlInput, dt, params: PhysicalParams,
                   motion: PlatformMotion = Static(), inner: InnerLoop = InnerLoop(),
                   limits: ActuatorLimits | None = None, substeps: int = 1) -> WorldState:
    """Advance ``dt`` seconds with the command held (zero-order hold).

    The interval is split into ``substeps`` RK4 steps; the inner loop is
    relaxed once per sub-step before the RK4 stage evaluations.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    lim = (limits or ActuatorLimits(np.inf, np.inf, np.inf)).as_array()
    h = float(dt) / substeps
    pos, vel, act = kernels.advance(
        np.asarray(state.position, dtype=float), np.asarray(state.velocity, dtype=float),
        state.actuator, u_cmd.as_array(), h, int(substeps), params.mass, params.gravity,
        np.asarray(params.drag, dtype=float), inner.tau_attitude, inner.tau_thrust, lim)
    t = state.time + dt
    acc = kernels.translational_accel(vel, act, params.mass, params.gravity,
                                      np.asarray(params.drag, dtype=float))
    dr, vr, ar = platform_state(motion, t, pos[:2], vel[:2], acc[:2])
    new = WorldState(pos, vel, Attitude(float(act[0]), float(act[1]), 0.0), float(act[2]),
                     dr, vr, ar, t)
    if not new.position[2] - dr[2] > 0:
        raise DegenerateHeight(f"relative height {new.position[2] - dr[2]:.6g} <= 0 at t={t:.4f}")
    return new


def hover_state(params: PhysicalParams, height=3.0, motion: PlatformMotion = Static(),
                position_xy=(0.0, 0.0), match_platform=True) -> WorldState:
    """Level state at ``height`` above the platform at t=0 with hover thrust.

    With ``match_platform`` the MAV starts at the platform's velocity, so the
    initial relative velocity (and flow) is zero.
    """
    dr, vr, ar = platform_state(motion, 0.0, position_xy)
    pos = np.array([position_xy[0], position_xy[1], dr[2] + height], dtype=float)
    vel = vr.copy() if match_platform else np.zeros(3)
    return WorldState(pos, vel, Attitude(), params.hover_thrust, dr, vr, ar, 0.0)
