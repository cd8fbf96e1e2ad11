"""Scenario orchestration: wiring, rates, logging and timing.

Physics runs at ``physics_hz`` with RK4; the controller runs at
``control_hz`` and its command is held between ticks. Only the controller
tick (estimation + control law) is timed.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .controller import ExcitationConfig, FlightPhase, GainConfig, GuardConfig, IndiController, Method, Mode, height_guard
from .dynamics import (
    ActuatorLimits, ControlInput, InnerLoop, PhysicalParams, Sinusoidal3D, Static, UndulatingTerrain,
    hover_state, integrate_step, validate_motion,
)
from .effectiveness import EstimatorConfig, analytic_G
from .errors import ConfigInvalid, DegenerateHeight
from .flow import FLIGHT_NOISE, FlowSensor, PinholeCamera, SensorParams

SCHEMA_VERSION = 1

LOG_COLUMNS = (
    "t,dx,dy,dz,vx,vy,vz,drx,dry,drz,vrx,vry,vrz,theta,phi,thrust,flow_x,flow_y,flow_z,"
    "flow_meas_x,flow_meas_y,flow_meas_z,nu_x,nu_y,nu_z,du_theta,du_phi,du_T,g11,g22,g33,"
    "gi11,gi22,gi33,sat_flag,hold_flag,skip_flag,phase"
).split(",")

MAX_HEIGHT = 100.0
MAX_SPEED = 50.0


@dataclass
class PlatformConfig:
    kind: str = "static"  # static | sinusoidal | terrain
    position: tuple = (0.0, 0.0, 0.0)
    amplitude: tuple = (0.5, 0.5, 0.2)
    omega: tuple = (0.3, 0.4, 0.5)
    phase: tuple = (0.0, 0.0, 0.0)
    base_height: float = 0.0
    bump_amplitude: float = 0.05
    wavelength: float = 3.0

    def motion(self):
        if self.kind == "static":
            m = Static(tuple(self.position))
        elif self.kind == "sinusoidal":
            m = Sinusoidal3D(tuple(self.amplitude), tuple(self.omega), tuple(self.phase),
                             tuple(self.position))
        elif self.kind == "terrain":
            m = UndulatingTerrain(self.base_height, self.bump_amplitude, self.wavelength)
        else:
            raise ConfigInvalid(f"unknown platform kind {self.kind!r}", "platform.kind")
        return validate_motion(m)


@dataclass
class CameraConfig:
    focal: float = 1.0
    half_fov: float = 0.6
    grid_spacing: float = 4.0


@dataclass
class SensingConfig:
    source: str = "analytic"  # analytic | features
    c: tuple = (1.0, 1.0, 1.0)
    noise: tuple = (0.0, 0.0, 0.0)
    cutoff_hz: float = 5.0
    camera: CameraConfig = field(default_factory=CameraConfig)

    def params(self, dt):
        return SensorParams(tuple(self.c), tuple(self.noise), self.cutoff_hz, dt).validate()


@dataclass
class ControlConfig:
    method: str = Method.DIRECT_GINV.value
    mode: str = Mode.FULL_3AXIS.value
    derivative_cutoff_hz: float | None = None  # optional second stage on the flow derivative
    synchronize: bool = True
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)


@dataclass
class InitialConfig:
    height: float = 3.0
    position_xy: tuple = (0.0, 0.0)
    match_platform_velocity: bool = True


@dataclass
class LimitsConfig:
    max_pitch: float = 0.35
    max_roll: float = 0.35
    max_thrust: float | None = None  # None: twice hover thrust


@dataclass
class ScenarioConfig:
    name: str = "custom"
    physical: PhysicalParams = field(default_factory=PhysicalParams)
    sensor: SensingConfig = field(default_factory=SensingConfig)
    gains: GainConfig = field(default_factory=GainConfig)
    guard: GuardConfig = field(default_factory=GuardConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    platform: PlatformConfig = field(default_factory=PlatformConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    limits: LimitsConfig = field(default_factory=LimitsConfig)
    inner: InnerLoop = field(default_factory=InnerLoop)
    physics_hz: float = 1000.0
    control_hz: float = 100.0
    duration: float = 60.0
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        if not self.duration > 0:
            raise ConfigInvalid("duration must be positive", "duration")
        if not (self.control_hz > 0 and self.physics_hz >= self.control_hz):
            raise ConfigInvalid("physics rate must be at least the control rate", "physics_hz")
        ratio = self.physics_hz / self.control_hz
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigInvalid("physics rate must be an integer multiple of the control rate",
                                "physics_hz")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigInvalid(f"unsupported schema_version {self.schema_version}",
                                "schema_version")
        try:
            Method(self.control.method)
        except ValueError:
            raise ConfigInvalid(f"unknown method {self.control.method!r}", "control.method") from None
        try:
            Mode(self.control.mode)
        except ValueError:
            raise ConfigInvalid(f"unknown mode {self.control.mode!r}", "control.mode") from None
        if self.sensor.source not in ("analytic", "features"):
            raise ConfigInvalid(f"unknown sensing source {self.sensor.source!r}", "sensor.source")
        if not self.initial.height > 0:
            raise ConfigInvalid("initial height must be positive", "initial.height")
        if self.inner.tau_attitude <= 0 or self.inner.tau_thrust <= 0:
            raise ConfigInvalid("inner-loop time constants must be positive", "inner")
        self.physical.validate()
        self.sensor.params(1.0 / self.control_hz)
        self.gains.validate()
        self.guard.validate()
        self.control.excitation.validate()
        self.estimator.validate()
        self.platform.motion()
        return self

    @property
    def substeps(self):
        return int(round(self.physics_hz / self.control_hz))

    def actuator_limits(self):
        tmax = self.limits.max_thrust
        if tmax is None:
            tmax = 2.0 * self.physical.hover_thrust
        return ActuatorLimits(self.limits.max_pitch, self.limits.max_roll, tmax)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class SimLog:
    """Per-tick rows in ``LOG_COLUMNS`` order plus run metadata."""

    def __init__(self, rows=None, meta=None):
        self.rows = rows if rows is not None else []
        self.meta = meta if meta is not None else {}
        self._cols = None

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        if self._cols is None or len(self._cols[LOG_COLUMNS[0]]) != len(self.rows):
            self._build()
        return self._cols[name]

    def _build(self):
        cols = {}
        for k, name in enumerate(LOG_COLUMNS):
            vals = [r[k] for r in self.rows]
            cols[name] = np.array(vals, dtype=object if name == "phase" else float)
        self._cols = cols

    def to_csv_text(self):
        lines = [",".join(LOG_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in r))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def read_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header != LOG_COLUMNS:
                raise ValueError(f"{path}: unexpected log header")
            rows = []
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) != len(LOG_COLUMNS):
                    continue
                rows.append(tuple(float(p) for p in parts[:-1]) + (parts[-1],))
        return cls(rows)


@dataclass
class RunMetrics:
    method: str
    termination: str
    ticks: int
    duration: float
    touchdown: bool
    touchdown_time: float | None
    touchdown_rel_vz: float | None
    rmse_x: float | None
    rmse_y: float | None
    rmse_z: float | None
    decay_rate: float | None
    decay_r2: float | None
    wall_median_s: float
    wall_p95_s: float
    sat_count: int
    hold_count: int
    skip_count: int
    seed: int
    config_hash: str

    def to_dict(self):
        return dataclasses.asdict(self)


def _true_G0(cfg: ScenarioConfig, state):
    sensor = cfg.sensor.params(1.0 / cfg.control_hz)
    u = ControlInput(state.attitude.pitch, state.attitude.roll, state.thrust)
    return analytic_G(state.relative(), u, cfg.physical, sensor)


def run_scenario(cfg: ScenarioConfig, collect_frames=False):
    """Simulate one scenario; returns ``(SimLog, RunMetrics)``.

    Runs until the duration elapses, the height guard latches, or the state
    leaves the divergence bounds (``termination == "divergence"``).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    dt = 1.0 / cfg.control_hz
    sensor_params = cfg.sensor.params(dt)
    motion = cfg.platform.motion()
    limits = cfg.actuator_limits()
    method = Method(cfg.control.method)
    mode = Mode(cfg.control.mode)

    state = hover_state(cfg.physical, cfg.initial.height, motion, tuple(cfg.initial.position_xy),
                        cfg.initial.match_platform_velocity)
    cam = cfg.sensor.camera
    sensor = FlowSensor(sensor_params, rng, cfg.sensor.source,
                        PinholeCamera(cam.focal, cam.half_fov, cam.grid_spacing).validate())
    sensor.keep_frames = collect_frames
    ctrl = IndiController.from_config(
        method, mode, cfg.gains, limits, dt, state.actuator, cfg.estimator, _true_G0(cfg, state),
        cfg.physical, sensor_params, f_c=cfg.sensor.cutoff_hz, f_c2=cfg.control.derivative_cutoff_hz,
        synchronize=cfg.control.synchronize, excitation=cfg.control.excitation,
        tau=(cfg.inner.tau_attitude, cfg.inner.tau_attitude, cfg.inner.tau_thrust))

    n_ticks = int(round(cfg.duration * cfg.control_hz))
    rows = []
    walls = []
    phase = FlightPhase.ACTIVE
    termination = "duration"
    perf = time.perf_counter_ns
    for k in range(n_ticks):
        t = k * dt
        x = state.relative()
        phase = height_guard(x.height, cfg.guard, phase)
        offset = state.position[:2] - state.platform_position[:2]
        truth, meas = sensor.measure(x, state.attitude, offset, t)
        if phase is FlightPhase.SHUTDOWN:
            rows.append(_row(t, state, truth.flow, meas.flow, np.full(3, np.nan), np.zeros(3),
                             np.full(3, np.nan), np.full(3, np.nan), False, False, False, phase))
            termination = "shutdown"
            break
        u_applied = ControlInput(state.attitude.pitch, state.attitude.roll, state.thrust)
        t0 = perf()
        out = ctrl.step(meas.flow, (x, u_applied))
        walls.append(perf() - t0)
        rows.append(_row(t, state, truth.flow, meas.flow, out.nu, out.du, out.g_diag,
                         out.ginv_diag, out.saturated, out.held, out.skipped, phase))
        try:
            state = integrate_step(state, out.command, dt, cfg.physical, motion, cfg.inner, limits,
                                   cfg.substeps)
        except DegenerateHeight:
            termination = "impact"
            break
        if abs(state.relative().height) > MAX_HEIGHT or np.max(np.abs(state.velocity)) > MAX_SPEED \
                or not np.all(np.isfinite(state.velocity)):
            termination = "divergence"
            break

    log = SimLog(rows, {
        "config_hash": cfg.digest(), "seed": cfg.seed, "method": method.value,
        "termination": termination, "name": cfg.name,
    })
    if collect_frames:
        log.frames = sensor.frames
    metrics = compute_metrics(log, cfg, np.array(walls, dtype=float) * 1e-9)
    return log, metrics


def _row(t, s, flow, meas, nu, du, g, gi, sat, hold, skip, phase):
    return (
        t, *s.position, *s.velocity, *s.platform_position, *s.platform_velocity,
        s.attitude.pitch, s.attitude.roll, s.thrust, *flow, *meas, *nu, *du, *g, *gi,
        float(sat), float(hold), float(skip), phase.value,
    )


def compute_metrics(log: SimLog, cfg: ScenarioConfig, walls=np.array([])):
    touchdown = log.meta.get("termination") == "shutdown"
    td_t = td_v = None
    if touchdown:
        td_t, td_v = analysis.touchdown_metrics(log)
    rmse = [None, None, None]
    t = log.column("t") if len(log) else np.array([])
    if len(log) and t[-1] > 5.0:
        try:
            rmse = [float(v) for v in analysis.tracking_rmse(log, cfg.gains.setpoint, (5.0, None))]
        except Exception:  # noqa: BLE001 - metrics are best effort for short or failed runs
            pass
    rate = r2 = None
    if len(log):
        try:
            fit = analysis.fit_exponential_log(log, cfg.guard.min_height)
            rate, r2 = fit.rate, fit.r2
        except Exception:  # noqa: BLE001
            pass
    flags = {n: int(np.nansum(log.column(n))) if len(log) else 0
             for n in ("sat_flag", "hold_flag", "skip_flag")}
    return RunMetrics(
        method=cfg.control.method, termination=log.meta.get("termination", "unknown"),
        ticks=len(log), duration=float(t[-1]) if len(log) else 0.0, touchdown=touchdown,
        touchdown_time=td_t, touchdown_rel_vz=td_v, rmse_x=rmse[0], rmse_y=rmse[1], rmse_z=rmse[2],
        decay_rate=rate, decay_r2=r2,
        wall_median_s=float(np.median(walls)) if len(walls) else 0.0,
        wall_p95_s=float(np.percentile(walls, 95)) if len(walls) else 0.0,
        sat_count=flags["sat_flag"], hold_count=flags["hold_flag"], skip_count=flags["skip_flag"],
        seed=cfg.seed, config_hash=cfg.digest(),
    )


# -- presets ------------------------------------------------------------------

# noiseless runs need a small probing signal to keep the increments informative
PROBE = ExcitationConfig(amplitude=(0.003, 0.003, 0.08))


def _flight_estimator():
    # under flight-like noise the per-tick flow-derivative increments are mostly noise;
    # a small prior covariance and long memory keep the estimate from collapsing
    return EstimatorConfig(p0=3e-3, gamma=0.999)


def _moving_platform(method):
    return ScenarioConfig(
        name=f"sim-moving-platform-{'G' if method is Method.CONVENTIONAL_G else 'Ginv'}",
        control=ControlConfig(method=method.value, excitation=PROBE),
        platform=PlatformConfig(kind="sinusoidal"),
        gains=GainConfig(setpoint_z=-0.1),
        duration=50.0,
    )


def _land_static(rate):
    return ScenarioConfig(
        name=f"land-static-{rate}",
        control=ControlConfig(method=Method.DIRECT_GINV.value, mode=Mode.VERTICAL_ONLY.value),
        sensor=SensingConfig(noise=FLIGHT_NOISE),
        estimator=_flight_estimator(),
        gains=GainConfig(setpoint_z=-rate),
        duration=60.0,
    )


def scenario_library():
    """Named preset configurations (fresh objects on every call)."""
    lateral = PlatformConfig(kind="sinusoidal", amplitude=(0.5, 0.5, 0.0), omega=(0.3, 0.4, 0.0))
    presets = [
        _moving_platform(Method.CONVENTIONAL_G),
        _moving_platform(Method.DIRECT_GINV),
        _land_static(0.1),
        _land_static(0.2),
        _land_static(0.3),
        ScenarioConfig(name="hover-lateral", platform=lateral, sensor=SensingConfig(noise=FLIGHT_NOISE),
                       estimator=_flight_estimator(), gains=GainConfig(setpoint_z=0.0), duration=30.0),
        ScenarioConfig(name="land-lateral", platform=dataclasses.replace(lateral),
                       sensor=SensingConfig(noise=FLIGHT_NOISE), estimator=_flight_estimator(),
                       gains=GainConfig(setpoint_z=-0.1),
                       duration=60.0),
        ScenarioConfig(name="land-undulating", platform=PlatformConfig(kind="terrain"),
                       sensor=SensingConfig(noise=FLIGHT_NOISE), estimator=_flight_estimator(),
                       gains=GainConfig(setpoint_y=-0.8, setpoint_z=-0.1), duration=60.0),
    ]
    return {p.name: p for p in presets}


def preset(name) -> ScenarioConfig:
    lib = scenario_library()
    if name not in lib:
        raise ConfigInvalid(f"unknown preset {name!r}; choose from {sorted(lib)}", "preset")
    return lib[name]


# -- batch operations ---------------------------------------------------------

def with_method(cfg: ScenarioConfig, method) -> ScenarioConfig:
    new = dataclasses.replace(cfg, control=dataclasses.replace(cfg.control, method=Method(method).value))
    return new


def compare_methods(cfg: ScenarioConfig, repetitions=20, arms=(Method.CONVENTIONAL_G, Method.DIRECT_GINV)):
    """Run two method arms on identical config and seed, interleaving repetitions.

    Metrics come from the first repetition of each arm (runs are deterministic);
    the reported wall time is the median over repetitions of each run's
    per-step median.
    """
    cfg.validate()
    if repetitions < 1:
        raise ConfigInvalid("repetitions must be >= 1", "reps")
    arm_cfgs = [with_method(cfg, m) for m in arms]
    first = [None, None]
    medians = [[], []]
    for rep in range(repetitions):
        order = (0, 1) if rep % 2 == 0 else (1, 0)
        for i in order:
            log, met = run_scenario(arm_cfgs[i])
            if first[i] is None:
                first[i] = (log, met)
            medians[i].append(met.wall_median_s)
    a, b = first[0][1], first[1][1]
    a.wall_median_s = float(np.median(medians[0]))
    b.wall_median_s = float(np.median(medians[1]))
    return {
        "arms": [m.value for m in map(Method, arms)],
        "metrics": (a, b),
        "logs": (first[0][0], first[1][0]),
        "deltas": analysis.metric_deltas(a, b),
        "wall_ratio": (b.wall_median_s / a.wall_median_s) if a.wall_median_s > 0 else None,
        "repetitions": repetitions,
        "rep_medians": medians,
    }


def set_path(cfg: ScenarioConfig, path, value) -> ScenarioConfig:
    """Return a copy of ``cfg`` with the dotted field ``path`` replaced."""
    from .config import apply_overrides

    return apply_overrides(cfg, {path: value})


def sweep_variants(cfg: ScenarioConfig, path, values):
    """Configs for a sweep; variant ``i`` uses seed ``cfg.seed + i``."""
    return [dataclasses.replace(set_path(cfg, path, v), seed=cfg.seed + i)
            for i, v in enumerate(values)]


def sweep(cfg: ScenarioConfig, path, values):
    """One run per value; seeds offset by the value's index."""
    return [run_scenario(v)[1] for v in sweep_variants(cfg, path, values)]
