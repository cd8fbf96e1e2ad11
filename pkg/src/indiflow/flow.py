"""Optical-flow observables: analytic ground truth and a synthetic camera path.

The synthetic path projects platform-fixed features through a downward pinhole
camera and recovers the flow with the pairwise size-divergence estimator and
the mean feature displacement, as an onboard vision module would.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .dynamics import Attitude, RelativeState
from .errors import ConfigInvalid, DegenerateHeight, DegeneratePair, InsufficientFeatures

FLIGHT_NOISE = (0.02, 0.02, 0.05)


@dataclass(frozen=True)
class SensorParams:
    c: tuple = (1.0, 1.0, 1.0)
    noise: tuple = (0.0, 0.0, 0.0)
    cutoff_hz: float = 5.0
    sample_dt: float = 0.01
    min_height: float = 1e-6

    def validate(self):
        if len(self.c) != 3 or not self.c[2] > 0:
            raise ConfigInvalid("c_z must be a positive constant", "sensor.c")
        if len(self.noise) != 3 or min(self.noise) < 0:
            raise ConfigInvalid("noise std must be non-negative", "sensor.noise")
        if not self.cutoff_hz > 0:
            raise ConfigInvalid("cutoff must be positive", "sensor.cutoff_hz")
        if not self.sample_dt > 0:
            raise ConfigInvalid("sample interval must be positive", "sensor.sample_dt")
        return self


@dataclass(frozen=True)
class FlowObservation:
    flow: np.ndarray
    timestamp: float = 0.0
    valid: bool = True

    @property
    def x(self):
        return float(self.flow[0])

    @property
    def y(self):
        return float(self.flow[1])

    @property
    def z(self):
        return float(self.flow[2])


def analytic_flow(x: RelativeState, params: SensorParams = SensorParams(), timestamp=0.0) -> FlowObservation:
    """Flow as the ratio of relative velocity to height, scaled per axis by ``c``."""
    if not x.height > params.min_height:
        raise DegenerateHeight(f"relative height {x.height} at or below guard {params.min_height}")
    v = np.array([x.vx, x.vy, x.vz])
    return FlowObservation(np.asarray(params.c, dtype=float) * v / x.height, timestamp, True)


def add_noise(y: FlowObservation, sigma, rng=None) -> FlowObservation:
    """Additive zero-mean Gaussian noise per channel.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    if not np.any(sigma):
        return y
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return FlowObservation(y.flow + rng.normal(0.0, 1.0, 3) * sigma, y.timestamp, y.valid)


def low_pass(previous_filtered, raw, f_c, dt):
    """Single-pole smoothing with ``alpha = dt / (dt + 1 / (2 pi f_c))``."""
    if not f_c > 0:
        raise ValueError("cutoff must be positive")
    alpha = dt / (dt + 1.0 / (2.0 * math.pi * f_c))
    return previous_filtered + alpha * (raw - previous_filtered)


class LowPassFilter:
    """Stateful ``low_pass``; the first sample passes through unchanged."""

    def __init__(self, f_c, dt):
        self.f_c = f_c
        self.dt = dt
        self.value = None

    def __call__(self, raw):
        raw = np.asarray(raw, dtype=float)
        if self.value is None:
            self.value = raw.copy()
        else:
            self.value = low_pass(self.value, raw, self.f_c, self.dt)
        return self.value


# -- synthetic camera ---------------------------------------------------------

@dataclass(frozen=True)
class FeatureFrame:
    points: np.ndarray  # (n, 2) normalized image coordinates
    ids: np.ndarray  # (n,) int64, unique
    timestamp: float = 0.0

    def __post_init__(self):
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("feature ids must be unique within a frame")

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class PinholeCamera:
    """Downward camera aligned with the body frame.

    Without an explicit ``layout`` the platform carries an infinite multi-scale
    grid texture (spacings ``grid_spacing / 2**j``); only levels whose spacing
    suits the current footprint are projected, so features stay available all
    the way down to touchdown.
    """

    focal: float = 1.0
    half_fov: float = 0.6
    grid_spacing: float = 4.0
    levels: int = 14
    min_per_axis: int = 2
    max_per_axis: int = 16
    layout: tuple | None = field(default=None)

    def validate(self):
        if not self.focal > 0:
            raise ConfigInvalid("focal length must be positive", "sensor.camera.focal")
        if not self.half_fov > 0:
            raise ConfigInvalid("field of view must be positive", "sensor.camera.half_fov")
        return self


def _encode_id(level, i, j):
    return (int(level) << 42) | ((int(i) & 0x1FFFFF) << 21) | (int(j) & 0x1FFFFF)


def _grid_features(camera: PinholeCamera, center_xy, height):
    """Platform-frame feature coordinates and ids around ``center_xy``."""
    reach = 1.5 * height * camera.half_fov / camera.focal
    pts, ids = [], []
    for level in range(camera.levels):
        s = camera.grid_spacing / 2.0 ** level
        per_axis = 2.0 * reach / s
        if per_axis < camera.min_per_axis:
            continue
        if per_axis > camera.max_per_axis:
            break
        i0, i1 = math.floor((center_xy[0] - reach) / s), math.ceil((center_xy[0] + reach) / s)
        j0, j1 = math.floor((center_xy[1] - reach) / s), math.ceil((center_xy[1] + reach) / s)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                pts.append((i * s, j * s))
                ids.append(_encode_id(level, i, j))
    return np.array(pts, dtype=float).reshape(-1, 2), np.array(ids, dtype=np.int64)


def _body_from_inertial(attitude: Attitude):
    cp, sp = math.cos(attitude.pitch), math.sin(attitude.pitch)
    cr, sr = math.cos(attitude.roll), math.sin(attitude.roll)
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return (ry @ rx).T


def project_features(camera: PinholeCamera, x: RelativeState, attitude: Attitude = Attitude(),
                     offset_xy=(0.0, 0.0), timestamp=0.0) -> FeatureFrame:
    """Project platform features into normalized image coordinates.

    ``offset_xy`` is the MAV's horizontal position in the platform frame.
    Features behind the camera or outside ``half_fov`` are dropped.
    """
    if not x.height > 0:
        raise DegenerateHeight(f"relative height {x.height} <= 0")
    if camera.layout is not None:
        plat = np.asarray(camera.layout, dtype=float).reshape(-1, 2)
        ids = np.arange(len(plat), dtype=np.int64)
    else:
        plat, ids = _grid_features(camera, offset_xy, x.height)
    rel = np.column_stack([plat[:, 0] - offset_xy[0], plat[:, 1] - offset_xy[1],
                           np.full(len(plat), -x.height)])
    body = rel @ _body_from_inertial(attitude).T
    depth = -body[:, 2]
    front = depth > 1e-12
    mu = np.full((len(plat), 2), np.inf)
    mu[front] = camera.focal * body[front, :2] / depth[front, None]
    keep = front & (np.abs(mu[:, 0]) <= camera.half_fov) & (np.abs(mu[:, 1]) <= camera.half_fov)
    return FeatureFrame(mu[keep], ids[keep], timestamp)


def _match(prev: FeatureFrame, curr: FeatureFrame):
    common, ip, ic = np.intersect1d(prev.ids, curr.ids, assume_unique=True, return_indices=True)
    return prev.points[ip], curr.points[ic]


@lru_cache(maxsize=64)
def _pair_table(n, cap):
    i, j = np.triu_indices(n, 1)
    total = len(i)
    if total > cap:
        stride = -(-total // cap)
        i, j = i[::stride], j[::stride]
    return np.ascontiguousarray(np.column_stack([i, j]).astype(np.int64))


def estimate_divergence(prev: FeatureFrame, curr: FeatureFrame, dt, max_pairs=200, eps=1e-9):
    """Mean relative change of pairwise image distances per second.

    Positive when features contract (receding), negative when they spread
    (approaching the surface).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    p, c = _match(prev, curr)
    if len(p) < 2:
        raise InsufficientFeatures(f"{len(p)} matched features, need at least 2")
    pairs = _pair_table(len(p), max_pairs)
    value, used = kernels.pair_divergence(p, c, pairs, float(dt), float(eps))
    if used == 0:
        raise DegeneratePair("all feature pairs have near-zero image distance")
    return float(value)


def estimate_lateral_flow(prev: FeatureFrame, curr: FeatureFrame, dt):
    """Mean feature image velocity, sign-flipped to match ``v / height``.

    Features stream opposite to the camera's motion, so forward motion yields
    negative image displacement and positive lateral flow.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    p, c = _match(prev, curr)
    if len(p) < 1:
        raise InsufficientFeatures("no matched features")
    rate = -(c - p).mean(axis=0) / dt
    return float(rate[0]), float(rate[1])


def dump_frames_csv(frames, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "feature_id", "mu_x", "mu_y"])
        for fr in frames:
            for fid, (mx, my) in zip(fr.ids, fr.points):
                w.writerow([repr(float(fr.timestamp)), int(fid), repr(float(mx)), repr(float(my))])


class FlowSensor:
    """Per-run measurement pipeline producing raw (unfiltered) flow readings."""

    def __init__(self, params: SensorParams, rng: np.random.Generator, source="analytic",
                 camera: PinholeCamera | None = None):
        self.params = params
        self.rng = rng
        self.source = source
        self.camera = camera or PinholeCamera()
        self._prev_frame = None
        self.frames = []
        self.keep_frames = False

    def measure(self, x: RelativeState, attitude: Attitude, offset_xy, t):
        truth = analytic_flow(x, self.params, t)
        if self.source == "analytic":
            meas = truth
        else:
            frame = project_features(self.camera, x, attitude, offset_xy, t)
            if self.keep_frames:
                self.frames.append(frame)
            prev, self._prev_frame = self._prev_frame, frame
            if prev is None:
                meas = FlowObservation(np.zeros(3), t, False)
            else:
                dt = t - prev.timestamp
                try:
                    fx, fy = estimate_lateral_flow(prev, frame, dt)
                    fz = estimate_divergence(prev, frame, dt)
                    meas = FlowObservation(np.array([fx, fy, fz]), t, True)
                except (InsufficientFeatures, DegeneratePair):
                    meas = FlowObservation(np.zeros(3), t, False)
        return truth, add_noise(meas, self.params.noise, self.rng)
