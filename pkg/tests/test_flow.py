import math

import numpy as np
import pytest

import oracles
from indiflow.dynamics import Attitude, RelativeState
from indiflow.errors import DegenerateHeight, DegeneratePair, InsufficientFeatures
from indiflow.flow import (
    FeatureFrame, FlowObservation, FlowSensor, LowPassFilter, PinholeCamera, SensorParams,
    add_noise, analytic_flow, dump_frames_csv, estimate_divergence, estimate_lateral_flow,
    low_pass, project_features,
)


def test_zero_velocity_zero_flow():
    assert np.array_equal(analytic_flow(RelativeState(2.0, 0, 0, 0)).flow, np.zeros(3))


def test_flow_example(frozen):
    y = analytic_flow(RelativeState(3.0, 0, 0, -0.3))
    assert y.z == pytest.approx(frozen["flow_example_z"], abs=1e-15)


def test_flow_scale_invariance():
    a = analytic_flow(RelativeState(1.5, 0.2, -0.1, -0.3)).flow
    b = analytic_flow(RelativeState(3.0, 0.4, -0.2, -0.6)).flow
    assert np.allclose(a, b, atol=1e-15)


def test_flow_degenerate_height():
    with pytest.raises(DegenerateHeight):
        analytic_flow(RelativeState(0.0, 0, 0, 0))


def test_noise_identity_when_sigma_zero():
    y = FlowObservation(np.array([0.1, 0.2, 0.3]))
    assert add_noise(y, (0, 0, 0), 1) is y


def test_noise_reproducible_and_unbiased():
    y = FlowObservation(np.array([0.1, -0.2, 0.3]))
    a = add_noise(y, (0.02, 0.02, 0.05), 42).flow
    b = add_noise(y, (0.02, 0.02, 0.05), 42).flow
    assert np.array_equal(a, b)
    rng = np.random.default_rng(0)
    n = 100_000
    draws = np.array([add_noise(y, (0.02, 0.02, 0.05), rng).flow for _ in range(n)])
    bound = 3 * np.array([0.02, 0.02, 0.05]) / math.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0) - y.flow) <= bound)


def test_noise_rejects_negative_sigma():
    with pytest.raises(ValueError):
        add_noise(FlowObservation(np.zeros(3)), (-1, 0, 0), 0)


def test_low_pass_alpha(frozen):
    assert low_pass(0.0, 1.0, 5.0, 0.01) == pytest.approx(frozen["lowpass_alpha_5hz_100hz"], abs=1e-15)


def test_low_pass_converges_to_constant():
    f = LowPassFilter(5.0, 0.01)
    f(0.0)
    for _ in range(500):
        v = f(2.0)
    assert v == pytest.approx(2.0, abs=1e-9)


def test_low_pass_step_reaches_63_percent_at_time_constant():
    f_c = 1.0
    dt = 1e-4
    tau = 1 / (2 * math.pi * f_c)
    v = 0.0
    for _ in range(int(round(tau / dt))):
        v = low_pass(v, 1.0, f_c, dt)
    assert abs(v - (1 - math.exp(-1))) <= 0.05 * (1 - math.exp(-1))


def test_low_pass_high_cutoff_is_identity():
    assert low_pass(0.0, 1.0, 1e12, 0.01) == pytest.approx(1.0, abs=1e-6)


def test_projection_similar_triangles():
    cam = PinholeCamera(layout=((0.5, 0.0), (0.0, 0.0)))
    fr = project_features(cam, RelativeState(2.0, 0, 0, 0))
    ref = oracles.pinhole((0.5, 0.0), (0.0, 0.0), 2.0)
    pts = dict(zip(fr.ids.tolist(), fr.points.tolist()))
    assert np.allclose(pts[0], ref, atol=1e-15)
    assert np.allclose(pts[1], [0.0, 0.0], atol=1e-15)


def test_projection_halving_height_doubles_offsets():
    cam = PinholeCamera(layout=((0.3, 0.2), (-0.1, 0.4)))
    a = project_features(cam, RelativeState(2.0, 0, 0, 0)).points
    b = project_features(cam, RelativeState(1.0, 0, 0, 0)).points
    assert np.allclose(b, 2 * a, atol=1e-15)


def test_projection_drops_outside_fov():
    cam = PinholeCamera(half_fov=0.1, layout=((5.0, 0.0), (0.0, 0.0)))
    fr = project_features(cam, RelativeState(1.0, 0, 0, 0))
    assert fr.ids.tolist() == [1]


def test_projection_attitude_rotates_view():
    cam = PinholeCamera(layout=((0.0, 0.0),))
    level = project_features(cam, RelativeState(2.0, 0, 0, 0)).points[0]
    pitched = project_features(cam, RelativeState(2.0, 0, 0, 0), Attitude(0.1, 0.0)).points[0]
    assert np.allclose(level, 0.0)
    assert abs(pitched[0]) == pytest.approx(math.tan(0.1), abs=1e-12)


def test_default_texture_has_features_at_all_heights():
    cam = PinholeCamera()
    for h in (5.0, 3.0, 1.0, 0.3, 0.06):
        assert len(project_features(cam, RelativeState(h, 0, 0, 0))) >= 4


def test_frame_ids_must_be_unique():
    with pytest.raises(ValueError):
        FeatureFrame(np.zeros((2, 2)), np.array([1, 1]))


def _frame(points, t=0.0):
    pts = np.asarray(points, dtype=float)
    return FeatureFrame(pts, np.arange(len(pts), dtype=np.int64), t)


def test_divergence_no_motion_is_zero():
    f = _frame([(0.1, 0.0), (0.0, 0.2), (-0.3, 0.1)])
    assert estimate_divergence(f, f, 0.02) == 0.0


def test_divergence_uniform_scaling(frozen):
    pts = np.array([(0.1, 0.0), (0.0, 0.2), (-0.3, 0.1)])
    v = estimate_divergence(_frame(pts), _frame(1.02 * pts), 0.04)
    assert v == pytest.approx(-0.5, abs=1e-12)
    assert v == pytest.approx(frozen["divergence_scale_1p02_dt0p04"], abs=1e-12)


def test_divergence_matches_loop_oracle():
    rng = np.random.default_rng(1)
    prev = rng.uniform(-0.5, 0.5, (12, 2))
    curr = prev + rng.normal(scale=0.01, size=prev.shape)
    got = estimate_divergence(_frame(prev), _frame(curr), 0.02)
    assert got == pytest.approx(oracles.divergence_loop(prev.tolist(), curr.tolist(), 0.02), abs=1e-12)


def test_divergence_scale_invariant_and_pair_count_independent():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-0.5, 0.5, (30, 2))
    a = estimate_divergence(_frame(pts), _frame(0.97 * pts), 0.02)
    b = estimate_divergence(_frame(3 * pts), _frame(3 * 0.97 * pts), 0.02)
    c = estimate_divergence(_frame(pts), _frame(0.97 * pts), 0.02, max_pairs=10)
    assert a == pytest.approx(b, abs=1e-12)
    assert a == pytest.approx(c, abs=1e-12)


def test_divergence_errors():
    with pytest.raises(InsufficientFeatures):
        estimate_divergence(_frame([(0.1, 0.1)]), _frame([(0.1, 0.1)]), 0.02)
    with pytest.raises(DegeneratePair):
        estimate_divergence(_frame([(0.1, 0.1), (0.1, 0.1)]), _frame([(0.1, 0.1), (0.2, 0.1)]), 0.02)


def test_divergence_skips_degenerate_pairs_only():
    prev = _frame([(0.1, 0.1), (0.1, 0.1), (0.3, 0.1)])
    curr = _frame([(0.1, 0.1), (0.1, 0.1), (0.31, 0.1)])
    assert np.isfinite(estimate_divergence(prev, curr, 0.02))


def test_divergence_matches_ids_not_positions():
    prev = FeatureFrame(np.array([[0.1, 0.0], [0.0, 0.2], [0.5, 0.5]]), np.array([7, 3, 9]))
    curr = FeatureFrame(np.array([[0.0, 0.2], [0.1, 0.0]]), np.array([3, 7]))
    assert estimate_divergence(prev, curr, 0.02) == 0.0


def test_pinhole_descent_divergence_first_order(frozen):
    # exponential descent h = 3 exp(-0.1 t); compare against the analytic flow at the current frame
    cam = PinholeCamera()
    rate, t = -0.1, 5.0

    def rel_err(dt):
        h_prev, h_curr = 3 * math.exp(rate * (t - dt)), 3 * math.exp(rate * t)
        prev = project_features(cam, RelativeState(h_prev, 0, 0, rate * h_prev), timestamp=t - dt)
        curr = project_features(cam, RelativeState(h_curr, 0, 0, rate * h_curr), timestamp=t)
        est = estimate_divergence(prev, curr, dt)
        truth = analytic_flow(RelativeState(h_curr, 0, 0, rate * h_curr)).z
        return abs(est - truth) / abs(truth)

    e1, e2 = rel_err(0.02), rel_err(0.01)
    assert e1 <= 0.01
    assert e1 == pytest.approx(frozen["descent_rel_error_dt0p02"], rel=1e-6)
    assert 0.8 * 2 <= e1 / e2 <= 1.2 * 2


def test_lateral_flow_static_is_zero():
    f = _frame([(0.1, 0.0), (0.0, 0.2)])
    assert estimate_lateral_flow(f, f, 0.02) == (0.0, 0.0)


def test_lateral_flow_uniform_translation():
    pts = np.array([(0.1, 0.0), (0.0, 0.2), (-0.3, 0.1)])
    fx, fy = estimate_lateral_flow(_frame(pts), _frame(pts + [0.01, 0.0]), 0.02)
    assert fx == pytest.approx(-0.5, abs=1e-12)
    assert fy == pytest.approx(0.0, abs=1e-12)


def test_lateral_flow_pure_divergence_symmetric_is_zero():
    pts = np.array([(0.1, 0.1), (-0.1, 0.1), (0.1, -0.1), (-0.1, -0.1)])
    fx, fy = estimate_lateral_flow(_frame(pts), _frame(1.05 * pts), 0.02)
    assert abs(fx) < 1e-12 and abs(fy) < 1e-12


@pytest.mark.parametrize("axis", [0, 1])
def test_lateral_flow_sign_matches_analytic(axis):
    # MAV translating over a static textured platform: the estimate must carry
    # the same sign and magnitude as v / h
    cam = PinholeCamera()
    h, v, dt = 2.0, 0.4, 0.01
    vel = [0.0, 0.0]
    vel[axis] = v
    p0 = project_features(cam, RelativeState(h, 0, 0, 0), offset_xy=(0.0, 0.0))
    off = [0.0, 0.0]
    off[axis] = v * dt
    p1 = project_features(cam, RelativeState(h, 0, 0, 0), offset_xy=tuple(off))
    est = estimate_lateral_flow(p0, p1, dt)
    truth = analytic_flow(RelativeState(h, vel[0], vel[1], 0.0)).flow
    assert est[axis] == pytest.approx(truth[axis], rel=1e-9)


def test_lateral_flow_needs_matches():
    with pytest.raises(InsufficientFeatures):
        estimate_lateral_flow(_frame([]), _frame([]), 0.02)


def test_sensor_feature_path_tracks_analytic():
    params = SensorParams(sample_dt=0.01)
    s = FlowSensor(params, np.random.default_rng(0), source="features")
    h, vz, vx = 2.0, -0.2, 0.3
    outs = []
    for k in range(3):
        t = 0.01 * k
        x = RelativeState(h + vz * t, vx, 0.0, vz)
        outs.append(s.measure(x, Attitude(), (vx * t, 0.0), t))
    truth, meas = outs[-1]
    assert meas.valid
    assert np.allclose(meas.flow, truth.flow, rtol=0.02, atol=1e-3)
    assert not outs[0][1].valid


def test_sensor_params_validation():
    from indiflow.errors import ConfigInvalid
    with pytest.raises(ConfigInvalid):
        SensorParams(c=(1, 1, 0)).validate()
    with pytest.raises(ConfigInvalid):
        SensorParams(noise=(0, -1, 0)).validate()


def test_dump_frames_csv(tmp_path):
    frames = [_frame([(0.1, 0.2), (0.3, 0.4)], t=0.5)]
    path = tmp_path / "frames.csv"
    dump_frames_csv(frames, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,feature_id,mu_x,mu_y"
    assert lines[1] == "0.5,0,0.1,0.2"
