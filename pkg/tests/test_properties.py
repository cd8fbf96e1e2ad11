import numpy as np
from hypothesis import given, strategies as st

from indiflow.controller import ControllerState, GainConfig, control_step_direct, virtual_input
from indiflow.dynamics import ActuatorLimits, ControlInput, RelativeState
from indiflow.effectiveness import RlsEstimatorState, analytic_G, true_Ginv
from indiflow.flow import FeatureFrame, analytic_flow, estimate_divergence

angle = st.floats(-0.3, 0.3)
height = st.floats(0.1, 5.0)
thrust = st.floats(0.5 * 1.2 * 9.81, 1.5 * 1.2 * 9.81)
speed = st.floats(-3.0, 3.0)
finite = st.floats(-1e3, 1e3)


@given(height, angle, angle, thrust)
def test_inverse_is_exact_inverse(h, pitch, roll, T):
    x, u = RelativeState(h, 0, 0, 0), ControlInput(pitch, roll, T)
    assert np.max(np.abs(analytic_G(x, u) @ true_Ginv(x, u) - np.eye(3))) <= 1e-9


@given(height, angle, angle, thrust, st.floats(0.1, 10.0))
def test_G_inverse_proportional_to_height(h, pitch, roll, T, k):
    u = ControlInput(pitch, roll, T)
    a = analytic_G(RelativeState(h, 0, 0, 0), u)
    b = analytic_G(RelativeState(k * h, 0, 0, 0), u)
    assert np.allclose(b * k, a, rtol=1e-12, atol=1e-15)


@given(height, speed, speed, speed, st.floats(0.1, 10.0))
def test_flow_is_homogeneous_of_degree_zero(h, vx, vy, vz, k):
    a = analytic_flow(RelativeState(h, vx, vy, vz)).flow
    b = analytic_flow(RelativeState(k * h, k * vx, k * vy, k * vz)).flow
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


@given(st.lists(st.tuples(finite, finite, st.floats(-100, 100)), min_size=1, max_size=5))
def test_saturation_idempotent_and_bounded(us):
    lim = ActuatorLimits()
    for u in us:
        once, _ = lim.saturate(np.array(u))
        twice, hit = lim.saturate(once)
        assert np.array_equal(once, twice) and not hit
        assert np.all(np.abs(once[:2]) <= 0.35) and 0 <= once[2] <= lim.max_thrust


@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=20))
def test_direct_step_never_leaves_limits(errors):
    st_ = ControllerState(u_prev=np.array([0.0, 0.0, 11.0]))
    lim = ActuatorLimits()
    for e in errors:
        u, _ = control_step_direct(np.array(e), np.zeros(3), np.eye(3), st_, lim)
        assert lim.saturate(u.as_array())[1] is False


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=50), st.floats(0.0, 2.0))
def test_integral_clamp_holds(ys, ki):
    g = GainConfig(kp=(0, 0, 0), ki=(ki, ki, ki), integral_limit=0.5)
    s = ControllerState()
    for y in ys:
        virtual_input([y, y, y], np.zeros(3), s, g, 0.01)
        assert np.all(np.abs(s.integral) <= 0.5)


@given(st.integers(0, 10_000), st.floats(0.2, 5.0), st.floats(0.95, 1.05))
def test_divergence_scale_invariant(seed, scale, expansion):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.5, 0.5, size=(12, 2))
    ids = np.arange(12)
    a = estimate_divergence(FeatureFrame(pts, ids), FeatureFrame(pts * expansion, ids), 0.01)
    b = estimate_divergence(FeatureFrame(scale * pts, ids),
                            FeatureFrame(scale * pts * expansion, ids), 0.01)
    assert np.isclose(a, b, rtol=1e-9, atol=1e-9)
    assert np.isclose(a, (1 - expansion) / 0.01, rtol=1e-9, atol=1e-9)


@given(st.integers(0, 10_000), st.integers(1, 30))
def test_skipped_updates_change_nothing(seed, n):
    rng = np.random.default_rng(seed)
    s = RlsEstimatorState.create(rng.normal(size=(3, 3)), 0.9, "Ginv")
    for _ in range(5):
        s.update(rng.normal(size=3), rng.normal(size=3))
    theta, P = s.theta.copy(), s.P.copy()
    for _ in range(n):
        s.update(np.zeros(3), rng.normal(size=3))
    assert np.array_equal(theta, s.theta) and np.array_equal(P, s.P)


@given(st.integers(0, 10_000))
def test_rls_exact_on_noiseless_data(seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(3, 3))
    s = RlsEstimatorState.create(np.zeros((3, 3)), 1.0, "G", p0=1e9)
    for _ in range(12):
        x = rng.normal(size=3)
        s.update(x, theta @ x)
    assert np.allclose(s.theta, theta, atol=1e-6)
