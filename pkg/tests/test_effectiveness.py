import numpy as np
import pytest

import oracles
from indiflow.dynamics import ControlInput, PhysicalParams, RelativeState
from indiflow.effectiveness import (
    BLIND_GINV_DIAG, EstimatorConfig, RlsEstimatorState, analytic_G, increments, initial_estimate,
    invert, rls_update, true_Ginv,
)
from indiflow.errors import ConfigInvalid, DegenerateHeight, DimensionMismatch, IllConditioned

P = PhysicalParams()
HOVER = ControlInput(0.0, 0.0, P.hover_thrust)


def test_hover_G(frozen):
    G = analytic_G(RelativeState(3.0, 0, 0, 0), HOVER)
    assert np.allclose(np.diag(G), frozen["G_hover_diag"], rtol=1e-8)
    off = G - np.diag(np.diag(G))
    assert np.array_equal(off, np.zeros((3, 3)))


def test_G_matches_finite_difference_jacobian():
    rng = np.random.default_rng(5)
    for _ in range(20):
        h = rng.uniform(0.2, 5)
        u = (rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(6, 18))
        G = analytic_G(RelativeState(h, 0.3, -0.2, -0.1), ControlInput(*u))
        ref = oracles.effectiveness_fd(h, (0.3, -0.2, -0.1), u)
        assert np.allclose(G, ref, rtol=1e-6, atol=1e-8)


def test_G_halving_height_doubles_entries():
    u = ControlInput(0.1, -0.2, 10.0)
    a = analytic_G(RelativeState(2.0, 0, 0, 0), u)
    b = analytic_G(RelativeState(1.0, 0, 0, 0), u)
    assert np.array_equal(b, 2 * a)


def test_G_level_attitude_zero_couplings():
    G = analytic_G(RelativeState(2.0, 0, 0, 0), ControlInput(0.0, 0.0, 9.0))
    assert G[1, 0] == 0.0 and G[2, 0] == 0.0 and G[2, 1] == 0.0


def test_G_degenerate_height():
    with pytest.raises(DegenerateHeight):
        analytic_G(RelativeState(0.0, 0, 0, 0), HOVER)


def test_invert_identity():
    assert np.allclose(invert(np.eye(3)), np.eye(3))


def test_invert_hover(frozen):
    Gi = true_Ginv(RelativeState(3.0, 0, 0, 0), HOVER)
    assert np.allclose(np.diag(Gi), frozen["Ginv_hover_diag"], rtol=1e-8)


def test_invert_singular_zero_thrust():
    G = analytic_G(RelativeState(3.0, 0, 0, 0), ControlInput(0.0, 0.0, 0.0))
    assert np.linalg.det(G) == 0.0
    with pytest.raises(IllConditioned):
        invert(G)


def test_invert_condition_bound():
    with pytest.raises(IllConditioned):
        invert(np.diag([1.0, 1.0, 1e-9]), cond_max=1e8)
    invert(np.diag([1.0, 1.0, 1e-7]), cond_max=1e8)


def test_invert_nonfinite_and_shape():
    with pytest.raises(IllConditioned):
        invert(np.array([[np.nan, 0], [0, 1.0]]))
    with pytest.raises(DimensionMismatch):
        invert(np.ones((2, 3)))


def test_inverse_identity_random_states():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        x = RelativeState(rng.uniform(0.1, 5.0), 0, 0, 0)
        u = ControlInput(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                         rng.uniform(0.5, 1.5) * P.hover_thrust)
        G = analytic_G(x, u)
        assert np.max(np.abs(G @ true_Ginv(x, u) - np.eye(3))) <= 1e-9


def test_inverse_scales_with_height_exactly():
    u = ControlInput(0.12, -0.07, 11.0)
    a = true_Ginv(RelativeState(1.3, 0, 0, 0), u)
    b = true_Ginv(RelativeState(2.6, 0, 0, 0), u)
    assert np.array_equal(b, 2 * a)


# -- recursive least squares ---------------------------------------------------

def test_zero_regressor_skips_and_preserves_state():
    s = RlsEstimatorState.create(np.eye(3), 0.9, "G")
    theta, P0 = s.theta.copy(), s.P.copy()
    assert s.update(np.zeros(3), np.ones(3)) is True
    assert np.array_equal(s.theta, theta) and np.array_equal(s.P, P0)
    assert s.skip_count == 1 and s.count == 0


def test_subthreshold_sequence_is_bit_identical():
    s = RlsEstimatorState.create(np.eye(3), 0.8, "Ginv")
    theta, P0 = s.theta.copy(), s.P.copy()
    rng = np.random.default_rng(0)
    for _ in range(20):
        s.update(rng.normal(size=3) * 1e-8, rng.normal(size=3))
    assert np.array_equal(s.theta, theta) and np.array_equal(s.P, P0)


def test_dimension_mismatch():
    s = RlsEstimatorState.create(np.eye(3), 0.9, "G")
    with pytest.raises(DimensionMismatch):
        s.update(np.ones(2), np.ones(3))
    with pytest.raises(DimensionMismatch):
        s.update(np.ones(3), np.ones(1))


def test_invalid_gamma_and_mode():
    with pytest.raises(ConfigInvalid):
        RlsEstimatorState.create(np.eye(3), 0.0, "G")
    with pytest.raises(ConfigInvalid):
        RlsEstimatorState.create(np.eye(3), 0.9, "H")


def _linear_data(seed=0, n=50):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(3, 3))
    X = rng.normal(size=(n, 3))
    return theta, X, X @ theta.T


def test_rls_equals_batch_least_squares_with_diffuse_prior():
    theta, X, Y = _linear_data()
    s = RlsEstimatorState.create(np.zeros((3, 3)), 1.0, "G", p0=1e9)
    for x, y in zip(X, Y):
        s.update(x, y)
    ref = oracles.batch_ls(X, Y)
    assert np.linalg.norm(s.theta - ref) / np.linalg.norm(ref) <= 1e-8


def test_rls_equals_prior_regularised_batch_at_default_p0():
    theta, X, Y = _linear_data(1)
    prior = np.eye(3)
    s = RlsEstimatorState.create(prior, 1.0, "G")
    for x, y in zip(X, Y):
        s.update(x, y)
    ref = np.linalg.solve(X.T @ X + np.eye(3) / 1e3, X.T @ Y + prior.T / 1e3).T
    assert np.linalg.norm(s.theta - ref) / np.linalg.norm(ref) <= 1e-12


def test_covariance_stays_symmetric_positive_definite():
    theta, X, Y = _linear_data(2, 200)
    s = RlsEstimatorState.create(np.zeros((3, 3)), 0.8, "G")
    for x, y in zip(X, Y):
        s.update(x, y)
        for P in s.P:
            assert np.array_equal(P, P.T)
            assert np.all(np.linalg.eigvalsh(P) > 0)


def test_covariance_trace_is_capped_without_excitation():
    s = RlsEstimatorState.create(np.zeros((1, 1)), 0.5, "Ginv")
    for _ in range(200):
        s.update(np.array([1e-3]), np.array([0.0]))
    assert np.trace(s.P[0]) <= s.trace_max * (1 + 1e-12)


def test_drifting_scalar_tracking():
    # theta(t) = 1 + 0.01 t sampled at 100 Hz with a persistently exciting regressor
    gamma, dt = 0.8, 0.01
    s = RlsEstimatorState.create(np.array([[1.0]]), gamma, "G")
    rng = np.random.default_rng(0)
    errs, window_errs, xs, ys = [], [], [], []
    for k in range(3000):
        t = k * dt
        x = np.array([np.sin(2 * np.pi * 3 * t) + 0.5 * rng.normal()])
        true = 1 + 0.01 * t
        y = np.array([true * x[0]])
        s.update(x, y)
        xs.append(x[0])
        ys.append(y[0])
        if k > 500:
            errs.append(abs(s.theta[0, 0] - true))
            win_x, win_y = np.array(xs[-20:]), np.array(ys[-20:])
            window_errs.append(abs(win_x @ win_y / (win_x @ win_x) - true))
    assert max(errs) <= 0.02
    assert np.mean(errs) <= max(np.mean(window_errs), 1e-3) * 10


def test_mode_duality_on_linear_data():
    theta, X, Y = _linear_data(3, 200)
    g = RlsEstimatorState.create(np.zeros((3, 3)), 1.0, "G", p0=1e9)
    gi = RlsEstimatorState.create(np.zeros((3, 3)), 1.0, "Ginv", p0=1e9)
    for x, y in zip(X, Y):
        g.update(*increments("G", x, y))
        gi.update(*increments("Ginv", x, y))
    a = np.linalg.inv(g.theta)
    assert np.linalg.norm(a - gi.theta) / np.linalg.norm(gi.theta) <= 1e-6


def test_increments_roles():
    du, dy = np.array([1.0, 2, 3]), np.array([4.0, 5, 6])
    assert increments("G", du, dy) == (du, dy)
    assert increments("Ginv", du, dy) == (dy, du)


def test_functional_update_leaves_input_untouched():
    s = RlsEstimatorState.create(np.eye(3), 0.9, "G")
    new = rls_update(s, np.ones(3), np.zeros(3))
    assert np.array_equal(s.theta, np.eye(3))
    assert not np.array_equal(new.theta, np.eye(3))


def test_diagonal_mode_only_touches_diagonal():
    s = RlsEstimatorState.create(np.diag([1.0, 2.0, 3.0]), 1.0, "G", diagonal=True)
    s.update(np.array([1.0, 1.0, 1.0]), np.array([2.0, 2.0, 2.0]))
    off = s.theta - np.diag(np.diag(s.theta))
    assert np.array_equal(off, np.zeros((3, 3)))
    assert s.P.shape == (3, 1, 1)


def test_estimator_config_defaults():
    cfg = EstimatorConfig()
    assert cfg.gamma_for("G") == 0.8 and cfg.gamma_for("Ginv") == 0.95
    assert EstimatorConfig(gamma=0.9).gamma_for("G") == 0.9
    with pytest.raises(ConfigInvalid):
        EstimatorConfig(init="guess").validate()


def test_initial_estimates():
    G = analytic_G(RelativeState(3.0, 0, 0, 0), HOVER)
    pert = initial_estimate(EstimatorConfig(), "Ginv", G)
    assert np.allclose(pert, 1.2 * np.linalg.inv(G))
    vert = initial_estimate(EstimatorConfig(), "Ginv", G, vertical_only=True)
    assert vert.shape == (1, 1) and vert[0, 0] == pytest.approx(1.2 * 3.6)
    blind = initial_estimate(EstimatorConfig(init="blind"), "Ginv", G)
    assert np.array_equal(blind, np.diag(BLIND_GINV_DIAG))
    blind_g = initial_estimate(EstimatorConfig(init="blind"), "G", G)
    assert np.allclose(blind_g @ np.diag(BLIND_GINV_DIAG), np.eye(3))
