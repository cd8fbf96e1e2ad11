"""Pure-numpy fallback kernels. Signatures mirror ``_numba`` exactly."""
import numpy as np


def translational_accel(vel, act, mass, g, drag):
    pitch, roll, thrust = act
    direction = np.array([np.cos(roll) * np.sin(pitch), -np.sin(roll), np.cos(roll) * np.cos(pitch)])
    return np.array([0.0, 0.0, -g]) + (thrust * direction - drag * vel) / mass


def lag_step(act, cmd, h, tau_att, tau_thr, lim):
    tau = np.array([tau_att, tau_att, tau_thr])
    out = act + (h / tau) * (cmd - act)
    lo = np.array([-lim[0], -lim[1], 0.0])
    return np.minimum(np.maximum(out, lo), lim)


def advance(pos, vel, act, cmd, h, n_sub, mass, g, drag, tau_att, tau_thr, lim):
    p = np.array(pos, dtype=float)
    v = np.array(vel, dtype=float)
    a = np.array(act, dtype=float)
    for _ in range(n_sub):
        a = lag_step(a, cmd, h, tau_att, tau_thr, lim)
        k1 = translational_accel(v, a, mass, g, drag)
        v2 = v + 0.5 * h * k1
        k2 = translational_accel(v2, a, mass, g, drag)
        v3 = v + 0.5 * h * k2
        k3 = translational_accel(v3, a, mass, g, drag)
        v4 = v + h * k3
        k4 = translational_accel(v4, a, mass, g, drag)
        p = p + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return p, v, a


def analytic_G(height, pitch, roll, thrust, mass, cx, cy, cz):
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    G = np.array([
        [cx * cr * cp * thrust, -cx * sr * sp * thrust, cx * cr * sp],
        [0.0, -cy * cr * thrust, -cy * sr],
        [-cz * cr * sp * thrust, -cz * sr * cp * thrust, cz * cr * cp],
    ])
    return G / (mass * height)


def invert(G, cond_max):
    n = G.shape[0]
    if not np.all(np.isfinite(G)):
        return np.zeros((n, n)), False, np.inf
    try:
        Gi = np.linalg.inv(G)
    except np.linalg.LinAlgError:
        return np.zeros((n, n)), False, np.inf
    cond = np.linalg.norm(G, 1) * np.linalg.norm(Gi, 1)
    if not np.isfinite(cond) or cond > cond_max:
        return np.zeros((n, n)), False, cond
    return Gi, True, cond


def rls_update(theta, P, phi, resp, gamma, eps, trace_max):
    skipped = 0
    for r in range(theta.shape[0]):
        x = phi[r]
        if np.linalg.norm(x) < eps:
            skipped += 1
            continue
        Px = P[r] @ x
        denom = gamma + x @ Px
        theta[r] += (Px / denom) * (resp[r] - theta[r] @ x)
        Pn = (P[r] - np.outer(Px, Px) / denom) / gamma
        Pn = 0.5 * (Pn + Pn.T)
        tr = np.trace(Pn)
        if tr > trace_max:
            Pn *= trace_max / tr
        P[r] = Pn
    return skipped


def pair_divergence(prev, curr, pairs, dt, eps):
    i, j = pairs[:, 0], pairs[:, 1]
    kp = np.hypot(*(prev[i] - prev[j]).T)
    kc = np.hypot(*(curr[i] - curr[j]).T)
    ok = kp >= eps
    used = int(ok.sum())
    if used == 0:
        return 0.0, 0
    return float(np.mean((kp[ok] - kc[ok]) / kp[ok]) / dt), used
