"""numba-compiled kernels. Signatures mirror ``_numpy`` exactly."""
import numpy as np
from numba import njit

_opts = dict(cache=True, nogil=True, fastmath=False)


@njit(**_opts)
def _accel(vx, vy, vz, pitch, roll, thrust, mass, g, kx, ky, kz):
    cr = np.cos(roll)
    ax = (thrust * cr * np.sin(pitch) - kx * vx) / mass
    ay = (-thrust * np.sin(roll) - ky * vy) / mass
    az = -g + (thrust * cr * np.cos(pitch) - kz * vz) / mass
    return ax, ay, az


@njit(**_opts)
def translational_accel(vel, act, mass, g, drag):
    out = np.empty(3)
    out[0], out[1], out[2] = _accel(vel[0], vel[1], vel[2], act[0], act[1], act[2],
                                    mass, g, drag[0], drag[1], drag[2])
    return out


@njit(**_opts)
def lag_step(act, cmd, h, tau_att, tau_thr, lim):
    out = np.empty(3)
    for i in range(3):
        tau = tau_thr if i == 2 else tau_att
        v = act[i] + (h / tau) * (cmd[i] - act[i])
        lo = 0.0 if i == 2 else -lim[i]
        if v < lo:
            v = lo
        elif v > lim[i]:
            v = lim[i]
        out[i] = v
    return out


@njit(**_opts)
def advance(pos, vel, act, cmd, h, n_sub, mass, g, drag, tau_att, tau_thr, lim):
    p = pos.copy()
    v = vel.copy()
    a = act.copy()
    kx, ky, kz = drag[0], drag[1], drag[2]
    for _ in range(n_sub):
        a = lag_step(a, cmd, h, tau_att, tau_thr, lim)
        th, ph, T = a[0], a[1], a[2]
        # RK4; acceleration depends on velocity only (position-free dynamics)
        k1x, k1y, k1z = _accel(v[0], v[1], v[2], th, ph, T, mass, g, kx, ky, kz)
        v2x = v[0] + 0.5 * h * k1x
        v2y = v[1] + 0.5 * h * k1y
        v2z = v[2] + 0.5 * h * k1z
        k2x, k2y, k2z = _accel(v2x, v2y, v2z, th, ph, T, mass, g, kx, ky, kz)
        v3x = v[0] + 0.5 * h * k2x
        v3y = v[1] + 0.5 * h * k2y
        v3z = v[2] + 0.5 * h * k2z
        k3x, k3y, k3z = _accel(v3x, v3y, v3z, th, ph, T, mass, g, kx, ky, kz)
        v4x = v[0] + h * k3x
        v4y = v[1] + h * k3y
        v4z = v[2] + h * k3z
        k4x, k4y, k4z = _accel(v4x, v4y, v4z, th, ph, T, mass, g, kx, ky, kz)
        p[0] += h / 6.0 * (v[0] + 2.0 * v2x + 2.0 * v3x + v4x)
        p[1] += h / 6.0 * (v[1] + 2.0 * v2y + 2.0 * v3y + v4y)
        p[2] += h / 6.0 * (v[2] + 2.0 * v2z + 2.0 * v3z + v4z)
        v[0] += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v[1] += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        v[2] += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    return p, v, a


@njit(**_opts)
def analytic_G(height, pitch, roll, thrust, mass, cx, cy, cz):
    s = 1.0 / (mass * height)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    G = np.empty((3, 3))
    G[0, 0] = s * cx * cr * cp * thrust
    G[0, 1] = -s * cx * sr * sp * thrust
    G[0, 2] = s * cx * cr * sp
    G[1, 0] = 0.0
    G[1, 1] = -s * cy * cr * thrust
    G[1, 2] = -s * cy * sr
    G[2, 0] = -s * cz * cr * sp * thrust
    G[2, 1] = -s * cz * sr * cp * thrust
    G[2, 2] = s * cz * cr * cp
    return G


@njit(**_opts)
def _norm1(A):
    best = 0.0
    for j in range(A.shape[1]):
        s = 0.0
        for i in range(A.shape[0]):
            s += abs(A[i, j])
        if s > best:
            best = s
    return best


@njit(**_opts)
def invert(G, cond_max):
    """Return ``(inverse, ok, cond1)``; ``ok`` is False when singular or too ill-conditioned."""
    n = G.shape[0]
    for i in range(n):
        for j in range(n):
            if not np.isfinite(G[i, j]):
                return np.zeros((n, n)), False, np.inf
    try:
        Gi = np.linalg.inv(G)
    except Exception:  # noqa: BLE001 - numba raises a bare LinAlgError here
        return np.zeros((n, n)), False, np.inf
    cond = _norm1(G) * _norm1(Gi)
    if not np.isfinite(cond) or cond > cond_max:
        return np.zeros((n, n)), False, cond
    return Gi, True, cond


@njit(**_opts)
def rls_update(theta, P, phi, resp, gamma, eps, trace_max):
    """In-place exponentially weighted RLS, one independent recursion per row.

    Rows whose regressor norm is below ``eps`` are left untouched. Returns the
    number of skipped rows.
    """
    rows, n = theta.shape
    skipped = 0
    for r in range(rows):
        nrm = 0.0
        for j in range(n):
            nrm += phi[r, j] * phi[r, j]
        if np.sqrt(nrm) < eps:
            skipped += 1
            continue
        Pr = P[r]
        Pphi = np.zeros(n)
        for i in range(n):
            for j in range(n):
                Pphi[i] += Pr[i, j] * phi[r, j]
        denom = gamma
        pred = 0.0
        for j in range(n):
            denom += phi[r, j] * Pphi[j]
            pred += theta[r, j] * phi[r, j]
        err = resp[r] - pred
        tr = 0.0
        for i in range(n):
            k_i = Pphi[i] / denom
            theta[r, i] += k_i * err
        for i in range(n):
            for j in range(i, n):
                v = (Pr[i, j] - Pphi[i] * Pphi[j] / denom) / gamma
                Pr[i, j] = v
                Pr[j, i] = v
            tr += Pr[i, i]
        if tr > trace_max:
            scale = trace_max / tr
            for i in range(n):
                for j in range(n):
                    Pr[i, j] *= scale
    return skipped


@njit(**_opts)
def pair_divergence(prev, curr, pairs, dt, eps):
    """Mean relative shrink rate of pairwise image distances.

    Returns ``(estimate, pairs_used)``; pairs with previous distance below
    ``eps`` are skipped.
    """
    total = 0.0
    used = 0
    for m in range(pairs.shape[0]):
        i = pairs[m, 0]
        j = pairs[m, 1]
        dxp = prev[i, 0] - prev[j, 0]
        dyp = prev[i, 1] - prev[j, 1]
        kp = np.sqrt(dxp * dxp + dyp * dyp)
        if kp < eps:
            continue
        dxc = curr[i, 0] - curr[j, 0]
        dyc = curr[i, 1] - curr[j, 1]
        kc = np.sqrt(dxc * dxc + dyc * dyc)
        total += (kp - kc) / kp
        used += 1
    if used == 0:
        return 0.0, 0
    return total / used / dt, used
