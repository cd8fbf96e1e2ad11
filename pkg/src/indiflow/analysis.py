"""Post-processing of simulation logs into landing and comparison metrics.

Every function here is a pure function of its inputs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveHeight, NoTouchdown, WindowTooSmall

TRANSIENT_S = 2.0


@dataclass(frozen=True)
class ExpFit:
    initial: float
    rate: float
    r2: float
    window: tuple

    def predict(self, t):
        return self.initial * np.exp(self.rate * np.asarray(t, dtype=float))


def _window_mask(t, window):
    lo, hi = window if window is not None else (None, None)
    mask = np.ones(len(t), dtype=bool)
    if lo is not None:
        mask &= t >= lo
    if hi is not None:
        mask &= t <= hi
    return mask


def fit_exponential(t, height, window=None, min_samples=10) -> ExpFit:
    """Least-squares line through ``(t, ln height)``; the slope is the decay rate."""
    t = np.asarray(t, dtype=float)
    h = np.asarray(height, dtype=float)
    m = _window_mask(t, window)
    t, h = t[m], h[m]
    if len(t) < min_samples:
        raise WindowTooSmall(f"{len(t)} samples in window, need {min_samples}")
    if np.any(h <= 0):
        raise NonPositiveHeight("heights must be positive to take logarithms")
    z = np.log(h)
    slope, intercept = np.polyfit(t, z, 1)
    resid = z - (slope * t + intercept)
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ExpFit(float(np.exp(intercept)), float(slope), r2, (float(t[0]), float(t[-1])))


def relative_height(log):
    return log.column("dz") - log.column("drz")


def relative_vz(log):
    return log.column("vz") - log.column("vrz")


def default_fit_window(log, guard_height, transient=TRANSIENT_S):
    """From the end of the transient until the height first reaches twice the guard."""
    t = log.column("t")
    h = relative_height(log)
    below = np.nonzero(h <= 2.0 * guard_height)[0]
    end = t[below[0]] if len(below) else t[-1]
    return transient, float(end)


def fit_exponential_log(log, guard_height, window=None) -> ExpFit:
    window = window or default_fit_window(log, guard_height)
    return fit_exponential(log.column("t"), relative_height(log), window)


def tracking_rmse(log, setpoint, window=None, measured=False):
    """Per-axis RMS of ``flow - setpoint`` (true flow unless ``measured``)."""
    t = log.column("t")
    prefix = "flow_meas_" if measured else "flow_"
    flow = np.column_stack([log.column(prefix + a) for a in "xyz"])
    return flow_rmse(t, flow, setpoint, window)


def flow_rmse(t, flow, setpoint, window=None):
    t = np.asarray(t, dtype=float)
    flow = np.atleast_2d(np.asarray(flow, dtype=float))
    m = _window_mask(t, window)
    if not np.any(m):
        raise WindowTooSmall("empty window")
    err = flow[m] - np.asarray(setpoint, dtype=float)
    return np.sqrt(np.mean(err ** 2, axis=0))


def touchdown_metrics(log):
    """Time and relative vertical velocity at the first shutdown tick."""
    phase = log.column("phase")
    idx = np.nonzero(phase == "shutdown")[0]
    if not len(idx):
        raise NoTouchdown("log never reached shutdown")
    i = int(idx[0])
    return float(log.column("t")[i]), float(relative_vz(log)[i])


def ginv_height_correlation(log, transient=TRANSIENT_S, min_samples=30):
    """Pearson correlation of the identified thrust-channel inverse gain with height."""
    t = log.column("t")
    gi = log.column("gi33")
    h = relative_height(log)
    m = (t >= transient) & np.isfinite(gi) & (log.column("phase") == "active")
    if m.sum() < min_samples:
        raise WindowTooSmall(f"{int(m.sum())} post-transient samples, need {min_samples}")
    gi, h = gi[m], h[m]
    if np.std(gi) == 0.0 or np.std(h) == 0.0:
        raise WindowTooSmall("zero variance; correlation undefined")
    return float(np.corrcoef(gi, h)[0, 1])


def touchdown_ratio(log, setpoint_z, cz=1.0):
    """``|vz| / (|setpoint/cz| * height)`` at the first shutdown tick.

    Near 1 when velocity is still slaved to height as the guard latches, i.e.
    height and velocity decay to zero together.
    """
    phase = log.column("phase")
    idx = np.nonzero(phase == "shutdown")[0]
    if not len(idx):
        raise NoTouchdown("log never reached shutdown")
    i = int(idx[0])
    h = float(relative_height(log)[i])
    vz = float(relative_vz(log)[i])
    return abs(vz) / (abs(setpoint_z / cz) * h)


def analyze_log(log, setpoint, guard_height=0.05, cz=1.0, transient=TRANSIENT_S):
    """Everything computable from one log, as a JSON-ready dict.

    Quantities that cannot be computed (no touchdown, short window) are
    reported as ``None`` with the reason under ``"notes"``.
    """
    setpoint = np.asarray(setpoint, dtype=float)
    t = log.column("t")
    rep = {"ticks": len(log), "duration": float(t[-1]) if len(log) else 0.0, "notes": {}}
    notes = rep["notes"]
    window = (transient, None)
    try:
        rep["rmse"] = [float(v) for v in tracking_rmse(log, setpoint, window)]
        rep["rmse_measured"] = [float(v) for v in tracking_rmse(log, setpoint, window, measured=True)]
    except WindowTooSmall as exc:
        rep["rmse"] = rep["rmse_measured"] = None
        notes["rmse"] = str(exc)
    try:
        td_t, td_v = touchdown_metrics(log)
        rep["touchdown"] = True
        rep["touchdown_time"], rep["touchdown_rel_vz"] = td_t, td_v
        rep["touchdown_ratio"] = (touchdown_ratio(log, setpoint[2], cz)
                                  if setpoint[2] != 0 else None)
    except NoTouchdown as exc:
        rep["touchdown"] = False
        rep["touchdown_time"] = rep["touchdown_rel_vz"] = rep["touchdown_ratio"] = None
        notes["touchdown"] = str(exc)
    try:
        fit = fit_exponential_log(log, guard_height)
        rep["decay_rate"], rep["decay_r2"] = fit.rate, fit.r2
        rep["expected_rate"] = float(setpoint[2] / cz)
        rep["fit_window"] = list(fit.window)
    except (WindowTooSmall, NonPositiveHeight) as exc:
        rep["decay_rate"] = rep["decay_r2"] = rep["fit_window"] = None
        rep["expected_rate"] = float(setpoint[2] / cz)
        notes["fit"] = str(exc)
    try:
        rep["ginv_height_corr"] = ginv_height_correlation(log, transient)
    except WindowTooSmall as exc:
        rep["ginv_height_corr"] = None
        notes["ginv_height_corr"] = str(exc)
    h = relative_height(log)
    rep["height_min"], rep["height_max"] = float(h.min()), float(h.max())
    return rep


def check_report(rep, rate_tol=0.05, min_r2=0.95):
    """Landing checks on an ``analyze_log`` report as ``[(name, ok, detail)]``.

    A non-negative divergence setpoint is a hover, where only the tracking
    error is meaningful, so the landing checks are skipped.
    """
    checks = []
    expected = rep.get("expected_rate")
    if expected is not None and expected < 0:
        checks.append(("touchdown", bool(rep["touchdown"]), f"touchdown={rep['touchdown']}"))
        rate, r2 = rep.get("decay_rate"), rep.get("decay_r2")
        ok = rate is not None and abs(rate - expected) <= rate_tol * abs(expected)
        checks.append(("decay_rate", ok, f"rate={rate} expected={expected} tol={rate_tol:.0%}"))
        checks.append(("decay_r2", r2 is not None and r2 >= min_r2, f"r2={r2} min={min_r2}"))
    rmse = rep.get("rmse")
    checks.append(("finite_tracking", rmse is not None and all(np.isfinite(rmse)), f"rmse={rmse}"))
    return checks


def metric_deltas(a, b):
    """``b - a`` for every numeric metric present in both runs."""
    da, db = a.to_dict(), b.to_dict()
    out = {}
    for k, va in da.items():
        vb = db.get(k)
        if isinstance(va, bool) or isinstance(vb, bool):
            continue
        if isinstance(va, (int, float)) and isinstance(vb, (int, float)):
            out[k] = vb - va
    return out


def compare_report(a, b, wall_ratio=None):
    """Side-by-side summary of two arms as ``(text, summary_dict)``.

    ``a`` is the reference (conventional) arm, ``b`` the challenger.
    """
    deltas = metric_deltas(a, b)
    if wall_ratio is None and a.wall_median_s > 0:
        wall_ratio = b.wall_median_s / a.wall_median_s
    summary = {
        "arm_a": a.to_dict(),
        "arm_b": b.to_dict(),
        "deltas": deltas,
        "wall_time_ratio": wall_ratio,
        "b_faster": bool(wall_ratio is not None and wall_ratio < 1.0),
        "hold_events": [a.hold_count, b.hold_count],
        "skip_events": [a.skip_count, b.skip_count],
    }
    lines = [f"{'metric':<20}{a.method:>20}{b.method:>20}{'delta':>14}"]
    for k in sorted(deltas):
        va, vb = getattr(a, k), getattr(b, k)
        lines.append(f"{k:<20}{va:>20.6g}{vb:>20.6g}{deltas[k]:>14.4g}")
    if wall_ratio is not None:
        verdict = "faster" if wall_ratio < 1.0 else "slower"
        lines.append(f"wall-time ratio {b.method}/{a.method}: {wall_ratio:.3f} ({b.method} {verdict})")
    return "\n".join(lines), summary


def plot_data_csv(log, fit: ExpFit, path):
    t = log.column("t")
    h = relative_height(log)
    with open(path, "w") as fh:
        fh.write("t,height,fit\n")
        for ti, hi, fi in zip(t, h, fit.predict(t)):
            fh.write(f"{ti!r},{float(hi)!r},{float(fi)!r}\n")


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
