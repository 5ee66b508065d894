"""Tracking-error metrics, PJM-style hourly scores, reserve-threshold
sweeps, and paired-cell efficiency accounting.

All functions are pure and operate on immutable numpy series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TrackingMetrics",
    "PjmScore",
    "EfficiencyReport",
    "EnergyTrace",
    "MetricsError",
    "tracking_metrics",
    "pjm_scores",
    "average_scores",
    "reserve_threshold_sweep",
    "efficiency_report",
]

SHIFT_MAX_S = 300.0   # correlation search window: 0..5 min
SHIFT_STEP_S = 10.0
PD_MEAN_FLOOR_W = 1.0  # guard for near-zero hourly mean desired power
FLAT_HOUR_RMS_W = 1.0  # a flat hour counts as perfectly tracked below this


class MetricsError(ValueError):
    pass


def _arrays(records, names):
    """Pull named float arrays out of a record sequence or a mapping."""
    if isinstance(records, dict):
        return [np.asarray(records[n], dtype=float) for n in names]
    return [np.asarray([getattr(r, n) for r in records], dtype=float)
            for n in names]


# ---------------------------------------------------------------------------
# aggregate tracking errors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackingMetrics:
    """Aggregate control-error metrics over an experiment.

    ``e_t_mape`` and ``e_r_mape`` are fractions (0.05 = 5 %).  Samples
    skipped because of a zero denominator are counted, not imputed.
    """

    e_me_w: float
    e_mae_w: float
    e_rmse_w: float
    e_t_mape: float
    e_r_mape: float
    n: int
    skipped_t: int = 0
    skipped_r: int = 0


def tracking_metrics(records) -> TrackingMetrics:
    """Mean/absolute/rms control errors plus the two relative MAPEs.

    ``records`` is a sequence of tracking records (attributes ``w``,
    ``p_d_w``, ``p_f_w``, ``r_u_w``, ``r_d_w``) or a dict of arrays with
    those keys.  The control error is ``p_d_w - p_f_w``.  Tracking-MAPE
    terms with desired power 0 are skipped; reserve-MAPE terms normalize
    by the up-capacity when w < 0 and the down-capacity otherwise,
    skipping zero-capacity samples.
    """
    w, p_d, p_f, r_u, r_d = _arrays(records, ("w", "p_d_w", "p_f_w", "r_u_w", "r_d_w"))
    n = len(p_d)
    if n < 1:
        raise MetricsError("empty record series")
    e_c = p_d - p_f

    t_mask = p_d != 0.0
    cap = np.where(w < 0.0, r_u, r_d)
    r_mask = cap != 0.0

    e_t_mape = float(np.mean(np.abs(e_c[t_mask] / p_d[t_mask]))) if t_mask.any() else math.nan
    e_r_mape = float(np.mean(np.abs(e_c[r_mask] / cap[r_mask]))) if r_mask.any() else math.nan
    return TrackingMetrics(
        e_me_w=float(np.mean(e_c)),
        e_mae_w=float(np.mean(np.abs(e_c))),
        e_rmse_w=float(np.sqrt(np.mean(e_c**2))),
        e_t_mape=e_t_mape,
        e_r_mape=e_r_mape,
        n=n,
        skipped_t=int(np.sum(~t_mask)),
        skipped_r=int(np.sum(~r_mask)),
    )


# ---------------------------------------------------------------------------
# PJM-style hourly scores
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PjmScore:
    """Per-hour correlation, delay and precision scores.

    ``s_tot`` is exactly the arithmetic mean of the three components.
    ``valid`` is False for hours with no committed reserve; those hours
    are excluded from period averages.
    """

    hour: int
    s_c: float
    s_d: float
    s_p: float
    s_tot: float
    tau_star_s: float
    valid: bool
    tie: bool = False

    def __post_init__(self):
        if self.valid:
            assert abs(self.s_tot - (self.s_c + self.s_d + self.s_p) / 3.0) < 1e-15


def _bucket_means(t, x, t0, span_s, step_s):
    """Mean of x over [t0 + j*step, t0 + (j+1)*step) for each bucket j."""
    nb = int(round(span_s / step_s))
    idx = np.floor((t - t0) / step_s).astype(int)
    keep = (idx >= 0) & (idx < nb)
    idx = idx[keep]
    sums = np.bincount(idx, weights=x[keep], minlength=nb)
    counts = np.bincount(idx, minlength=nb)
    if np.any(counts == 0):
        raise MetricsError("series has empty 10 s buckets; misaligned input")
    return sums / counts


def _shift_correlations(pd_g, pf_g, step_s=SHIFT_STEP_S, max_s=SHIFT_MAX_S):
    """Pearson correlation of pd[0:n-s] with pf[s:n] for each grid shift."""
    nshift = int(round(max_s / step_s)) + 1
    out = np.full(nshift, -np.inf)
    n = len(pd_g)
    for s in range(nshift):
        a = pd_g[: n - s]
        b = pf_g[s:]
        if len(a) < 2:
            continue
        sa, sb = a.std(), b.std()
        if sa == 0.0 or sb == 0.0:
            out[s] = 0.0
            continue
        c = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
        out[s] = min(max(c, -1.0), 1.0)
    return out


def pjm_scores(t_s, p_d_w, p_f_w, reserve_by_hour, t0_s: float = 0.0,
               grid_s: float = SHIFT_STEP_S) -> list[PjmScore]:
    """Hourly correlation/delay/precision/total scores.

    Series are resampled to the 10 s grid by bucket averaging, so the
    native period must divide (or be finer than) the grid.  For each hour
    the correlation of desired and actual power is maximized over shifts
    of 0..300 s in 10 s steps; ties in the maximizing shift go to the
    smaller delay and are flagged.  A zero-variance (flat) hour scores
    s_c = 1 if the rms control error is below 1 W, else 0.  The precision
    normalizer is the hour's mean desired power, floored at 1 W, and s_p
    is floored at 0.  ``reserve_by_hour`` gives the committed capacity
    (up + down) per hour; zero marks the hour invalid.
    """
    t_s = np.asarray(t_s, dtype=float)
    p_d_w = np.asarray(p_d_w, dtype=float)
    p_f_w = np.asarray(p_f_w, dtype=float)
    if not (len(t_s) == len(p_d_w) == len(p_f_w)):
        raise MetricsError("misaligned series")
    n_hours = len(reserve_by_hour)
    scores = []
    for h in range(n_hours):
        h0 = t0_s + 3600.0 * h
        in_hour = (t_s >= h0) & (t_s < h0 + 3600.0)
        if not in_hour.any():
            raise MetricsError(f"no samples in hour {h}")
        pd_g = _bucket_means(t_s[in_hour], p_d_w[in_hour], h0, 3600.0, grid_s)
        pf_g = _bucket_means(t_s[in_hour], p_f_w[in_hour], h0, 3600.0, grid_s)
        valid = reserve_by_hour[h] != 0.0

        e_g = pd_g - pf_g
        if pd_g.std() == 0.0:
            s_c = 1.0 if float(np.sqrt(np.mean(e_g**2))) < FLAT_HOUR_RMS_W else 0.0
            tau_star, tie = 0.0, False
        else:
            corr = _shift_correlations(pd_g, pf_g, grid_s)
            best = float(np.max(corr))
            arg = int(np.argmax(corr))  # first index: smallest delay on ties
            tie = bool(np.sum(np.isclose(corr, best, rtol=0, atol=1e-12)) > 1)
            s_c = best
            tau_star = arg * grid_s
        s_d = abs((tau_star - SHIFT_MAX_S) / SHIFT_MAX_S)
        pd_mean = max(float(np.mean(pd_g)), PD_MEAN_FLOOR_W)
        s_p = max(0.0, 1.0 - float(np.mean(np.abs(e_g / pd_mean))))
        s_tot = (s_c + s_d + s_p) / 3.0
        scores.append(PjmScore(h, s_c, s_d, s_p, s_tot, tau_star, valid, tie))
    return scores


def average_scores(scores: list[PjmScore]) -> dict:
    """Period averages over valid hours only."""
    valid = [s for s in scores if s.valid]
    if not valid:
        return {"s_c": math.nan, "s_d": math.nan, "s_p": math.nan,
                "s_tot": math.nan, "n_valid": 0}
    return {
        "s_c": float(np.mean([s.s_c for s in valid])),
        "s_d": float(np.mean([s.s_d for s in valid])),
        "s_p": float(np.mean([s.s_p for s in valid])),
        "s_tot": float(np.mean([s.s_tot for s in valid])),
        "n_valid": len(valid),
    }


# ---------------------------------------------------------------------------
# reserve-threshold sweep
# ---------------------------------------------------------------------------

def reserve_threshold_sweep(records, thresholds_w) -> list[tuple]:
    """Recompute tracking metrics keeping only ticks above a capacity floor.

    A tick survives threshold R if the capacity on the active side of the
    signal (up-capacity for w < 0, down-capacity otherwise) is >= R.
    Returns ``(threshold, metrics_or_None, subset_size)`` per threshold;
    metrics are None when the subset is empty.
    """
    thresholds_w = list(thresholds_w)
    if sorted(thresholds_w) != thresholds_w:
        raise MetricsError("thresholds must be sorted ascending")
    w, p_d, p_f, r_u, r_d = _arrays(records, ("w", "p_d_w", "p_f_w", "r_u_w", "r_d_w"))
    cap = np.where(w < 0.0, r_u, r_d)
    out = []
    for thr in thresholds_w:
        mask = cap >= thr
        size = int(mask.sum())
        if size == 0:
            out.append((thr, None, 0))
            continue
        sub = {k: v[mask] for k, v in
               zip(("w", "p_d_w", "p_f_w", "r_u_w", "r_d_w"), (w, p_d, p_f, r_u, r_d))}
        out.append((thr, tracking_metrics(sub), size))
    return out


# ---------------------------------------------------------------------------
# efficiency accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyTrace:
    """Per-tick energy-relevant series of one cell's run."""

    t_s: np.ndarray
    fan_power_w: np.ndarray
    cooling_w: np.ndarray
    cooling_gpm_f: np.ndarray
    t_room_c: np.ndarray

    def __post_init__(self):
        for name in ("t_s", "fan_power_w", "cooling_w", "cooling_gpm_f", "t_room_c"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True)
class EfficiencyReport:
    """Paired-cell energy comparison over a shared window.

    Losses are (regulated - benchmark) / benchmark in percent; negative
    values mean the regulated cell used less.
    """

    fan_energy_a_kwh: float
    fan_energy_b_kwh: float
    cooling_a_kwh: float
    cooling_b_kwh: float
    cooling_a_gpm_f: float
    cooling_b_gpm_f: float
    mean_temp_a_c: float
    mean_temp_b_c: float
    fan_loss_pct: float
    cooling_loss_pct: float


def _window_integral(t, x, t0, t1):
    mask = (t >= t0) & (t <= t1)
    if mask.sum() < 2:
        raise MetricsError("window too small")
    return float(np.trapezoid(x[mask], t[mask]))


def efficiency_report(run_a: EnergyTrace, run_b: EnergyTrace,
                      window: tuple[float, float]) -> EfficiencyReport:
    """Fan and cooling energy of a regulated run vs its benchmark twin.

    Both traces must share the same time grid over ``window`` (the runs
    are expected to share weather and gains; that is the caller's setup).
    """
    t0, t1 = window
    mask_a = (run_a.t_s >= t0) & (run_a.t_s <= t1)
    mask_b = (run_b.t_s >= t0) & (run_b.t_s <= t1)
    if mask_a.sum() != mask_b.sum() or not np.array_equal(
            run_a.t_s[mask_a], run_b.t_s[mask_b]):
        raise MetricsError("mismatched windows between runs")

    fan_a = _window_integral(run_a.t_s, run_a.fan_power_w, t0, t1) / 3.6e6
    fan_b = _window_integral(run_b.t_s, run_b.fan_power_w, t0, t1) / 3.6e6
    cool_a = _window_integral(run_a.t_s, run_a.cooling_w, t0, t1) / 3.6e6
    cool_b = _window_integral(run_b.t_s, run_b.cooling_w, t0, t1) / 3.6e6
    gpm_a = _window_integral(run_a.t_s, run_a.cooling_gpm_f, t0, t1)
    gpm_b = _window_integral(run_b.t_s, run_b.cooling_gpm_f, t0, t1)
    return EfficiencyReport(
        fan_energy_a_kwh=fan_a,
        fan_energy_b_kwh=fan_b,
        cooling_a_kwh=cool_a,
        cooling_b_kwh=cool_b,
        cooling_a_gpm_f=gpm_a,
        cooling_b_gpm_f=gpm_b,
        mean_temp_a_c=float(np.mean(run_a.t_room_c[mask_a])),
        mean_temp_b_c=float(np.mean(run_b.t_room_c[mask_b])),
        fan_loss_pct=100.0 * (fan_a - fan_b) / fan_b if fan_b else math.nan,
        cooling_loss_pct=100.0 * (cool_a - cool_b) / cool_b if cool_b else math.nan,
    )
