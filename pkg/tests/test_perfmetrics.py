"""Tracking metrics, hourly scores, threshold sweep, efficiency report.

The brute-force reimplementations at the top are deliberately naive
(plain loops, no shared code with the package) and serve as independent
oracles for the metric mathematics.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regflex import perfmetrics
from regflex.perfmetrics import (EnergyTrace, MetricsError, PjmScore,
                                 average_scores, efficiency_report,
                                 pjm_scores, reserve_threshold_sweep,
                                 tracking_metrics)


# ---------------------------------------------------------------------------
# independent brute-force oracles
# ---------------------------------------------------------------------------

def brute_tracking_metrics(w, p_d, p_f, r_u, r_d):
    """Loop-based reimplementation of the aggregate error metrics."""
    n = len(p_d)
    e = [p_d[i] - p_f[i] for i in range(n)]
    me = sum(e) / n
    mae = sum(abs(x) for x in e) / n
    rmse = math.sqrt(sum(x * x for x in e) / n)
    t_terms = [abs(e[i] / p_d[i]) for i in range(n) if p_d[i] != 0.0]
    r_terms = []
    for i in range(n):
        cap = r_u[i] if w[i] < 0.0 else r_d[i]
        if cap != 0.0:
            r_terms.append(abs(e[i] / cap))
    t_mape = sum(t_terms) / len(t_terms) if t_terms else math.nan
    r_mape = sum(r_terms) / len(r_terms) if r_terms else math.nan
    return me, mae, rmse, t_mape, r_mape


def brute_hour_score(pd_g, pf_g):
    """Loop-based shift-correlation search and score composition."""
    n = len(pd_g)
    best, arg = -math.inf, 0
    for s in range(31):
        a = pd_g[: n - s]
        b = pf_g[s:]
        ma = sum(a) / len(a)
        mb = sum(b) / len(b)
        va = sum((x - ma) ** 2 for x in a) / len(a)
        vb = sum((x - mb) ** 2 for x in b) / len(b)
        if va == 0.0 or vb == 0.0:
            c = 0.0
        else:
            cov = sum((x - ma) * (y - mb) for x, y in zip(a, b)) / len(a)
            c = cov / math.sqrt(va * vb)
        if c > best:
            best, arg = c, s
    tau = arg * 10.0
    s_d = abs((tau - 300.0) / 300.0)
    pd_mean = max(sum(pd_g) / n, 1.0)
    s_p = max(0.0, 1.0 - sum(abs((x - y) / pd_mean)
                             for x, y in zip(pd_g, pf_g)) / n)
    return best, tau, s_d, s_p


def random_hours(n_hours, seed):
    """Synthetic desired/actual power series on the 10 s grid."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_hours * 360) * 10.0
    p_d = 800.0 + 500.0 * rng.standard_normal(len(t)).cumsum() * 0.05
    p_f = p_d + 30.0 * rng.standard_normal(len(t))
    return t, p_d, p_f


# ---------------------------------------------------------------------------
# frozen oracle values
# ---------------------------------------------------------------------------

def _records(w, p_d, p_f, r_u=None, r_d=None):
    n = len(p_d)
    return {
        "w": np.asarray(w, dtype=float),
        "p_d_w": np.asarray(p_d, dtype=float),
        "p_f_w": np.asarray(p_f, dtype=float),
        "r_u_w": np.ones(n) if r_u is None else np.asarray(r_u, dtype=float),
        "r_d_w": np.ones(n) if r_d is None else np.asarray(r_d, dtype=float),
    }


def test_perfect_tracking_all_zero():
    m = tracking_metrics(_records([0.1, -0.2, 0.3], [100, 200, 150],
                                  [100, 200, 150]))
    assert m.e_me_w == 0.0
    assert m.e_mae_w == 0.0
    assert m.e_rmse_w == 0.0
    assert m.e_t_mape == 0.0


def test_hand_arithmetic_oracle():
    m = tracking_metrics(_records([0.1, 0.1, 0.1], [100, 200, 100],
                                  [90, 210, 100]))
    assert m.e_me_w == pytest.approx(0.0, abs=1e-12)
    assert m.e_mae_w == pytest.approx(20.0 / 3.0)
    assert m.e_rmse_w == pytest.approx(math.sqrt(200.0 / 3.0))
    assert m.e_t_mape == pytest.approx(0.05)


def test_zero_denominator_samples_skipped():
    m = tracking_metrics(_records([0.1, -0.1], [0.0, 100.0], [5.0, 90.0],
                                  r_u=[0.0, 0.0], r_d=[50.0, 50.0]))
    assert m.skipped_t == 1
    # second sample has w < 0 and r_u = 0, so it is skipped on the r side
    assert m.skipped_r == 1
    assert m.e_t_mape == pytest.approx(0.1)


def test_empty_series_rejected():
    with pytest.raises(MetricsError):
        tracking_metrics(_records([], [], []))


def test_perfect_hour_scores_one():
    rng = np.random.default_rng(0)
    t = np.arange(360) * 10.0
    p = 500.0 + 100.0 * rng.standard_normal(360)
    scores = pjm_scores(t, p, p, [100.0])
    s = scores[0]
    assert s.s_c == 1.0
    assert s.tau_star_s == 0.0
    assert s.s_d == 1.0
    assert s.s_p == 1.0
    assert s.s_tot == 1.0


def test_pure_30s_shift():
    rng = np.random.default_rng(1)
    x = 500.0 + 100.0 * rng.standard_normal(363)
    t = np.arange(360) * 10.0
    p_d = x[3:]
    p_f = x[:360]  # p_f lags p_d by exactly 3 grid steps = 30 s
    s = pjm_scores(t, p_d, p_f, [100.0])[0]
    assert s.tau_star_s == 30.0
    assert s.s_d == pytest.approx(0.9)
    assert s.s_c == pytest.approx(1.0)


def test_flat_hour_convention():
    t = np.arange(360) * 10.0
    flat = np.full(360, 400.0)
    good = pjm_scores(t, flat, flat + 0.5, [100.0])[0]
    bad = pjm_scores(t, flat, flat + 50.0, [100.0])[0]
    assert good.s_c == 1.0
    assert bad.s_c == 0.0


def test_zero_reserve_hour_invalid():
    rng = np.random.default_rng(2)
    t = np.arange(720) * 10.0
    p = 500.0 + 50.0 * rng.standard_normal(720)
    scores = pjm_scores(t, p, p, [0.0, 100.0])
    assert not scores[0].valid
    assert scores[1].valid
    avg = average_scores(scores)
    assert avg["n_valid"] == 1
    assert avg["s_tot"] == pytest.approx(scores[1].s_tot)


def test_score_composition_assertion():
    with pytest.raises(AssertionError):
        PjmScore(0, 0.9, 0.9, 0.9, 0.5, 0.0, True)


def test_threshold_zero_is_identity():
    rng = np.random.default_rng(3)
    rec = _records(rng.uniform(-1, 1, 50), rng.uniform(100, 900, 50),
                   rng.uniform(100, 900, 50),
                   r_u=rng.uniform(0, 300, 50), r_d=rng.uniform(0, 300, 50))
    sweep = reserve_threshold_sweep(rec, [0.0])
    base = tracking_metrics(rec)
    thr, m, size = sweep[0]
    assert size == 50
    assert m == base


def test_threshold_above_max_undefined():
    rec = _records([0.5, -0.5], [100, 200], [90, 190],
                   r_u=[50, 50], r_d=[60, 60])
    sweep = reserve_threshold_sweep(rec, [1000.0])
    assert sweep[0][1] is None
    assert sweep[0][2] == 0


def test_threshold_sweep_constructed_shapes():
    # error proportional to capacity: absolute errors grow with the floor,
    # relative-to-capacity errors shrink
    rng = np.random.default_rng(4)
    n = 2000
    cap = rng.uniform(10.0, 300.0, n)
    err = 0.2 * cap + rng.uniform(0, 1, n)
    rec = _records(np.full(n, 0.5), np.full(n, 500.0), 500.0 - err,
                   r_u=cap, r_d=cap)
    sweep = reserve_threshold_sweep(rec, [0.0, 50.0, 100.0, 200.0])
    maes = [m.e_mae_w for _, m, _ in sweep]
    rmapes = [m.e_r_mape for _, m, _ in sweep]
    assert all(b > a for a, b in zip(maes, maes[1:]))
    assert all(b < a for a, b in zip(rmapes, rmapes[1:]))


def test_unsorted_thresholds_rejected():
    rec = _records([0.1], [100], [90])
    with pytest.raises(MetricsError):
        reserve_threshold_sweep(rec, [100.0, 50.0])


def test_efficiency_self_comparison():
    t = np.arange(100) * 4.0
    tr = EnergyTrace(t, np.full(100, 500.0), np.full(100, 3000.0),
                     np.full(100, 10.0), np.full(100, 23.0))
    rep = efficiency_report(tr, tr, (0.0, 396.0))
    assert rep.fan_loss_pct == 0.0
    assert rep.cooling_loss_pct == 0.0
    assert rep.mean_temp_a_c == rep.mean_temp_b_c


def test_efficiency_mismatched_windows_rejected():
    t = np.arange(100) * 4.0
    a = EnergyTrace(t, np.ones(100), np.ones(100), np.ones(100), np.ones(100))
    b = EnergyTrace(t + 2.0, np.ones(100), np.ones(100), np.ones(100),
                    np.ones(100))
    with pytest.raises(MetricsError):
        efficiency_report(a, b, (0.0, 396.0))


def test_scores_against_brute_force_sample():
    t, p_d, p_f = random_hours(3, seed=9)
    scores = pjm_scores(t, p_d, p_f, [100.0, 100.0, 100.0])
    for h, s in enumerate(scores):
        pd_g = list(p_d[h * 360:(h + 1) * 360])
        pf_g = list(p_f[h * 360:(h + 1) * 360])
        s_c, tau, s_d, s_p = brute_hour_score(pd_g, pf_g)
        assert s.s_c == pytest.approx(s_c, rel=1e-12)
        assert s.tau_star_s == tau
        assert s.s_d == pytest.approx(s_d, rel=1e-12)
        assert s.s_p == pytest.approx(s_p, rel=1e-12)


# ---------------------------------------------------------------------------
# property suite
# ---------------------------------------------------------------------------

series = st.integers(3, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-1, 1), min_size=n, max_size=n),
        st.lists(st.floats(10, 2000), min_size=n, max_size=n),
        st.lists(st.floats(10, 2000), min_size=n, max_size=n),
        st.lists(st.floats(1, 500), min_size=n, max_size=n),
        st.lists(st.floats(1, 500), min_size=n, max_size=n),
    )
)


@settings(max_examples=100, deadline=None)
@given(data=series)
def test_metric_identities(data):
    w, p_d, p_f, r_u, r_d = data
    m = tracking_metrics(_records(w, p_d, p_f, r_u, r_d))
    assert m.e_mae_w >= abs(m.e_me_w) - 1e-9
    assert m.e_rmse_w >= m.e_mae_w - 1e-9
    for v in (m.e_me_w, m.e_mae_w, m.e_rmse_w, m.e_t_mape, m.e_r_mape):
        assert math.isfinite(v)


@settings(max_examples=100, deadline=None)
@given(data=series, scale=st.floats(0.1, 10.0))
def test_metric_scaling(data, scale):
    w, p_d, p_f, r_u, r_d = data
    base = tracking_metrics(_records(w, p_d, p_f, r_u, r_d))
    scaled = tracking_metrics(_records(
        w, np.asarray(p_d) * scale, np.asarray(p_f) * scale,
        np.asarray(r_u) * scale, np.asarray(r_d) * scale))
    assert scaled.e_me_w == pytest.approx(base.e_me_w * scale, rel=1e-9, abs=1e-9)
    assert scaled.e_mae_w == pytest.approx(base.e_mae_w * scale, rel=1e-9)
    assert scaled.e_rmse_w == pytest.approx(base.e_rmse_w * scale, rel=1e-9)
    assert scaled.e_t_mape == pytest.approx(base.e_t_mape, rel=1e-9)
    assert scaled.e_r_mape == pytest.approx(base.e_r_mape, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.2, 5.0))
def test_score_properties(seed, scale):
    rng = np.random.default_rng(seed)
    t = np.arange(360) * 10.0
    p_d = 500.0 + 200.0 * rng.standard_normal(360)
    p_f = p_d + 50.0 * rng.standard_normal(360)
    s = pjm_scores(t, p_d, p_f, [100.0])[0]
    assert s.s_tot == (s.s_c + s.s_d + s.s_p) / 3.0
    assert 0.0 <= s.s_d <= 1.0
    assert 0.0 <= s.s_p <= 1.0
    assert 0.0 <= s.tau_star_s <= 300.0
    assert s.tau_star_s % 10.0 == 0.0
    # correlation and delay scores are invariant to scaling both series
    s2 = pjm_scores(t, p_d * scale, p_f * scale, [100.0])[0]
    assert s2.s_c == pytest.approx(s.s_c, rel=1e-9)
    assert s2.tau_star_s == s.tau_star_s


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_correlation_argmax_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    t = np.arange(360) * 10.0
    lag = rng.integers(0, 12)
    x = 500.0 + 150.0 * rng.standard_normal(360 + lag)
    p_d = x[lag:]
    p_f = x[:360] + 20.0 * rng.standard_normal(360)
    s = pjm_scores(t, p_d, p_f, [100.0])[0]
    s_c, tau, s_d, s_p = brute_hour_score(list(p_d), list(p_f))
    assert s.s_c == pytest.approx(s_c, rel=1e-12)
    assert s.tau_star_s == tau
