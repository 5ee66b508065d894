"""Level 2: 15-minute room-climate MPC with a Kalman filter estimator.

The MPC re-optimizes air-flow setpoints over a horizon that shrinks to
midnight, minimizing energy cost while keeping the already-committed
reserve capacities deliverable and the zone inside a tightened comfort
band.  Infeasible instances are re-solved with a softly-penalized comfort
slack so the controller always emits a setpoint.  The estimator is a
textbook predict/correct Kalman filter on the two-state zone model with a
single room-temperature measurement.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog

from .plantsim import FanModel, ThermalModel
from .scheduler import trajectory_operator, forced_response

__all__ = [
    "EstimatorState",
    "MpcProblem",
    "MpcPlan",
    "ClimateError",
    "kf_update",
    "solve_mpc",
    "write_setpoint_csv",
    "read_setpoint_csv",
    "SETPOINT_HEADER",
]

SETPOINT_HEADER = "slot_index,m_air_kg_s,P_b_W"
SLACK_PENALTY_EUR = 1.0e4  # per degC-slot of comfort violation


class ClimateError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Kalman filter
# ---------------------------------------------------------------------------

def _check_psd(p: np.ndarray, name: str):
    if not np.allclose(p, p.T, atol=1e-9):
        raise ClimateError(f"{name} covariance not symmetric")
    if np.linalg.eigvalsh(p).min() < -1e-9:
        raise ClimateError(f"{name} covariance not positive semidefinite")


@dataclass(frozen=True)
class EstimatorState:
    """Mean and covariance of (T_room, T_mass), plus noise settings."""

    mean: np.ndarray
    cov: np.ndarray
    q_process: np.ndarray
    r_meas: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        q = np.asarray(self.q_process, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "q_process", q)
        _check_psd(cov, "state")
        _check_psd(q, "process")
        if self.r_meas < 0:
            raise ClimateError("measurement variance must be >= 0")

    @staticmethod
    def initial(t_room_c: float = 23.0, t_mass_c: float | None = None,
                var: float = 0.25, q_room: float = 4e-3, q_mass: float = 1e-3,
                r_meas: float = 2.5e-3) -> "EstimatorState":
        if t_mass_c is None:
            t_mass_c = t_room_c
        return EstimatorState(
            mean=np.array([t_room_c, t_mass_c]),
            cov=np.eye(2) * var,
            q_process=np.diag([q_room, q_mass]),
            r_meas=r_meas,
        )


def kf_update(est: EstimatorState, measured_t_room_c: float,
              applied_flow_kg_s: float, weather_actual: tuple,
              q_int_w: float, *, thermal: ThermalModel,
              slot_s: float = 900.0, t_sat_nom_c: float = 17.0,
              t_ref_c: float = 25.0) -> tuple[EstimatorState, float]:
    """One predict/correct cycle over a slot; returns (state, innovation).

    Prediction uses the slot-aggregated linear model with the applied air
    flow and the realized weather; the correction uses the single
    room-temperature measurement.  The posterior covariance is formed in
    Joseph form, so it stays symmetric PSD even for zero measurement noise.
    """
    a, b_m, b_amb, b_sol, b_int = thermal.slot_matrices(
        slot_s, t_sat_nom_c - t_ref_c)
    amb, sol = weather_actual
    u = b_m * applied_flow_kg_s + b_amb * amb + b_sol * sol + b_int * q_int_w

    mean_pred = a @ est.mean + u
    cov_pred = a @ est.cov @ a.T + est.q_process

    h = np.array([[1.0, 0.0]])
    s = (h @ cov_pred @ h.T).item() + est.r_meas
    innovation = measured_t_room_c - (h @ mean_pred).item()
    k = (cov_pred @ h.T / s).ravel()
    mean_post = mean_pred + k * innovation
    ikh = np.eye(2) - np.outer(k, h.ravel())
    cov_post = ikh @ cov_pred @ ikh.T + np.outer(k, k) * est.r_meas
    cov_post = 0.5 * (cov_post + cov_post.T)
    if not np.isfinite(innovation):
        raise ClimateError("non-finite innovation")
    return replace(est, mean=mean_post, cov=cov_post), innovation


def predict_open_loop(est_mean, flows, weather, q_int, *, thermal: ThermalModel,
                      slot_s: float = 900.0, t_sat_nom_c: float = 17.0,
                      t_ref_c: float = 25.0) -> np.ndarray:
    """Room-temperature trajectory of the linear model without correction."""
    a, b_m, b_amb, b_sol, b_int = thermal.slot_matrices(
        slot_s, t_sat_nom_c - t_ref_c)
    amb, sol = weather
    n = len(flows)
    powers, toep = trajectory_operator(a, b_m, n)
    forced = forced_response(powers, b_amb, b_sol, b_int,
                             np.asarray(amb)[:n], np.asarray(sol)[:n],
                             np.asarray(q_int)[:n], est_mean)
    return forced + toep @ np.asarray(flows, dtype=float)


# ---------------------------------------------------------------------------
# MPC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MpcProblem:
    """One reducing-horizon MPC instance.

    The horizon is the number of slots remaining until midnight (>= 1).
    ``ub_tight_c`` must sit strictly below the actual comfort ceiling; the
    flow band is the relaxed level-2 band.  ``r_u_w``/``r_d_w`` carry the
    committed hourly capacities mapped onto the horizon slots.
    """

    slot_s: float
    lb_c: np.ndarray
    ub_tight_c: np.ndarray
    ub_actual_c: np.ndarray
    flow_min_kg_s: float
    flow_max_kg_s: float
    r_u_w: np.ndarray
    r_d_w: np.ndarray
    amb_forecast_c: np.ndarray
    solar_forecast_wm2: np.ndarray
    q_int_w: np.ndarray
    energy_eur_kwh: np.ndarray
    t_sat_nom_c: float = 17.0
    t_ref_c: float = 25.0
    pwa_segments: int = 4

    def __post_init__(self):
        for name in ("lb_c", "ub_tight_c", "ub_actual_c", "r_u_w", "r_d_w",
                     "amb_forecast_c", "solar_forecast_wm2", "q_int_w",
                     "energy_eur_kwh"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        n = self.horizon
        if n < 1:
            raise ClimateError("horizon must be >= 1 slot")
        for name in ("ub_tight_c", "ub_actual_c", "r_u_w", "r_d_w",
                     "amb_forecast_c", "solar_forecast_wm2", "q_int_w"):
            if len(getattr(self, name)) != n:
                raise ClimateError(f"{name} length != horizon")
        if np.any(self.ub_tight_c >= self.ub_actual_c):
            raise ClimateError("tightened bound must sit below the actual bound")
        if not self.flow_min_kg_s < self.flow_max_kg_s:
            raise ClimateError("empty flow band")

    @property
    def horizon(self) -> int:
        return len(self.lb_c)


@dataclass(frozen=True)
class MpcPlan:
    """Air-flow plan over the remaining horizon; the first slot is applied."""

    m_air_kg_s: np.ndarray
    p_b_w: np.ndarray
    slack_c: np.ndarray
    relaxed: bool
    solve_time_s: float
    cost_eur: float

    @property
    def first_flow(self) -> float:
        return float(self.m_air_kg_s[0])

    @property
    def first_power(self) -> float:
        return float(self.p_b_w[0])


def solve_mpc(problem: MpcProblem, est: EstimatorState, *,
              fan: FanModel, thermal: ThermalModel) -> MpcPlan:
    """Minimize energy cost over the horizon with reserves deliverable.

    Cost uses the chord piecewise-affine fan curve in epigraph form;
    deliverability of the committed capacities is enforced against the
    exact cubic curve, which is the tighter (safe) side.  Comfort uses a
    soft slack with a large penalty so an answer always exists.
    """
    t0 = time.perf_counter()
    n = problem.horizon
    a, b_m, b_amb, b_sol, b_int = thermal.slot_matrices(
        problem.slot_s, problem.t_sat_nom_c - problem.t_ref_c)
    powers, toep = trajectory_operator(a, b_m, n)
    forced = forced_response(powers, b_amb, b_sol, b_int,
                             problem.amb_forecast_c,
                             problem.solar_forecast_wm2,
                             problem.q_int_w, est.mean)

    m_lo, m_hi = problem.flow_min_kg_s, problem.flow_max_kg_s
    knots = np.linspace(m_lo, m_hi, problem.pwa_segments + 1)
    p_knots = np.array([fan.fan_power(m) for m in knots])
    seg_a = np.diff(p_knots) / np.diff(knots)
    seg_b = p_knots[:-1] - seg_a * knots[:-1]

    # per-slot deliverable power window from the exact cubic curve
    p_floor = fan.fan_power(m_lo) + problem.r_u_w
    p_ceil = fan.fan_power(m_hi) - problem.r_d_w
    clipped = p_floor > p_ceil
    if clipped.any():
        mid = 0.5 * (p_floor + p_ceil)
        p_floor = np.where(clipped, mid, p_floor)
        p_ceil = np.where(clipped, mid, p_ceil)

    # variables: m (n), p (n), slack (n)
    nv = 3 * n
    c = np.zeros(nv)
    slot_h = problem.slot_s / 3600.0
    c[n:2 * n] = problem.energy_eur_kwh * slot_h / 1000.0
    c[2 * n:] = SLACK_PENALTY_EUR

    a_ub_rows = []
    b_ub = []
    # epigraph: seg_a m - p <= -seg_b
    for k in range(n):
        for j in range(problem.pwa_segments):
            r = np.zeros(nv)
            r[k] = seg_a[j]
            r[n + k] = -1.0
            a_ub_rows.append(r)
            b_ub.append(-seg_b[j])
    # comfort: T_k - s_k <= ub_tight ; -T_k - s_k <= -lb
    for k in range(n):
        r = np.zeros(nv)
        r[:n] = toep[k]
        r[2 * n + k] = -1.0
        a_ub_rows.append(r)
        b_ub.append(problem.ub_tight_c[k] - forced[k])
        r = np.zeros(nv)
        r[:n] = -toep[k]
        r[2 * n + k] = -1.0
        a_ub_rows.append(r)
        b_ub.append(forced[k] - problem.lb_c[k])

    bounds = [(m_lo, m_hi)] * n
    bounds += [(float(p_floor[k]), float(p_ceil[k])) for k in range(n)]
    bounds += [(0.0, None)] * n

    res = linprog(c, A_ub=np.array(a_ub_rows), b_ub=np.array(b_ub),
                  bounds=bounds, method="highs")
    if not res.success:
        raise ClimateError(f"MPC solve failed: {res.message}")
    x = res.x
    slack = x[2 * n:]
    plan = MpcPlan(
        m_air_kg_s=x[:n].copy(),
        p_b_w=x[n:2 * n].copy(),
        slack_c=slack.copy(),
        relaxed=bool(np.any(slack > 1e-7) or clipped.any()),
        solve_time_s=time.perf_counter() - t0,
        cost_eur=float(c[n:2 * n] @ x[n:2 * n]),
    )
    return plan


# ---------------------------------------------------------------------------
# setpoint CSV interchange
# ---------------------------------------------------------------------------

def write_setpoint_csv(plan: MpcPlan, path, slot0: int = 0) -> None:
    if len(plan.m_air_kg_s) == 0:
        raise ClimateError("empty plan")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SETPOINT_HEADER + "\n")
        for i, (m, p) in enumerate(zip(plan.m_air_kg_s, plan.p_b_w)):
            fh.write(f"{slot0 + i},{m:.17g},{p:.17g}\n")


def read_setpoint_csv(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Returns (flows, powers, first slot index)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if header != SETPOINT_HEADER:
            raise ClimateError(f"bad header {header!r}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ClimateError(f"line {lineno}: expected 3 columns")
            try:
                rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError:
                raise ClimateError(f"line {lineno}: malformed number") from None
    if not rows:
        raise ClimateError("empty plan")
    slot0 = rows[0][0]
    return (np.array([r[1] for r in rows]), np.array([r[2] for r in rows]), slot0)
