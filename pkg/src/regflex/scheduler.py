"""Level 1: day-ahead robust reserve capacity scheduling.

Maximizes reserve revenue minus energy cost over a 24 h day subject to
worst-case comfort.  Robustness is enforced on two envelope trajectories
with the regulation signal pinned at its extremes (+1 and -1) in every
slot; comfort must hold on both.  The fan power curve is replaced by its
piecewise-affine chord approximation, which makes the up-reserve side a
set of linear constraints.  The down-reserve power-to-flow mapping is
concave; it is handled by a sequential linear program that fixes a chord
segment per slot and re-solves until the assignment matches the
solution, which is always robust-safe and exact at the fixed point.
When the baseline flow is restricted to a discrete grid (cross-check
mode) the mapping is instead encoded exactly with segment-ordering
binaries and the problem is solved as a MILP.  Both paths use HiGHS.

Capacities are constant within each market hour; the baseline runs at
15-minute slots.  A quadratic tie-break stage picks the smoothest
baseline among revenue-optimal schedules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.optimize import milp, LinearConstraint, Bounds

from .plantsim import FanModel, ThermalModel, WeatherTrace

__all__ = [
    "ComfortCalendar",
    "Tariff",
    "ReserveSchedule",
    "ScheduleError",
    "InfeasibleSchedule",
    "schedule_reserves",
    "trajectory_operator",
    "write_reserve_csv",
    "read_reserve_csv",
    "write_baseline_csv",
    "read_baseline_csv",
]

RESERVE_HEADER = "hour_index,R_u_W,R_d_W"
BASELINE_HEADER = "slot_index,P_b_W,m_air_kg_s"


class ScheduleError(ValueError):
    pass


class InfeasibleSchedule(ScheduleError):
    """Comfort cannot be kept; names the first violated slot."""

    def __init__(self, first_slot: int, detail: str = ""):
        self.first_slot = first_slot
        super().__init__(
            f"reserve scheduling infeasible; first violated slot {first_slot}"
            + (f" ({detail})" if detail else "")
        )


# ---------------------------------------------------------------------------
# calendars, tariffs, schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComfortCalendar:
    """Per-slot zone temperature bounds in degC."""

    lb_c: np.ndarray
    ub_c: np.ndarray

    def __post_init__(self):
        lb = np.asarray(self.lb_c, dtype=float)
        ub = np.asarray(self.ub_c, dtype=float)
        lb.setflags(write=False)
        ub.setflags(write=False)
        object.__setattr__(self, "lb_c", lb)
        object.__setattr__(self, "ub_c", ub)
        if lb.shape != ub.shape:
            raise ScheduleError("calendar bounds must have equal length")
        if np.any(lb >= ub):
            raise ScheduleError("calendar needs lb < ub on every slot")

    @staticmethod
    def for_day(n_slots: int, setback: bool, slot_s: float = 900.0,
                work_start_h: float = 8.0, work_end_h: float = 18.0,
                work_band=(21.0, 25.0), setback_band=(12.0, 35.0)):
        """Working-hours band, optionally widened outside 08:00-18:00."""
        hours = np.arange(n_slots) * slot_s / 3600.0
        working = (hours >= work_start_h) & (hours < work_end_h)
        lo, hi = work_band
        slo, shi = setback_band if setback else work_band
        lb = np.where(working, lo, slo)
        ub = np.where(working, hi, shi)
        return ComfortCalendar(lb, ub)


@dataclass(frozen=True)
class Tariff:
    """Per-slot energy price and capacity payment, EUR/kWh."""

    energy_eur_kwh: np.ndarray
    capacity_eur_kwh: np.ndarray

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.energy_eur_kwh, dtype=float))
        c = np.atleast_1d(np.asarray(self.capacity_eur_kwh, dtype=float))
        if np.any(e < 0) or np.any(c < 0):
            raise ScheduleError("prices must be non-negative")
        e.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "energy_eur_kwh", e)
        object.__setattr__(self, "capacity_eur_kwh", c)

    @staticmethod
    def flat(n_slots: int, energy: float = 0.18, capacity: float = 0.198):
        return Tariff(np.full(n_slots, energy), np.full(n_slots, capacity))


@dataclass(frozen=True)
class ReserveSchedule:
    """Committed hourly capacities plus the slot-level baseline plan."""

    r_u_w: np.ndarray       # per hour
    r_d_w: np.ndarray       # per hour
    p_b_w: np.ndarray       # per slot
    m_air_kg_s: np.ndarray  # per slot
    symmetric: bool = False
    issued_at_s: float = 0.0
    objective_eur: float = math.nan

    def __post_init__(self):
        for name in ("r_u_w", "r_d_w", "p_b_w", "m_air_kg_s"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.r_u_w) != len(self.r_d_w):
            raise ScheduleError("up/down capacity series differ in length")
        if np.any(self.r_u_w < 0) or np.any(self.r_d_w < 0):
            raise ScheduleError("negative reserve capacity")
        if self.symmetric and not np.allclose(self.r_u_w, self.r_d_w):
            raise ScheduleError("symmetric schedule with unequal capacities")

    @property
    def slots_per_hour(self) -> int:
        return len(self.p_b_w) // len(self.r_u_w)

    def hour_of_slot(self, k: int) -> int:
        return k // self.slots_per_hour

    def capacities_at_slot(self, k: int) -> tuple[float, float]:
        h = self.hour_of_slot(k)
        return float(self.r_u_w[h]), float(self.r_d_w[h])


# ---------------------------------------------------------------------------
# linear slot dynamics helpers (shared with the climate MPC)
# ---------------------------------------------------------------------------

def trajectory_operator(a_slot: np.ndarray, b_vec: np.ndarray, n: int):
    """Room-temperature response of the slot dynamics over ``n`` slots.

    Returns (powers, toep) where ``powers[k] = A^k`` and ``toep`` is the
    lower-triangular map from per-slot scalar inputs (on input vector
    ``b_vec``) to the room temperature at the END of slots 1..n:
    T_end[k] = e0' A^(k+1) x0 + sum_i toep[k, i] * u_i + forced terms.
    """
    powers = [np.eye(2)]
    for _ in range(n):
        powers.append(a_slot @ powers[-1])
    toep = np.zeros((n, n))
    for k in range(1, n + 1):
        for i in range(k):
            toep[k - 1, i] = (powers[k - 1 - i] @ b_vec)[0]
    return powers, toep


def forced_response(powers, b_amb, b_sol, b_int, amb, sol, q_int, x0):
    """Free + exogenous room-temperature response at slot ends 1..n."""
    n = len(amb)
    d = np.outer(amb, b_amb) + np.outer(sol, b_sol) + np.outer(q_int, b_int)
    out = np.zeros(n)
    for k in range(1, n + 1):
        acc = powers[k] @ np.asarray(x0, dtype=float)
        for i in range(k):
            acc = acc + powers[k - 1 - i] @ d[i]
        out[k - 1] = acc[0]
    return out


# ---------------------------------------------------------------------------
# the robust scheduling MILP
# ---------------------------------------------------------------------------

@dataclass
class _Problem:
    """Index bookkeeping for the flat (MI)LP variable vector.

    The down-envelope increment variables (delta) and their ordering
    binaries (z) exist only in the exact discretized mode; the continuous
    mode expresses the down-envelope flow affinely through a fixed
    per-slot segment assignment instead.
    """

    n_slots: int
    n_hours: int
    n_seg: int
    n_grid: int = 0
    dn_milp: bool = True

    def __post_init__(self):
        K, S, V = self.n_slots, self.n_seg, self.n_grid
        ofs = 0
        def block(n):
            nonlocal ofs
            sl = slice(ofs, ofs + n)
            ofs += n
            return sl
        self.m = block(K)
        self.p = block(K)
        self.m_lo = block(K)          # up-envelope flows
        self.delta = block(K * S if self.dn_milp else 0)
        self.r_u = block(self.n_hours)
        self.r_d = block(self.n_hours)
        self.z = block(K * (S - 1) if self.dn_milp else 0)
        self.y = block(K * V)         # optional baseline flow-grid binaries
        # sequential-LP mode: comfort slack and baseline-pin slack, so a
        # pass with a stale segment assignment stays solvable
        self.s_dn = block(0 if self.dn_milp else K)
        self.s_pin = block(0 if self.dn_milp else K)
        self.n_var = ofs

    def d_idx(self, k, j):
        return self.delta.start + k * self.n_seg + j

    def z_idx(self, k, j):
        return self.z.start + k * (self.n_seg - 1) + j

    def y_idx(self, k, v):
        return self.y.start + k * self.n_grid + v


def schedule_reserves(
    thermal: ThermalModel,
    fan: FanModel,
    weather: WeatherTrace,
    q_int_w,
    calendar: ComfortCalendar,
    tariff: Tariff,
    *,
    symmetric: bool = False,
    x0=(23.0, 23.0),
    slot_s: float = 900.0,
    segments: int = 4,
    flow_bounds: tuple | None = None,
    zero_mean_relax: bool = False,
    t_sat_nom_c: float = 17.0,
    t_ref_c: float = 25.0,
    flow_grid=None,
    tie_break: bool = True,
    issued_at_s: float = 0.0,
    mip_rel_gap: float = 1e-9,
) -> ReserveSchedule:
    """Solve the day-ahead robust reserve scheduling problem.

    ``weather`` supplies the forecast series (actuals are ignored here);
    ``q_int_w`` is the per-slot internal-gain forecast.  Capacities are
    hourly, the baseline is per slot.  ``flow_bounds`` restricts the
    level-1 flow band (default (0.25, 0.95) kg/s, tighter than the fan's
    physical range; the climate MPC later relaxes it).  With
    ``zero_mean_relax`` the envelope deviation from the baseline
    accumulates at half weight, reflecting an approximately zero-mean
    signal.  ``flow_grid`` restricts the *baseline* flow to the given
    discrete values (used by the enumeration cross-checks).

    Raises InfeasibleSchedule naming the first slot whose comfort bound
    cannot be met even with zero reserves.
    """
    K = len(calendar.lb_c)
    sph = int(round(3600.0 / slot_s))
    if K % sph:
        raise ScheduleError("slots must tile whole hours")
    H = K // sph
    amb, sol = weather.forecast_slice(0, K)
    if len(amb) < K:
        raise ScheduleError("forecast does not cover the target day")
    q_int = np.asarray(q_int_w, dtype=float)
    c_k = np.broadcast_to(tariff.energy_eur_kwh, (K,))
    lam_k = np.broadcast_to(tariff.capacity_eur_kwh, (K,))

    if flow_bounds is None:
        flow_bounds = (0.25, 0.95)
    m_min, m_max = flow_bounds
    if not (fan.min_flow - 1e-9 <= m_min < m_max <= fan.max_flow + 1e-9):
        raise ScheduleError("flow bounds outside the fan operating range")

    # PWA chords over the scheduler band
    knots = np.linspace(m_min, m_max, segments + 1)
    p_knots = np.array([fan.fan_power(m) for m in knots])
    seg_a = np.diff(p_knots) / np.diff(knots)
    seg_b = p_knots[:-1] - seg_a * knots[:-1]
    seg_pL = np.diff(p_knots)          # power length per segment
    seg_mL = np.diff(knots)            # flow length per segment
    inv_slope = seg_mL / seg_pL        # kg/s per W, decreasing (concave g)
    S = segments

    grid = None
    if flow_grid is not None:
        grid = np.asarray(flow_grid, dtype=float)
        if np.any(grid < m_min - 1e-9) or np.any(grid > m_max + 1e-9):
            raise ScheduleError("flow grid outside the flow band")
    V = 0 if grid is None else len(grid)

    a_slot, b_m, b_amb, b_sol, b_int = thermal.slot_matrices(
        slot_s, t_sat_nom_c - t_ref_c)
    powers, toep = trajectory_operator(a_slot, b_m, K)
    t_forced = forced_response(powers, b_amb, b_sol, b_int, amb, sol, q_int, x0)
    alpha = 0.5 if zero_mean_relax else 1.0

    dn_milp = grid is not None
    pb = _Problem(K, H, S, V, dn_milp=dn_milp)
    hour_of = [k // sph for k in range(K)]

    def build(assign_dn, assign_pin):
        """Constraint system for one pass.

        In the exact discretized mode both assignments are None: the
        down-envelope flow is modeled with ordered power increments and
        binaries, and the baseline power is tied to the grid exactly.  In
        the continuous sequential-LP mode ``assign_dn[i]`` fixes the chord
        segment whose line gives the down-envelope flow of slot i at
        p_i + R_d, and ``assign_pin[i]`` the segment whose line caps p_i
        from above (the epigraph chords cap it from below).  Every chord
        line is a supporting majorant of the concave power-to-flow
        inverse, so any down assignment over-estimates the envelope flow
        and is robust-safe; the assignment matching the solution's own
        operating point makes both exact.  Soft slacks keep a pass with a
        stale assignment solvable; they are driven to zero by a large
        penalty and checked after convergence.
        """
        rows, cols, vals, lo_c, hi_c = [], [], [], [], []
        row = 0

        def add_row(entries, lo, hi):
            nonlocal row
            for c, v in entries:
                rows.append(row)
                cols.append(c)
                vals.append(v)
            lo_c.append(lo)
            hi_c.append(hi)
            row += 1

        # --- baseline power vs flow --------------------------------------
        if grid is None:
            # epigraph: p_k >= a_j m_k + b_j
            for k in range(K):
                for j in range(S):
                    add_row([(pb.m.start + k, seg_a[j]), (pb.p.start + k, -1.0)],
                            -np.inf, -seg_b[j])
            if assign_pin is not None:
                # pin from above on the assigned chord so committed power
                # equals fan power and cannot inflate reserve headroom
                for k in range(K):
                    s = assign_pin[k]
                    add_row([(pb.p.start + k, 1.0),
                             (pb.m.start + k, -seg_a[s]),
                             (pb.s_pin.start + k, -1.0)], -np.inf, seg_b[s])
        else:
            p_grid = np.array([fan.fan_power(m) for m in grid])
            for k in range(K):
                add_row([(pb.y_idx(k, v), 1.0) for v in range(V)], 1.0, 1.0)
                add_row([(pb.m.start + k, 1.0)]
                        + [(pb.y_idx(k, v), -grid[v]) for v in range(V)], 0.0, 0.0)
                add_row([(pb.p.start + k, 1.0)]
                        + [(pb.y_idx(k, v), -p_grid[v]) for v in range(V)], 0.0, 0.0)

        # --- up-reserve envelope -----------------------------------------
        for k in range(K):
            h = hour_of[k]
            # PWA(m_lo_k) <= p_k - R_u_h
            for j in range(S):
                add_row([(pb.m_lo.start + k, seg_a[j]), (pb.p.start + k, -1.0),
                         (pb.r_u.start + h, 1.0)], -np.inf, -seg_b[j])
            # deliverability: p_k - R_u_h >= f(m_min)
            add_row([(pb.p.start + k, 1.0), (pb.r_u.start + h, -1.0)],
                    p_knots[0], np.inf)

        # --- down-reserve envelope ---------------------------------------
        if dn_milp:
            # p_k + R_d_h = P0 + sum_j delta_kj with ordered filling
            for k in range(K):
                h = hour_of[k]
                add_row([(pb.p.start + k, 1.0), (pb.r_d.start + h, 1.0)]
                        + [(pb.d_idx(k, j), -1.0) for j in range(S)],
                        p_knots[0], p_knots[0])
                for j in range(1, S):
                    # delta_kj opens only when segment j-1 is full
                    add_row([(pb.d_idx(k, j), 1.0),
                             (pb.z_idx(k, j - 1), -seg_pL[j])], -np.inf, 0.0)
                    add_row([(pb.d_idx(k, j - 1), -1.0),
                             (pb.z_idx(k, j - 1), seg_pL[j - 1])], -np.inf, 0.0)
        else:
            # deliverability: p_k + R_d_h <= f(m_max)
            for k in range(K):
                add_row([(pb.p.start + k, 1.0),
                         (pb.r_d.start + hour_of[k], 1.0)], -np.inf, p_knots[-1])

        # --- comfort on the three trajectories ---------------------------
        # baseline: lb <= T_k(m) <= ub ; up-envelope <= ub ; down >= lb
        # envelope input = (1 - alpha) m + alpha m_env
        for k in range(K):
            ub = calendar.ub_c[k] - t_forced[k]
            lb = calendar.lb_c[k] - t_forced[k]
            base = [(pb.m.start + i, toep[k, i]) for i in range(k + 1)
                    if toep[k, i] != 0.0]
            add_row(base, lb, ub)
            env_up = [(pb.m.start + i, (1.0 - alpha) * toep[k, i])
                      for i in range(k + 1) if toep[k, i] != 0.0]
            env_up += [(pb.m_lo.start + i, alpha * toep[k, i])
                       for i in range(k + 1) if toep[k, i] != 0.0]
            add_row(env_up, -np.inf, ub)
            if not dn_milp and assign_dn is None:
                continue  # energy-only seeding pass: down-envelope = baseline
            env_dn = [(pb.m.start + i, (1.0 - alpha) * toep[k, i])
                      for i in range(k + 1) if toep[k, i] != 0.0]
            const = 0.0
            for i in range(k + 1):
                if toep[k, i] == 0.0:
                    continue
                if dn_milp:
                    # m_dn_i = knots[0] + sum_j inv_slope_j delta_ij
                    const += alpha * toep[k, i] * knots[0]
                    env_dn += [(pb.d_idx(i, j), alpha * toep[k, i] * inv_slope[j])
                               for j in range(S)]
                else:
                    # m_dn_i = line of segment s at p_i + R_d
                    s = assign_dn[i]
                    c0 = knots[s] - p_knots[s] * inv_slope[s]
                    const += alpha * toep[k, i] * c0
                    env_dn += [(pb.p.start + i, alpha * toep[k, i] * inv_slope[s]),
                               (pb.r_d.start + hour_of[i],
                                alpha * toep[k, i] * inv_slope[s])]
            if not dn_milp:
                env_dn.append((pb.s_dn.start + k, 1.0))
            add_row(env_dn, lb - const, np.inf)

        # --- symmetry -----------------------------------------------------
        if symmetric:
            for h in range(H):
                add_row([(pb.r_u.start + h, 1.0), (pb.r_d.start + h, -1.0)],
                        0.0, 0.0)

        a_mat = sparse.coo_matrix(
            (vals, (rows, cols)), shape=(row, pb.n_var)).tocsr()
        return a_mat, lo_c, hi_c

    # --- bounds and integrality ------------------------------------------
    lo_v = np.full(pb.n_var, -np.inf)
    hi_v = np.full(pb.n_var, np.inf)
    lo_v[pb.m] = knots[0]
    hi_v[pb.m] = knots[-1]
    lo_v[pb.p] = 0.0
    hi_v[pb.p] = p_knots[-1]
    lo_v[pb.m_lo] = knots[0]
    hi_v[pb.m_lo] = knots[-1]
    if dn_milp:
        for k in range(K):
            for j in range(S):
                lo_v[pb.d_idx(k, j)] = 0.0
                hi_v[pb.d_idx(k, j)] = seg_pL[j]
        lo_v[pb.z] = 0.0
        hi_v[pb.z] = 1.0
    lo_v[pb.r_u] = 0.0
    hi_v[pb.r_u] = p_knots[-1] - p_knots[0]
    lo_v[pb.r_d] = 0.0
    hi_v[pb.r_d] = p_knots[-1] - p_knots[0]
    if not dn_milp:
        lo_v[pb.s_dn] = 0.0
        lo_v[pb.s_pin] = 0.0
    if V:
        lo_v[pb.y] = 0.0
        hi_v[pb.y] = 1.0
    integrality = np.zeros(pb.n_var)
    if dn_milp:
        integrality[pb.z] = 1
    if V:
        integrality[pb.y] = 1

    # --- objective (milp minimizes) --------------------------------------
    slot_h = slot_s / 3600.0
    c_vec = np.zeros(pb.n_var)
    c_vec[pb.p] = c_k * slot_h / 1000.0                   # energy cost
    cap_coef = -lam_k * slot_h / 1000.0                   # revenue per slot
    for k in range(K):
        h = hour_of[k]
        c_vec[pb.r_u.start + h] += cap_coef[k]
        c_vec[pb.r_d.start + h] += cap_coef[k]
    slack_pen = 1e5
    if not dn_milp:
        c_vec[pb.s_dn] = slack_pen
        c_vec[pb.s_pin] = slack_pen

    def solve(a_mat, lo_c, hi_c, hi_vb):
        res = milp(
            c=c_vec,
            constraints=LinearConstraint(a_mat, lo_c, hi_c),
            bounds=Bounds(lo_v, hi_vb),
            integrality=integrality,
            options={"mip_rel_gap": mip_rel_gap, "presolve": True},
        )
        if res.status == 2 or res.x is None:
            first = _first_infeasible_slot(toep, t_forced, calendar, knots)
            raise InfeasibleSchedule(first)
        if not res.success:
            raise ScheduleError(f"solver did not converge: {res.message}")
        return res.x

    if dn_milp:
        a_mat, lo_c, hi_c = build(None, None)
        x = solve(a_mat, lo_c, hi_c, hi_v)
    else:
        # sequential LP: an energy-only pass (reserves held at zero) seeds
        # the chord segment assignments, then the full problem is re-solved
        # until the assignments match the solution's own operating point
        hour_idx = np.asarray(hour_of)
        hi_seed = hi_v.copy()
        hi_seed[pb.r_u] = 0.0
        hi_seed[pb.r_d] = 0.0
        a_mat, lo_c, hi_c = build(None, None)
        x = solve(a_mat, lo_c, hi_c, hi_seed)
        assign_dn = assign_pin = None
        for _ in range(20):
            q = x[pb.p] + x[pb.r_d][hour_idx]
            new_dn = np.clip(
                np.searchsorted(p_knots, q, side="right") - 1, 0, S - 1)
            new_pin = np.clip(
                np.searchsorted(knots, x[pb.m], side="right") - 1, 0, S - 1)
            if (assign_dn is not None and np.array_equal(new_dn, assign_dn)
                    and np.array_equal(new_pin, assign_pin)):
                break
            assign_dn, assign_pin = new_dn, new_pin
            a_mat, lo_c, hi_c = build(assign_dn, assign_pin)
            x = solve(a_mat, lo_c, hi_c, hi_v)
        worst = float(np.max(np.concatenate([x[pb.s_dn], x[pb.s_pin]])))
        if worst > 1e-6:
            first = int(np.argmax(np.maximum(x[pb.s_dn], x[pb.s_pin])))
            raise InfeasibleSchedule(first, "comfort slack required")

    objective = -float(c_vec @ x)
    r_u = np.maximum(x[pb.r_u], 0.0)
    r_d = np.maximum(x[pb.r_d], 0.0)
    m_b = x[pb.m].copy()
    p_b = x[pb.p].copy()
    if symmetric:
        r_u = r_d = (r_u + r_d) / 2.0

    if tie_break and grid is None:
        m_b, p_b = _tie_break_baseline(
            pb, a_mat, lo_c, hi_c, lo_v, hi_v, c_vec, x, objective)

    return ReserveSchedule(
        r_u_w=r_u, r_d_w=r_d, p_b_w=p_b, m_air_kg_s=m_b,
        symmetric=symmetric, issued_at_s=issued_at_s, objective_eur=objective,
    )


def _first_infeasible_slot(toep, t_forced, calendar, knots) -> int:
    """Earliest slot whose bound fails even at the extreme constant flows."""
    K = len(t_forced)
    for k in range(K):
        t_max_cool = t_forced[k] + float(toep[k, : k + 1].sum()) * knots[-1]
        t_min_cool = t_forced[k] + float(toep[k, : k + 1].sum()) * knots[0]
        if t_min_cool > calendar.ub_c[k] + 1e-9 and t_max_cool > calendar.ub_c[k] + 1e-9:
            return k
        if t_max_cool < calendar.lb_c[k] - 1e-9 and t_min_cool < calendar.lb_c[k] - 1e-9:
            return k
    return 0


def _tie_break_baseline(pb, a_mat, lo_c, hi_c, lo_v, hi_v, c_vec, x_opt,
                        objective):
    """Among revenue-optimal schedules pick the smoothest baseline.

    Re-solves with capacities and binaries frozen at the stage-1 optimum,
    the objective pinned, and sum(P_b^2) minimized (convex QP).
    """
    import cvxpy as cp

    x = cp.Variable(pb.n_var)
    lo_c = np.asarray(lo_c)
    hi_c = np.asarray(hi_c)
    cons = []
    fin = np.isfinite(lo_c)
    if fin.any():
        cons.append(a_mat[fin] @ x >= lo_c[fin] - 1e-9)
    fin = np.isfinite(hi_c)
    if fin.any():
        cons.append(a_mat[fin] @ x <= hi_c[fin] + 1e-9)
    lo = lo_v.copy()
    hi = hi_v.copy()
    frozen = np.zeros(pb.n_var, dtype=bool)
    frozen[pb.r_u] = True
    frozen[pb.r_d] = True
    frozen[pb.z] = True
    frozen[pb.s_dn] = True
    frozen[pb.s_pin] = True
    lo[frozen] = x_opt[frozen]
    hi[frozen] = x_opt[frozen]
    cons += [x >= np.where(np.isfinite(lo), lo, -1e12),
             x <= np.where(np.isfinite(hi), hi, 1e12)]
    cons += [c_vec @ x <= -objective + 1e-7]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(x[pb.p])), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        return x_opt[pb.m].copy(), x_opt[pb.p].copy()
    if x.value is None:
        return x_opt[pb.m].copy(), x_opt[pb.p].copy()
    return np.asarray(x.value)[pb.m].copy(), np.asarray(x.value)[pb.p].copy()


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def write_reserve_csv(schedule: ReserveSchedule, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(RESERVE_HEADER + "\n")
        for h, (ru, rd) in enumerate(zip(schedule.r_u_w, schedule.r_d_w)):
            fh.write(f"{h},{ru:.17g},{rd:.17g}\n")


def write_baseline_csv(schedule: ReserveSchedule, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(BASELINE_HEADER + "\n")
        for k, (p, m) in enumerate(zip(schedule.p_b_w, schedule.m_air_kg_s)):
            fh.write(f"{k},{p:.17g},{m:.17g}\n")


def _read_rows(path, header, n_fields):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if first != header:
            raise ScheduleError(f"bad header {first!r}, expected {header!r}")
        out = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != n_fields:
                raise ScheduleError(f"line {lineno}: expected {n_fields} columns")
            try:
                out.append([float(p) for p in parts])
            except ValueError:
                raise ScheduleError(f"line {lineno}: malformed number") from None
    return out


def read_reserve_csv(path, baseline_path=None) -> ReserveSchedule:
    rows = _read_rows(path, RESERVE_HEADER, 3)
    if not rows:
        raise ScheduleError("empty reserve file")
    idx = [int(r[0]) for r in rows]
    if idx != list(range(len(rows))):
        raise ScheduleError("hour indices must run 0..H-1")
    r_u = np.array([r[1] for r in rows])
    r_d = np.array([r[2] for r in rows])
    if baseline_path is not None:
        p_b, m_air = read_baseline_csv(baseline_path)
    else:
        p_b = np.zeros(4 * len(rows))
        m_air = np.zeros(4 * len(rows))
    return ReserveSchedule(r_u_w=r_u, r_d_w=r_d, p_b_w=p_b, m_air_kg_s=m_air,
                           symmetric=bool(np.allclose(r_u, r_d)))


def read_baseline_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _read_rows(path, BASELINE_HEADER, 3)
    if not rows:
        raise ScheduleError("empty baseline file")
    idx = [int(r[0]) for r in rows]
    if idx != list(range(len(rows))):
        raise ScheduleError("slot indices must run 0..K-1")
    return (np.array([r[1] for r in rows]), np.array([r[2] for r in rows]))
