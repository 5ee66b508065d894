"""Deterministic discrete-time simulation of one building cell's HVAC plant.

One cell = a two-state zone thermal model (room air + lumped mass), a
variable-speed supply fan with a cubic power curve and a high-speed heat
gain, a supply-air-temperature PI loop actuating a cooling valve, and a
two-stage chiller cycling on a chilled-water storage tank.

All internal units are SI (W, kg/s, degC, s).  The plant advances on a
fixed 4 s tick; instances are independent and share no mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "ThermalModel",
    "FanModel",
    "ChilledWaterLoop",
    "PlantState",
    "WeatherTrace",
    "SimulationFault",
    "initial_state",
    "step_plant",
    "sat_loop_step",
    "cooling_power",
    "cooling_power_gpm_f",
]

CP_AIR = 1005.0    # J/(kg K)
CP_WATER = 4186.0  # J/(kg K)

# raw-unit cooling bookkeeping: kg/s water -> US gpm, kelvin -> Fahrenheit span
KGS_TO_GPM = 15.850323141 / 0.9982
K_TO_F = 1.8


class SimulationFault(RuntimeError):
    """Raised when the plant state goes non-finite."""


# ---------------------------------------------------------------------------
# thermal model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThermalModel:
    """Two-state RC zone model with a bilinear supply-air cooling term.

    Continuous-time balance, discretized by forward Euler at ``step_s``:

      C_room dT_room/dt = ua_room_amb (T_amb - T_room)
                          + h_room_mass (T_mass - T_room)
                          + m_air cp_air (T_sat - T_room)
                          + k_solar I_solar + k_internal q_int
      C_mass dT_mass/dt = h_room_mass (T_room - T_mass)
                          + ua_mass_amb (T_amb - T_mass)

    With zero inputs and all temperatures equal the state is a fixed point,
    and the free dynamics are strictly stable for any positive parameters
    with a sufficiently small step.
    """

    c_room: float = 3.0e6        # J/K, zone air + fast furnishings
    c_mass: float = 4.0e7        # J/K, lumped structural mass
    ua_room_amb: float = 600.0    # W/K
    ua_mass_amb: float = 40.0    # W/K
    h_room_mass: float = 300.0   # W/K
    k_solar: float = 1.0         # m^2 effective aperture
    k_internal: float = 1.0      # dimensionless gain on q_int
    step_s: float = 4.0

    def free_matrix(self, m_air: float = 0.0) -> np.ndarray:
        """Discrete state-transition matrix at ``step_s`` for fixed air flow."""
        a11 = -(self.ua_room_amb + self.h_room_mass + m_air * CP_AIR) / self.c_room
        a12 = self.h_room_mass / self.c_room
        a21 = self.h_room_mass / self.c_mass
        a22 = -(self.h_room_mass + self.ua_mass_amb) / self.c_mass
        return np.eye(2) + self.step_s * np.array([[a11, a12], [a21, a22]])

    def step(self, t_room, t_mass, t_amb, solar, q_int, m_air, t_sat):
        """One Euler step; returns (t_room, t_mass) at t + step_s."""
        q_room = (
            self.ua_room_amb * (t_amb - t_room)
            + self.h_room_mass * (t_mass - t_room)
            + m_air * CP_AIR * (t_sat - t_room)
            + self.k_solar * solar
            + self.k_internal * q_int
        )
        q_mass = self.h_room_mass * (t_room - t_mass) + self.ua_mass_amb * (
            t_amb - t_mass
        )
        return (
            t_room + self.step_s * q_room / self.c_room,
            t_mass + self.step_s * q_mass / self.c_mass,
        )

    def slot_matrices(self, slot_s: float, delta_t_cool: float):
        """Aggregate the tick dynamics to one slot with slot-constant inputs.

        The bilinear cooling term is frozen at a constant temperature
        difference ``delta_t_cool = T_sat - T_ref`` so the slot model is
        linear in air flow.  Returns (A, b_flow, b_amb, b_solar, b_int) with

          x+ = A x + b_flow * m_air + b_amb * T_amb + b_solar * I + b_int * q_int
        """
        n = round(slot_s / self.step_s)
        if abs(n * self.step_s - slot_s) > 1e-9 or n < 1:
            raise ValueError("slot must be an integer multiple of the tick")
        a_tick = self.free_matrix(0.0)
        b = np.array(
            [
                [CP_AIR * delta_t_cool / self.c_room,
                 self.ua_room_amb / self.c_room,
                 self.k_solar / self.c_room,
                 self.k_internal / self.c_room],
                [0.0,
                 self.ua_mass_amb / self.c_mass,
                 0.0,
                 0.0],
            ]
        ) * self.step_s
        # A_slot = A^n ; B_slot = (I + A + ... + A^(n-1)) B
        a_slot = np.eye(2)
        acc = np.zeros((2, 2))
        for _ in range(n):
            acc = acc + a_slot
            a_slot = a_tick @ a_slot
        b_slot = acc @ b
        return a_slot, b_slot[:, 0], b_slot[:, 1], b_slot[:, 2], b_slot[:, 3]


# ---------------------------------------------------------------------------
# fan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FanModel:
    """Supply fan: linear speed-to-flow gain and a power curve cubic in flow.

    The default curve is the pure fan-law cube through the rated point
    (2500 W at rated flow).  ``power_coeffs`` are (c1, c2, c3) for
    P = c1 m + c2 m^2 + c3 m^3; the curve must be strictly increasing on
    the operating range so the feedforward inverse exists.
    """

    rated_power_w: float = 2500.0
    rated_flow_kg_s: float = 1.5     # flow at speed fraction 1.0
    power_coeffs: tuple | None = None
    min_speed_fraction: float = 0.10
    max_speed_fraction: float = 0.90
    heat_gain_onset: float = 0.50       # no SAT rise at or below this speed
    heat_gain_peak_c: float = 1.0       # degC rise at max_speed_fraction
    heat_gain_reject_frac: float = 0.3  # share the SAT loop senses and rejects

    def __post_init__(self):
        if self.power_coeffs is None:
            c3 = self.rated_power_w / self.rated_flow_kg_s**3
            object.__setattr__(self, "power_coeffs", (0.0, 0.0, c3))
        c1, c2, c3 = self.power_coeffs
        grid = np.linspace(self.min_flow, self.max_flow, 64)
        slope = c1 + 2 * c2 * grid + 3 * c3 * grid**2
        if np.any(slope <= 0):
            raise ValueError("fan power curve not strictly increasing on range")

    @property
    def min_flow(self) -> float:
        return self.min_speed_fraction * self.rated_flow_kg_s

    @property
    def max_flow(self) -> float:
        return self.max_speed_fraction * self.rated_flow_kg_s

    def flow_from_speed(self, speed: float) -> float:
        return speed * self.rated_flow_kg_s

    def speed_from_flow(self, flow: float) -> float:
        return flow / self.rated_flow_kg_s

    def fan_power(self, flow: float) -> float:
        """Electric fan power (W) at air mass flow ``flow`` (kg/s)."""
        c1, c2, c3 = self.power_coeffs
        return c1 * flow + c2 * flow**2 + c3 * flow**3

    def power_slope(self, flow: float) -> float:
        """dP/dm (W per kg/s) of the power curve at ``flow``."""
        c1, c2, c3 = self.power_coeffs
        return c1 + 2 * c2 * flow + 3 * c3 * flow**2

    def fan_power_inverse(self, power: float) -> tuple[float, bool]:
        """Flow (kg/s) whose fan power equals ``power`` (W).

        Out-of-range powers clamp to the nearest operating-range endpoint;
        the second return value flags that clamping occurred.
        """
        lo, hi = self.min_flow, self.max_flow
        p_lo, p_hi = self.fan_power(lo), self.fan_power(hi)
        if power <= p_lo:
            return lo, power < p_lo - 1e-9
        if power >= p_hi:
            return hi, power > p_hi + 1e-9
        c1, c2, c3 = self.power_coeffs
        if c1 == 0.0 and c2 == 0.0:
            return (power / c3) ** (1.0 / 3.0), False
        flow = brentq(lambda m: self.fan_power(m) - power, lo, hi,
                      xtol=1e-13, rtol=8.9e-16)
        return flow, False

    def heat_gain_c(self, speed: float) -> float:
        """Raw SAT rise (degC) from fan rotation, piecewise linear in speed."""
        if speed <= self.heat_gain_onset:
            return 0.0
        span = self.max_speed_fraction - self.heat_gain_onset
        return self.heat_gain_peak_c * min(1.0, (speed - self.heat_gain_onset) / span)

    def residual_heat_gain_c(self, speed: float) -> float:
        """SAT rise left over after the SAT loop rejects its sensed share."""
        return (1.0 - self.heat_gain_reject_frac) * self.heat_gain_c(speed)

    def piecewise_affine(self, segments: int = 4):
        """Chord segments (slopes, intercepts, knot flows) of the power curve.

        For a convex curve the chords interpolate the power exactly at the
        knots and over-estimate it in between, so max_j(a_j m + b_j) is a
        convex piecewise-affine stand-in the scheduler can use in epigraph
        form.
        """
        knots = np.linspace(self.min_flow, self.max_flow, segments + 1)
        p = np.array([self.fan_power(m) for m in knots])
        a = np.diff(p) / np.diff(knots)
        b = p[:-1] - a * knots[:-1]
        return a, b, knots


# ---------------------------------------------------------------------------
# chilled water loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChilledWaterLoop:
    """SAT PI loop, cooling coil, storage tank and two-stage chiller.

    The PI regulates the coil-outlet temperature to ``sat_setpoint_c`` by
    moving the valve.  The sensed share of the fan heat gain enters the
    mixed air upstream of the coil (and is integrated away); the residual
    share is added downstream of the sensor and shows up as a steady SAT
    offset the loop cannot remove.  The chiller cycles on tank temperature
    with a staged hysteresis thermostat; per-stage electric power is
    constant.  Tank size and stage ratings are design values.
    """

    sat_setpoint_c: float = 17.0
    kp_valve: float = 0.25            # valve fraction per degC
    ki_valve: float = 0.010           # valve fraction per (degC s)
    q_coil_gain_w_k: float = 800.0    # coil capacity per K of (T_mix - T_tank)
    approach_c: float = 1.0           # coil outlet floor above tank temp
    coil_tau_s: float = 30.0          # coil outlet first-order lag
    m_cw_max_kg_s: float = 0.6
    tank_c_j_k: float = 1.0e5         # ~24 kg of water
    stage_cool_w: tuple = (0.0, 5000.0, 10000.0)
    stage_power_w: tuple = (0.0, 1500.0, 3000.0)
    tank_low_c: float = 9.95
    tank_high_c: float = 10.05
    stage_spread_c: float = 0.15      # threshold offset between stages
    # loop state
    t_tank_c: float = 10.0
    stage: int = 0
    valve: float = 0.0
    integrator: float = 0.0
    t_coil_out_c: float = 17.0
    t_chws_c: float = 10.0
    t_chwr_c: float = 10.0
    m_cw_kg_s: float = 0.0

    def __post_init__(self):
        if not (0 <= self.stage <= 2):
            raise ValueError("chiller stage must be 0, 1, or 2")
        if self.tank_low_c >= self.tank_high_c:
            raise ValueError("tank hysteresis band must have low < high")


def sat_loop_step(loop: ChilledWaterLoop, m_air: float, fan_heat_c: float,
                  dt: float, t_return_c: float = 23.0,
                  reject_frac: float = 0.3) -> ChilledWaterLoop:
    """Advance the SAT loop one tick of ``dt`` seconds.

    ``fan_heat_c`` is the raw fan heat gain; ``reject_frac`` of it enters
    upstream of the coil (sensed, rejected at steady state), the rest is
    added after the sensor.  ``t_return_c`` is the recirculated return-air
    temperature.  Returns the loop with valve, coil, tank, chiller stage
    and water-side temperatures advanced.
    """
    t_mix = t_return_c + reject_frac * fan_heat_c

    # coil outlet target for the current valve position
    if m_air > 1e-9 and t_mix > loop.t_tank_c:
        q_cap = loop.valve * loop.q_coil_gain_w_k * (t_mix - loop.t_tank_c)
        drop = q_cap / (m_air * CP_AIR)
        target = max(t_mix - drop, loop.t_tank_c + loop.approach_c)
        target = min(target, t_mix)
        alpha = 1.0 - math.exp(-dt / loop.coil_tau_s)
        t_co = loop.t_coil_out_c + alpha * (target - loop.t_coil_out_c)
    else:
        t_co = loop.t_coil_out_c  # no air past the sensor: hold

    # PI with back-calculation anti-windup; positive error opens the valve
    err = t_co - loop.sat_setpoint_c
    integ = loop.integrator + loop.ki_valve * err * dt
    valve = loop.kp_valve * err + integ
    valve_clamped = min(max(valve, 0.0), 1.0)
    if valve != valve_clamped:
        integ = valve_clamped - loop.kp_valve * err
    valve = valve_clamped

    # heat actually extracted from the air this tick
    q_coil = max(m_air * CP_AIR * (t_mix - t_co), 0.0)

    # water side
    m_cw = valve * loop.m_cw_max_kg_s
    t_chs = loop.t_tank_c
    t_chr = t_chs + (q_coil / (m_cw * CP_WATER) if m_cw > 1e-9 else 0.0)

    # tank balance and staged thermostat
    t_tank = loop.t_tank_c + dt * (q_coil - loop.stage_cool_w[loop.stage]) / loop.tank_c_j_k
    stage = loop.stage
    if stage < 2 and t_tank >= loop.tank_high_c + loop.stage_spread_c * stage:
        stage += 1
    elif stage > 0 and t_tank <= loop.tank_low_c + loop.stage_spread_c * (stage - 1):
        stage -= 1

    return replace(
        loop,
        t_tank_c=t_tank,
        stage=stage,
        valve=valve,
        integrator=integ,
        t_coil_out_c=t_co,
        t_chws_c=t_chs,
        t_chwr_c=t_chr,
        m_cw_kg_s=m_cw,
    )


def cooling_power(loop: ChilledWaterLoop) -> float:
    """Thermal cooling power (W) from the chilled-water side."""
    return loop.m_cw_kg_s * CP_WATER * (loop.t_chwr_c - loop.t_chws_c)


def cooling_power_gpm_f(loop: ChilledWaterLoop) -> float:
    """Raw-unit variant m_cw * dT in gpm * F, for report parity."""
    return (loop.m_cw_kg_s * KGS_TO_GPM) * (loop.t_chwr_c - loop.t_chws_c) * K_TO_F


# ---------------------------------------------------------------------------
# plant state and stepping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantState:
    """Full simulated HVAC state of one cell at time ``t_s``."""

    t_s: float
    t_room_c: float
    t_mass_c: float
    t_sat_c: float
    m_air_kg_s: float
    fan_speed: float
    fan_power_w: float
    loop: ChilledWaterLoop
    fan_energy_wh: float = 0.0
    cooling_energy_wh: float = 0.0
    cooling_gpm_f_s: float = 0.0  # time integral of the raw-unit cooling rate


def initial_state(thermal: ThermalModel, fan: FanModel, t_room_c: float = 23.0,
                  t_mass_c: float | None = None,
                  loop: ChilledWaterLoop | None = None) -> PlantState:
    if t_mass_c is None:
        t_mass_c = t_room_c
    if loop is None:
        loop = ChilledWaterLoop()
    return PlantState(
        t_s=0.0,
        t_room_c=t_room_c,
        t_mass_c=t_mass_c,
        t_sat_c=loop.sat_setpoint_c,
        m_air_kg_s=0.0,
        fan_speed=0.0,
        fan_power_w=0.0,
        loop=loop,
    )


def step_plant(state: PlantState, fan_speed_cmd: float, weather: tuple,
               internal_gain_w: float, dt: float, *,
               thermal: ThermalModel, fan: FanModel) -> PlantState:
    """Advance the whole plant one tick.

    ``weather`` is the slot sample ``(t_amb_c, solar_wm2)``.  The fan speed
    follows the command through a one-tick first-order actuator lag; SAT
    loop, chiller and thermal state then advance, and the energy
    accumulators are updated by the trapezoidal rule.
    """
    if abs(dt - thermal.step_s) > 1e-9:
        raise ValueError("dt must equal the thermal model tick")
    if not 0.0 <= fan_speed_cmd <= fan.max_speed_fraction + 1e-12:
        raise ValueError(f"fan speed command {fan_speed_cmd} outside [0, max]")
    t_amb, solar = weather

    # actuator lag: one-tick first-order filter
    alpha = 1.0 - math.exp(-1.0)
    speed = state.fan_speed + alpha * (fan_speed_cmd - state.fan_speed)
    m_air = fan.flow_from_speed(speed)
    p_fan = fan.fan_power(m_air)

    gain_raw = fan.heat_gain_c(speed)
    loop = sat_loop_step(state.loop, m_air, gain_raw, dt,
                         t_return_c=state.t_room_c,
                         reject_frac=fan.heat_gain_reject_frac)
    t_sat = loop.t_coil_out_c + (1.0 - fan.heat_gain_reject_frac) * gain_raw

    t_room, t_mass = thermal.step(
        state.t_room_c, state.t_mass_c, t_amb, solar, internal_gain_w,
        state.m_air_kg_s, state.t_sat_c,
    )

    p_cool_prev = cooling_power(state.loop)
    p_cool = cooling_power(loop)
    gpm_f_prev = cooling_power_gpm_f(state.loop)
    gpm_f = cooling_power_gpm_f(loop)
    new = PlantState(
        t_s=state.t_s + dt,
        t_room_c=t_room,
        t_mass_c=t_mass,
        t_sat_c=t_sat,
        m_air_kg_s=m_air,
        fan_speed=speed,
        fan_power_w=p_fan,
        loop=loop,
        fan_energy_wh=state.fan_energy_wh
        + 0.5 * (state.fan_power_w + p_fan) * dt / 3600.0,
        cooling_energy_wh=state.cooling_energy_wh
        + 0.5 * (p_cool_prev + p_cool) * dt / 3600.0,
        cooling_gpm_f_s=state.cooling_gpm_f_s
        + 0.5 * (gpm_f_prev + gpm_f) * dt,
    )
    for v in (new.t_room_c, new.t_mass_c, new.t_sat_c, new.m_air_kg_s,
              new.fan_power_w, loop.t_tank_c, loop.valve):
        if not math.isfinite(v):
            raise SimulationFault(f"non-finite plant state at t={new.t_s}: {new}")
    if new.m_air_kg_s < 0:
        raise SimulationFault(f"negative air flow at t={new.t_s}")
    return new


# ---------------------------------------------------------------------------
# weather
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeatherTrace:
    """Slot-resolution ambient temperature and solar irradiance.

    Holds both the realized series and the forecast series used by the
    controllers; both must cover the same horizon at the same slot period.
    Values are held constant within a slot.
    """

    slot_s: float
    amb_c: np.ndarray
    solar_wm2: np.ndarray
    amb_forecast_c: np.ndarray
    solar_forecast_wm2: np.ndarray

    def __post_init__(self):
        for name in ("amb_c", "solar_wm2", "amb_forecast_c", "solar_forecast_wm2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.amb_c)
        if any(len(getattr(self, k)) != n for k in
               ("solar_wm2", "amb_forecast_c", "solar_forecast_wm2")):
            raise ValueError("actual and forecast series must have equal length")

    def __len__(self):
        return len(self.amb_c)

    def slot_index(self, t_s: float) -> int:
        i = int(t_s // self.slot_s)
        return min(max(i, 0), len(self) - 1)

    def actual_at(self, t_s: float) -> tuple[float, float]:
        i = self.slot_index(t_s)
        return float(self.amb_c[i]), float(self.solar_wm2[i])

    def forecast_slice(self, slot0: int, n: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(slot0, slot0 + n)
        return self.amb_forecast_c[sl], self.solar_forecast_wm2[sl]
