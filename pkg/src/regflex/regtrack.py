"""Level 3: switched feedforward / PI fan-speed control at a 4 s cadence.

Rapid desired-power changes are served by inverting the fan power curve
(feedforward); flat stretches and low-capacity hours fall back to a PI
loop with gains scheduled against the local slope of the cubic curve.
Transfers between the two modes are bumpless: the integrator tracks the
applied command whenever the PI is not in charge.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .plantsim import FanModel

__all__ = [
    "TrackerConfig",
    "TrackerState",
    "TrackingRecord",
    "desired_power",
    "track_step",
    "initial_tracker",
    "read_tracking_csv",
    "TRACKING_HEADER",
]

TRACKING_HEADER = "t_s,w,P_b_W,R_u_W,R_d_W,P_d_W,P_f_W,e_c_W,mode"


@dataclass(frozen=True)
class TrackerConfig:
    """Switch thresholds and the PI gain schedule.

    ``switch_frac`` is the per-tick desired-power change (fraction of
    rated) that trips feedforward; ``reserve_floor_w`` forces PI-only mode
    when the active capacity is low.  PI gains are expressed as a loop
    gain divided by the fan curve's local power-per-speed slope, which
    linearizes the cubic plant across the three operating bands.
    """

    switch_frac: float = 0.05
    reserve_floor_w: float = 50.0
    kp_loop: float = 0.45       # dimensionless proportional loop gain
    ki_loop: float = 0.12       # 1/tick integral loop gain
    band_edges_frac: tuple = (0.2, 0.6)  # power bands, fraction of rated
    dt_s: float = 4.0

    def gains(self, p_operating_w: float, fan: FanModel) -> tuple[float, float]:
        """(kp, ki) in speed-fraction per W at the operating power band."""
        frac = p_operating_w / fan.rated_power_w
        if frac < self.band_edges_frac[0]:
            center = self.band_edges_frac[0] / 2
        elif frac < self.band_edges_frac[1]:
            center = sum(self.band_edges_frac) / 2
        else:
            center = (self.band_edges_frac[1] + 1.0) / 2
        flow, _ = fan.fan_power_inverse(center * fan.rated_power_w)
        slope = fan.power_slope(flow) * fan.rated_flow_kg_s  # W per speed unit
        return self.kp_loop / slope, self.ki_loop / slope


@dataclass(frozen=True)
class TrackerState:
    """State carried between 4 s ticks."""

    mode: str = "pi"            # "feedforward" or "pi"
    integrator: float = 0.0     # speed-fraction units
    last_speed_cmd: float = 0.0
    last_p_d_w: float = 0.0
    last_hour: int = -1


@dataclass(frozen=True)
class TrackingRecord:
    """One tick of regulation tracking; ``e_c_w = p_d_w - p_f_w`` exactly."""

    t_s: float
    w: float
    p_b_w: float
    r_u_w: float
    r_d_w: float
    p_d_w: float
    p_f_w: float
    e_c_w: float
    mode: str
    clamped: bool = False

    def csv_row(self) -> str:
        return (f"{self.t_s:.1f},{self.w:.6f},{self.p_b_w:.6f},{self.r_u_w:.6f},"
                f"{self.r_d_w:.6f},{self.p_d_w:.6f},{self.p_f_w:.6f},"
                f"{self.e_c_w:.6f},{self.mode}")


def read_tracking_csv(path) -> list[TrackingRecord]:
    """Parse an emitted tracking file back into records."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if header != TRACKING_HEADER:
            raise ValueError(f"bad tracking header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 9:
                raise ValueError(f"line {lineno}: expected 9 columns")
            try:
                nums = [float(x) for x in parts[:8]]
            except ValueError:
                raise ValueError(f"line {lineno}: malformed number") from None
            records.append(TrackingRecord(*nums, mode=parts[8]))
    if not records:
        raise ValueError("tracking file has no rows")
    return records


def initial_tracker(fan: FanModel, p_b_w: float = 0.0) -> TrackerState:
    flow, _ = fan.fan_power_inverse(p_b_w)
    speed = min(max(fan.speed_from_flow(flow), fan.min_speed_fraction),
                fan.max_speed_fraction)
    return TrackerState(mode="pi", integrator=speed, last_speed_cmd=speed,
                        last_p_d_w=p_b_w)


def desired_power(p_b_w: float, w: float, r_u_w: float, r_d_w: float,
                  fan: FanModel) -> tuple[float, bool]:
    """Desired fan power for signal value ``w`` around baseline ``p_b_w``.

    Negative w draws on the up-capacity (consumption decrease), positive w
    on the down-capacity.  The result saturates at the fan's deliverable
    power range; the flag reports that clamping occurred.
    """
    if r_u_w < 0 or r_d_w < 0:
        raise ValueError("reserve capacities must be non-negative")
    if abs(w) > 1.0:
        raise ValueError("w out of range [-1, 1]")
    p_d = p_b_w + (w * r_d_w if w >= 0.0 else w * r_u_w)
    lo = fan.fan_power(fan.min_flow)
    hi = fan.fan_power(fan.max_flow)
    clamped = p_d < lo or p_d > hi
    return min(max(p_d, lo), hi), clamped


def track_step(state: TrackerState, p_d_w: float, p_f_w: float,
               fan: FanModel, config: TrackerConfig,
               active_capacity_w: float = float("inf"),
               hour: int = 0) -> tuple[float, TrackerState]:
    """One 4 s control tick; returns (speed command, next state).

    Feedforward (static curve inverse) is used on ticks where the desired
    power jumps by at least the switch threshold; otherwise the PI acts on
    the control error with scheduled gains.  The integrator is kept at a
    bumpless value during feedforward ticks and is reset at hour
    boundaries, where step changes in committed capacity would otherwise
    be integrated as spurious error.
    """
    kp, ki = config.gains(p_d_w, fan)
    e_c = p_d_w - p_f_w

    hour_rollover = hour != state.last_hour and state.last_hour >= 0
    dp = abs(p_d_w - state.last_p_d_w)
    use_ff = dp >= config.switch_frac * fan.rated_power_w
    if active_capacity_w < config.reserve_floor_w:
        use_ff = False

    if use_ff:
        flow, _ = fan.fan_power_inverse(p_d_w)
        speed = fan.speed_from_flow(flow)
        speed = min(max(speed, fan.min_speed_fraction), fan.max_speed_fraction)
        integ = speed - kp * e_c  # bumpless hand-back to the PI
        mode = "feedforward"
    else:
        integ = state.integrator
        if hour_rollover:
            # re-anchor on the curve inverse; capacities step at the hour
            flow, _ = fan.fan_power_inverse(p_d_w)
            integ = fan.speed_from_flow(flow) - kp * e_c
        integ = integ + ki * e_c
        speed = kp * e_c + integ
        lo, hi = fan.min_speed_fraction, fan.max_speed_fraction
        clamped = min(max(speed, lo), hi)
        if clamped != speed:
            integ = clamped - kp * e_c  # back-calculation anti-windup
        speed = clamped
        mode = "pi"

    new = TrackerState(mode=mode, integrator=integ, last_speed_cmd=speed,
                       last_p_d_w=p_d_w, last_hour=hour)
    return speed, new
