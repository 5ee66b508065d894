"""Experiment orchestration: paired-cell simulation, cadences, artifacts.

One experiment runs two independent building cells against the same
weather and internal gains.  Cell A provides frequency regulation; cell B
is the benchmark (regulation-ready, energy-efficient, or disabled).  The
clock is purely simulated and advances in 4 s ticks; 15 min and daily
events fire on tick multiples.  All interchange happens through CSV
files with fixed headers, and a manifest records the configuration hash
and cadence counts so runs can be audited for determinism.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import climatectl, perfmetrics, plantsim, regsignal, regtrack, scheduler
from .climatectl import EstimatorState, MpcProblem, solve_mpc
from .plantsim import ChilledWaterLoop, FanModel, ThermalModel, WeatherTrace
from .regsignal import DelayModel, RegulationSignal
from .regtrack import TrackerConfig, TrackingRecord
from .scheduler import ComfortCalendar, ReserveSchedule, Tariff

__all__ = [
    "ExperimentConfig",
    "RunArtifacts",
    "ConfigError",
    "RunFault",
    "load_config",
    "run_experiment",
    "synthetic_signal",
    "synthetic_weather",
    "internal_gain_series",
    "write_scores_csv",
    "write_sweep_csv",
    "MEASURE_HEADER",
    "FORECAST_HEADER",
    "SCORES_HEADER",
    "SWEEP_HEADER",
]

TICK_S = 4.0
SLOT_S = 900.0
SLOTS_PER_DAY = 96
TICKS_PER_DAY = 21600
TICKS_PER_SLOT = 225

MEASURE_HEADER = "t_s,T_room_C,T_sat_C,m_air_kg_s,P_fan_W,valve_frac,T_chws_C,T_chwr_C,m_cw_kg_s"
FORECAST_HEADER = "t_s,T_amb_C,solar_Wm2"
SCORES_HEADER = "hour,S_c,S_d,S_p,S_tot,tau_star_s,valid"
SWEEP_HEADER = "threshold_W,e_me_W,e_mae_W,e_rmse_W,e_t_mape,e_r_mape,n"


class ConfigError(ValueError):
    pass


class RunFault(RuntimeError):
    """A module fault during the run; carries tick and module context."""

    def __init__(self, tick: int, module: str, detail: str):
        super().__init__(f"tick {tick}, module {module}: {detail}")
        self.tick = tick
        self.module = module


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_BOOL = {"true": True, "yes": True, "1": True,
         "false": False, "no": False, "0": False}


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment settings; every field maps to one config-file key.

    ``seed`` is mandatory and feeds every random stream through spawned
    sub-seeds, so two runs with equal configs are bit-identical.
    ``benchmark_mode`` selects what cell B does: ``regulation-ready``
    schedules reserves but feeds a zero signal; ``energy-efficient``
    plans with zero reserves; ``off`` disables cell B entirely.
    """

    seed: int
    duration_days: int = 1
    benchmark_mode: str = "regulation-ready"
    symmetric: bool = False
    setback: bool = True
    zero_mean_relax: bool = False
    reserve_mode: str = "scheduled"       # scheduled | fixed | zero
    fixed_reserve_frac: float = 0.30
    forecast_bias_c: float = 0.0
    model_mismatch_days: int = 0
    model_mismatch_factor: float = 1.0
    delay_kind: str = "lognormal"         # lognormal | constant | none
    delay_mean_s: float = 2.89
    delay_p95_s: float = 2.99
    delay_cap_s: float = 5.0
    signal_csv: str = ""
    signal_period_s: float = 2.0
    amb_mean_c: float = 24.5
    amb_swing_c: float = 3.5
    solar_peak_wm2: float = 500.0
    weather_noise_c: float = 0.3
    q_int_base_w: float = 2400.0
    q_int_work_w: float = 4500.0
    fan_rated_power_a_w: float = 2500.0
    fan_rated_power_b_w: float = 2500.0
    energy_eur_kwh: float = 0.18
    capacity_eur_kwh: float = 0.198
    level1_flow_min_kg_s: float = 0.25
    level1_flow_max_kg_s: float = 0.95
    level2_flow_min_kg_s: float = 0.225
    level2_flow_max_kg_s: float = 1.045
    ub_tight_c: float = 24.0
    scheduler_segments: int = 4
    out_dir: str = "out"

    def __post_init__(self):
        if self.duration_days < 1:
            raise ConfigError("duration_days must be >= 1")
        if self.benchmark_mode not in ("regulation-ready", "energy-efficient", "off"):
            raise ConfigError(f"unknown benchmark_mode {self.benchmark_mode!r}")
        if self.reserve_mode not in ("scheduled", "fixed", "zero"):
            raise ConfigError(f"unknown reserve_mode {self.reserve_mode!r}")
        if self.delay_kind not in ("lognormal", "constant", "none"):
            raise ConfigError(f"unknown delay_kind {self.delay_kind!r}")
        if self.signal_csv and not Path(self.signal_csv).exists():
            raise ConfigError(f"signal file not found: {self.signal_csv}")
        if not 0.0 <= self.fixed_reserve_frac <= 1.0:
            raise ConfigError("fixed_reserve_frac must be in [0, 1]")
        if self.model_mismatch_factor <= 0:
            raise ConfigError("model_mismatch_factor must be positive")

    def canonical_bytes(self) -> bytes:
        d = dataclasses.asdict(self)
        d.pop("out_dir")  # where artifacts land does not change what they hold
        return json.dumps(d, sort_keys=True).encode()

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


def load_config(path) -> ExperimentConfig:
    """Parse a flat ``key = value`` config file into an ExperimentConfig.

    Lines starting with ``#`` and blank lines are ignored.  Unknown keys
    and a missing ``seed`` are configuration errors: seeds are mandatory,
    there is no entropy default.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    raw: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        typ = fields[key].type
        try:
            if typ == "bool":
                raw[key] = _BOOL[value.lower()]
            elif typ == "int":
                raw[key] = int(value)
            elif typ == "float":
                raw[key] = float(value)
            else:
                raw[key] = value
        except (KeyError, ValueError):
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
    if "seed" not in raw:
        raise ConfigError("seed is mandatory; refusing to default to entropy")
    try:
        return ExperimentConfig(**raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# synthetic inputs
# ---------------------------------------------------------------------------

def synthetic_signal(duration_s: float, seed, period_s: float = 2.0) -> RegulationSignal:
    """Energy-neutral AR(1) regulation signal clipped to [-1, 1].

    Each whole-hour block is de-meaned before clipping, mimicking the
    dynamic signal's approximate energy neutrality per market hour.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s / period_s))
    if n < 2:
        raise ConfigError("signal duration too short")
    w = np.empty(n)
    w[0] = 0.0
    a = 0.98
    scale = 0.5 * math.sqrt(1.0 - a * a)
    noise = rng.standard_normal(n - 1)
    for k in range(1, n):
        w[k] = a * w[k - 1] + scale * noise[k - 1]
    per_hour = max(int(round(3600.0 / period_s)), 1)
    for start in range(0, n, per_hour):
        block = w[start:start + per_hour]
        block -= block.mean()
    np.clip(w, -1.0, 1.0, out=w)
    t = np.arange(n) * period_s
    return RegulationSignal(t, w)


def _bias_profile(hours: np.ndarray) -> np.ndarray:
    """Daily 0..1 weight for forecast-bias injection: ramps 06-10, off by 22."""
    h = np.mod(hours, 24.0)
    up = np.clip((h - 6.0) / 4.0, 0.0, 1.0)
    down = np.clip((22.0 - h) / 2.0, 0.0, 1.0)
    return np.minimum(up, down)


def synthetic_weather(n_days: int, seed, *, amb_mean_c: float = 24.5,
                      amb_swing_c: float = 3.5, solar_peak_wm2: float = 500.0,
                      noise_c: float = 0.3, forecast_bias_c: float = 0.0,
                      slot_s: float = SLOT_S) -> WeatherTrace:
    """Sinusoidal diurnal weather with seeded noise on the realized series.

    The forecast is the smooth profile; the actual adds noise plus the
    configured bias (actual warmer than forecast for positive bias).
    """
    rng = np.random.default_rng(seed)
    n = int(round(n_days * 86400.0 / slot_s))
    hours = np.arange(n) * slot_s / 3600.0
    amb_fc = amb_mean_c + amb_swing_c * np.sin(2.0 * math.pi * (hours - 9.0) / 24.0)
    solar_fc = np.maximum(
        0.0, solar_peak_wm2 * np.sin(math.pi * (np.mod(hours, 24.0) - 6.0) / 12.0))
    noise = rng.standard_normal(n) * noise_c
    # slow-roll the noise so consecutive slots stay correlated
    kernel = np.array([0.25, 0.5, 0.25])
    noise = np.convolve(noise, kernel, mode="same")
    amb = amb_fc + noise + forecast_bias_c * _bias_profile(hours)
    return WeatherTrace(slot_s, amb, solar_fc, amb_fc, solar_fc)


def internal_gain_series(n_slots: int, q_work_w: float,
                         q_base_w: float = 2400.0, slot_s: float = SLOT_S,
                         work_start_h: float = 8.0, work_end_h: float = 18.0) -> np.ndarray:
    """Scheduled internal load: heater base load always on, occupancy extra
    during working hours."""
    hours = np.mod(np.arange(n_slots) * slot_s / 3600.0, 24.0)
    working = (hours >= work_start_h) & (hours < work_end_h)
    return np.where(working, q_work_w, q_base_w)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunArtifacts:
    """Paths of every file an experiment emitted, plus the manifest."""

    out_dir: Path
    reserve_csv: Path
    schedule_csv: Path
    setpoint_csv: Path
    measure_csv: Path
    tracking_csv: Path
    forecast_csv: Path
    report_csv: Path
    scores_csv: Path
    sweep_csv: Path
    manifest_json: Path
    benchmark_dir: Path | None = None


def write_scores_csv(scores, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SCORES_HEADER + "\n")
        for s in scores:
            fh.write(f"{s.hour},{s.s_c:.17g},{s.s_d:.17g},{s.s_p:.17g},"
                     f"{s.s_tot:.17g},{s.tau_star_s:.17g},{int(s.valid)}\n")


def write_sweep_csv(sweep, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for thr, m, size in sweep:
            if m is None:
                fh.write(f"{thr:.17g},nan,nan,nan,nan,nan,0\n")
            else:
                fh.write(f"{thr:.17g},{m.e_me_w:.17g},{m.e_mae_w:.17g},"
                         f"{m.e_rmse_w:.17g},{m.e_t_mape:.17g},"
                         f"{m.e_r_mape:.17g},{size}\n")


def _write_forecast_csv(weather: WeatherTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(FORECAST_HEADER + "\n")
        for i in range(len(weather)):
            t = i * weather.slot_s
            fh.write(f"{t:.1f},{weather.amb_forecast_c[i]:.17g},"
                     f"{weather.solar_forecast_wm2[i]:.17g}\n")


# ---------------------------------------------------------------------------
# one cell's run state
# ---------------------------------------------------------------------------

class _Cell:
    """Mutable per-cell bookkeeping for the main loop."""

    def __init__(self, name: str, fan: FanModel, thermal: ThermalModel,
                 out_dir: Path):
        self.name = name
        self.fan = fan
        self.thermal = thermal
        self.out_dir = out_dir
        self.plant = plantsim.initial_state(thermal, fan)
        self.est = EstimatorState.initial()
        self.tracker = regtrack.initial_tracker(fan)
        self.schedule: ReserveSchedule | None = None
        self.slot_p_b_w = 0.0
        self.slot_flow = 0.0
        self.flow_accum = 0.0
        self.flow_ticks = 0
        self.tracking_rows: list[TrackingRecord] = []
        self.measure_rows: list[str] = []
        self.energy_t: list[float] = []
        self.energy_fan: list[float] = []
        self.energy_cool: list[float] = []
        self.energy_gpm_f: list[float] = []
        self.energy_troom: list[float] = []
        self.energy_chiller: list[float] = []
        self.slack_slots = 0
        self.mpc_solves = 0
        self.violations_25c = 0

    def record_tick(self, t_s: float):
        self.energy_t.append(t_s)
        self.energy_fan.append(self.plant.fan_power_w)
        self.energy_cool.append(plantsim.cooling_power(self.plant.loop))
        self.energy_gpm_f.append(plantsim.cooling_power_gpm_f(self.plant.loop))
        self.energy_troom.append(self.plant.t_room_c)
        loop = self.plant.loop
        self.energy_chiller.append(loop.stage_power_w[loop.stage])

    def measure_row(self, t_s: float) -> str:
        p = self.plant
        return (f"{t_s:.1f},{p.t_room_c:.17g},{p.t_sat_c:.17g},"
                f"{p.m_air_kg_s:.17g},{p.fan_power_w:.17g},{p.loop.valve:.17g},"
                f"{p.loop.t_chws_c:.17g},{p.loop.t_chwr_c:.17g},"
                f"{p.loop.m_cw_kg_s:.17g}")

    def energy_trace(self) -> perfmetrics.EnergyTrace:
        return perfmetrics.EnergyTrace(
            t_s=np.array(self.energy_t),
            fan_power_w=np.array(self.energy_fan),
            cooling_w=np.array(self.energy_cool),
            cooling_gpm_f=np.array(self.energy_gpm_f),
            t_room_c=np.array(self.energy_troom),
        )


# ---------------------------------------------------------------------------
# the experiment
# ---------------------------------------------------------------------------

def _controller_thermal(base: ThermalModel, cfg: ExperimentConfig,
                        day: int) -> ThermalModel:
    """Thermal model the controllers believe in; mismatched early days."""
    if day < cfg.model_mismatch_days and cfg.model_mismatch_factor != 1.0:
        f = cfg.model_mismatch_factor
        return replace(base, c_room=base.c_room * f,
                       ua_room_amb=base.ua_room_amb / f,
                       h_room_mass=base.h_room_mass / f)
    return base


def _commit_schedule(cell: _Cell, cfg: ExperimentConfig, weather: WeatherTrace,
                     q_int: np.ndarray, day: int, x0, issued_at_s: float,
                     benchmark_zero: bool) -> ReserveSchedule:
    """Level-1 commitment for ``day`` (96 slots starting at day*86400 s)."""
    slot0 = day * SLOTS_PER_DAY
    calendar = ComfortCalendar.for_day(SLOTS_PER_DAY, cfg.setback)
    tariff = Tariff.flat(SLOTS_PER_DAY, cfg.energy_eur_kwh, cfg.capacity_eur_kwh)
    day_weather = WeatherTrace(
        SLOT_S,
        weather.amb_c[slot0:slot0 + SLOTS_PER_DAY],
        weather.solar_wm2[slot0:slot0 + SLOTS_PER_DAY],
        weather.amb_forecast_c[slot0:slot0 + SLOTS_PER_DAY],
        weather.solar_forecast_wm2[slot0:slot0 + SLOTS_PER_DAY],
    )
    thermal = _controller_thermal(cell.thermal, cfg, day)
    sched = scheduler.schedule_reserves(
        thermal, cell.fan, day_weather, q_int[slot0:slot0 + SLOTS_PER_DAY],
        calendar, tariff,
        symmetric=cfg.symmetric,
        x0=x0,
        segments=cfg.scheduler_segments,
        flow_bounds=(cfg.level1_flow_min_kg_s, cfg.level1_flow_max_kg_s),
        zero_mean_relax=cfg.zero_mean_relax,
        issued_at_s=issued_at_s,
    )
    r_u, r_d = sched.r_u_w, sched.r_d_w
    if benchmark_zero or cfg.reserve_mode == "zero":
        r_u = np.zeros_like(r_u)
        r_d = np.zeros_like(r_d)
    elif cfg.reserve_mode == "fixed":
        cap = cfg.fixed_reserve_frac * cell.fan.rated_power_w
        r_u = np.full_like(r_u, cap)
        r_d = np.full_like(r_d, cap)
    return ReserveSchedule(r_u, r_d, sched.p_b_w, sched.m_air_kg_s,
                           symmetric=bool(np.allclose(r_u, r_d)),
                           issued_at_s=issued_at_s,
                           objective_eur=sched.objective_eur)


def _run_mpc(cell: _Cell, cfg: ExperimentConfig, weather: WeatherTrace,
             q_int: np.ndarray, slot: int, tick: int) -> None:
    """Level-2 solve at slot boundary ``slot``; applies the first setpoint."""
    day = slot // SLOTS_PER_DAY
    slot_in_day = slot % SLOTS_PER_DAY
    horizon = SLOTS_PER_DAY - slot_in_day
    sched = cell.schedule
    sph = sched.slots_per_hour
    idx = np.arange(slot_in_day, slot_in_day + horizon)
    r_u = sched.r_u_w[idx // sph]
    r_d = sched.r_d_w[idx // sph]
    calendar = ComfortCalendar.for_day(SLOTS_PER_DAY, cfg.setback)
    lb = calendar.lb_c[slot_in_day:slot_in_day + horizon]
    ub = calendar.ub_c[slot_in_day:slot_in_day + horizon]
    amb_fc, sol_fc = weather.forecast_slice(slot, horizon)
    thermal = _controller_thermal(cell.thermal, cfg, day)
    problem = MpcProblem(
        slot_s=SLOT_S,
        lb_c=lb,
        ub_tight_c=ub - (25.0 - cfg.ub_tight_c),
        ub_actual_c=ub,
        flow_min_kg_s=cfg.level2_flow_min_kg_s,
        flow_max_kg_s=cfg.level2_flow_max_kg_s,
        r_u_w=r_u,
        r_d_w=r_d,
        amb_forecast_c=amb_fc,
        solar_forecast_wm2=sol_fc,
        q_int_w=q_int[slot:slot + horizon],
        energy_eur_kwh=np.full(horizon, cfg.energy_eur_kwh),
    )
    try:
        plan = solve_mpc(problem, cell.est, fan=cell.fan, thermal=thermal)
    except climatectl.ClimateError as exc:
        raise RunFault(tick, "climatectl", str(exc)) from exc
    cell.mpc_solves += 1
    if plan.relaxed:
        cell.slack_slots += 1
    cell.slot_flow = plan.first_flow
    cell.slot_p_b_w = plan.first_power
    climatectl.write_setpoint_csv(plan, cell.out_dir / "setpoint.csv",
                                  slot0=slot_in_day)


def run_experiment(cfg: ExperimentConfig) -> RunArtifacts:
    """Deterministic end-to-end paired-cell experiment.

    Cadences: one schedule commit per simulated day (day 0 at t = 0, then
    at noon for the next day), one MPC solve per 15 min slot, one tracker
    tick per 4 s.  Returns the artifact paths; every run also writes a
    manifest carrying the config hash and the cadence counters.
    """
    out_root = Path(os.environ.get("REGFLEX_OUT_DIR", "")) if os.environ.get(
        "REGFLEX_OUT_DIR") else Path(cfg.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    bench_on = cfg.benchmark_mode != "off"
    bench_dir = out_root / "benchmark"
    if bench_on:
        bench_dir.mkdir(exist_ok=True)

    ss = np.random.SeedSequence(cfg.seed)
    seed_signal, seed_delay, seed_weather = ss.spawn(3)

    n_days = cfg.duration_days
    n_slots = n_days * SLOTS_PER_DAY
    n_ticks = n_days * TICKS_PER_DAY
    weather = synthetic_weather(
        n_days, seed_weather, amb_mean_c=cfg.amb_mean_c,
        amb_swing_c=cfg.amb_swing_c, solar_peak_wm2=cfg.solar_peak_wm2,
        noise_c=cfg.weather_noise_c, forecast_bias_c=cfg.forecast_bias_c)
    q_int = internal_gain_series(n_slots, cfg.q_int_work_w, cfg.q_int_base_w)

    if cfg.signal_csv:
        sig = regsignal.load_signal_csv(cfg.signal_csv)
    else:
        sig = synthetic_signal(n_days * 86400.0, seed_signal,
                               period_s=cfg.signal_period_s)
    sig4 = regsignal.downsample(sig, TICK_S)
    if cfg.delay_kind == "none":
        delay = DelayModel(kind="constant", mean_s=0.0, outlier_cap_s=None)
    else:
        delay = DelayModel(kind=cfg.delay_kind, mean_s=cfg.delay_mean_s,
                           p95_s=cfg.delay_p95_s,
                           seed=seed_delay.generate_state(1)[0],
                           outlier_cap_s=cfg.delay_cap_s)
    tick_times = np.arange(n_ticks) * TICK_S
    w_held = regsignal.held_values(sig4, delay, tick_times)

    fan_a = FanModel(rated_power_w=cfg.fan_rated_power_a_w)
    fan_b = FanModel(rated_power_w=cfg.fan_rated_power_b_w)
    thermal = ThermalModel()
    cell_a = _Cell("a", fan_a, thermal, out_root)
    cells = [cell_a]
    if bench_on:
        cells.append(_Cell("b", fan_b, thermal, bench_dir))

    tracker_cfg = TrackerConfig()
    commits = 0

    for cell in cells:
        bench_zero = cell.name == "b" and cfg.benchmark_mode == "energy-efficient"
        try:
            cell.schedule = _commit_schedule(
                cell, cfg, weather, q_int, 0, (23.0, 23.0), 0.0,
                benchmark_zero=bench_zero)
        except scheduler.ScheduleError as exc:
            raise RunFault(0, "scheduler", str(exc)) from exc
        if cell.name == "a":
            commits += 1
            scheduler.write_reserve_csv(cell.schedule, out_root / "reserve.csv")
            scheduler.write_baseline_csv(cell.schedule, out_root / "schedule.csv")

    noon_tick = TICKS_PER_DAY // 2
    for tick in range(n_ticks):
        t = tick * TICK_S
        day = tick // TICKS_PER_DAY
        slot = tick // TICKS_PER_SLOT

        if tick % TICKS_PER_SLOT == 0:
            for cell in cells:
                if slot > 0:
                    mean_flow = (cell.flow_accum / cell.flow_ticks
                                 if cell.flow_ticks else 0.0)
                    ctl_thermal = _controller_thermal(cell.thermal, cfg, day)
                    try:
                        cell.est, _ = climatectl.kf_update(
                            cell.est, cell.plant.t_room_c, mean_flow,
                            (float(weather.amb_c[slot - 1]),
                             float(weather.solar_wm2[slot - 1])),
                            float(q_int[slot - 1]), thermal=ctl_thermal)
                    except climatectl.ClimateError as exc:
                        raise RunFault(tick, "climatectl", str(exc)) from exc
                else:
                    cell.est = replace(
                        cell.est,
                        mean=np.array([cell.plant.t_room_c, cell.plant.t_mass_c]))
                cell.flow_accum = 0.0
                cell.flow_ticks = 0
                _run_mpc(cell, cfg, weather, q_int, slot, tick)
                cell.measure_rows.append(cell.measure_row(t))

        if tick % TICKS_PER_DAY == noon_tick and day + 1 < n_days:
            for cell in cells:
                bench_zero = (cell.name == "b"
                              and cfg.benchmark_mode == "energy-efficient")
                flows, _, _ = climatectl.read_setpoint_csv(
                    cell.out_dir / "setpoint.csv")
                x0 = climatectl.predict_open_loop(
                    cell.est.mean, flows,
                    weather.forecast_slice(slot, len(flows)),
                    q_int[slot:slot + len(flows)],
                    thermal=_controller_thermal(cell.thermal, cfg, day))
                x0_mid = (float(x0[-1]), float(x0[-1]))
                try:
                    cell.schedule = _commit_schedule(
                        cell, cfg, weather, q_int, day + 1, x0_mid,
                        issued_at_s=t, benchmark_zero=bench_zero)
                except scheduler.ScheduleError as exc:
                    raise RunFault(tick, "scheduler", str(exc)) from exc
                if cell.name == "a":
                    commits += 1
                    scheduler.write_reserve_csv(
                        cell.schedule, out_root / "reserve.csv")
                    scheduler.write_baseline_csv(
                        cell.schedule, out_root / "schedule.csv")

        hour = tick // 900  # 3600 s / 4 s
        hour_of_day = hour % 24
        for cell in cells:
            w = float(w_held[tick]) if cell.name == "a" else 0.0
            r_u, r_d = cell.schedule.capacities_at_slot(
                (slot % SLOTS_PER_DAY))
            p_f = cell.plant.fan_power_w
            p_d, clamped = regtrack.desired_power(
                cell.slot_p_b_w, w, r_u, r_d, cell.fan)
            active_cap = r_u if w < 0 else r_d
            speed, cell.tracker = regtrack.track_step(
                cell.tracker, p_d, p_f, cell.fan, tracker_cfg,
                active_capacity_w=active_cap, hour=hour)
            try:
                cell.plant = plantsim.step_plant(
                    cell.plant, speed, weather.actual_at(t),
                    float(q_int[slot]), TICK_S,
                    thermal=cell.thermal, fan=cell.fan)
            except plantsim.SimulationFault as exc:
                raise RunFault(tick, "plantsim", str(exc)) from exc
            cell.flow_accum += cell.plant.m_air_kg_s
            cell.flow_ticks += 1
            cell.record_tick(t + TICK_S)
            if cell.plant.t_room_c > 25.0:
                cell.violations_25c += 1
            cell.tracking_rows.append(TrackingRecord(
                t_s=t, w=w, p_b_w=cell.slot_p_b_w, r_u_w=r_u, r_d_w=r_d,
                p_d_w=p_d, p_f_w=p_f,
                e_c_w=p_d - p_f, mode=cell.tracker.mode, clamped=clamped))

    # ---- artifact emission -------------------------------------------------
    _write_forecast_csv(weather, out_root / "forecast.csv")
    for cell in cells:
        with open(cell.out_dir / "measure.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(MEASURE_HEADER + "\n")
            fh.write("\n".join(cell.measure_rows) + "\n")
        with open(cell.out_dir / "tracking.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(regtrack.TRACKING_HEADER + "\n")
            for r in cell.tracking_rows:
                fh.write(r.csv_row() + "\n")

    # score from the serialized trace, not the in-memory rows, so the CLI
    # post-processors reproduce these artifacts bit for bit
    rows = regtrack.read_tracking_csv(out_root / "tracking.csv")
    metrics = perfmetrics.tracking_metrics(rows)
    t_arr = np.array([r.t_s for r in rows])
    pd_arr = np.array([r.p_d_w for r in rows])
    pf_arr = np.array([r.p_f_w for r in rows])
    n_hours = n_days * 24
    # validity: an hour is scored only if capacity was committed in it
    r_tot = np.array([r.r_u_w + r.r_d_w for r in rows])
    cap_by_hour = [float(r_tot[(t_arr >= 3600.0 * h)
                               & (t_arr < 3600.0 * (h + 1))].max(initial=0.0))
                   for h in range(n_hours)]
    scores = perfmetrics.pjm_scores(t_arr, pd_arr, pf_arr, cap_by_hour)
    write_scores_csv(scores, out_root / "scores.csv")
    sweep = perfmetrics.reserve_threshold_sweep(rows, [0.0, 50.0, 100.0, 200.0])
    write_sweep_csv(sweep, out_root / "sweep.csv")

    avg = perfmetrics.average_scores(scores)
    report_lines = [
        ("e_me_W", metrics.e_me_w),
        ("e_mae_W", metrics.e_mae_w),
        ("e_rmse_W", metrics.e_rmse_w),
        ("e_t_mape", metrics.e_t_mape),
        ("e_r_mape", metrics.e_r_mape),
        ("s_tot_avg", avg["s_tot"]),
        ("n_valid_hours", avg["n_valid"]),
        ("violations_25c_ticks_a", cell_a.violations_25c),
        ("mpc_slack_slots_a", cell_a.slack_slots),
        ("fan_energy_a_Wh", cell_a.plant.fan_energy_wh),
        ("cooling_energy_a_Wh", cell_a.plant.cooling_energy_wh),
        ("mean_t_room_a_C", float(np.mean(cell_a.energy_troom))),
    ]
    ticks_per_hour = int(round(3600.0 / TICK_S))
    chiller_a = np.asarray(cell_a.energy_chiller).reshape(-1, ticks_per_hour)
    report_lines += [(f"chiller_h{h:02d}_a_W", float(v))
                     for h, v in enumerate(chiller_a.mean(axis=1))]
    if bench_on:
        cell_b = cells[1]
        eff = perfmetrics.efficiency_report(
            cell_a.energy_trace(), cell_b.energy_trace(),
            (TICK_S, n_ticks * TICK_S))
        chiller_b = np.asarray(cell_b.energy_chiller).reshape(-1, ticks_per_hour)
        report_lines += [
            ("fan_energy_b_Wh", cell_b.plant.fan_energy_wh),
            ("cooling_energy_b_Wh", cell_b.plant.cooling_energy_wh),
            ("mean_t_room_b_C", float(np.mean(cell_b.energy_troom))),
            ("fan_loss_pct", eff.fan_loss_pct),
            ("cooling_loss_pct", eff.cooling_loss_pct),
            ("violations_25c_ticks_b", cell_b.violations_25c),
        ]
        report_lines += [(f"chiller_h{h:02d}_b_W", float(v))
                         for h, v in enumerate(chiller_b.mean(axis=1))]
    with open(out_root / "report.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric,value\n")
        for name, value in report_lines:
            fh.write(f"{name},{value:.17g}\n")

    manifest = {
        "config_sha256": cfg.config_hash(),
        "duration_days": n_days,
        "schedule_commits": commits,
        "mpc_solves_per_cell": cell_a.mpc_solves,
        "level3_ticks": n_ticks,
        "cells": [c.name for c in cells],
        "files": sorted(str(p.relative_to(out_root))
                        for p in out_root.rglob("*.csv")),
    }
    with open(out_root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return RunArtifacts(
        out_dir=out_root,
        reserve_csv=out_root / "reserve.csv",
        schedule_csv=out_root / "schedule.csv",
        setpoint_csv=out_root / "setpoint.csv",
        measure_csv=out_root / "measure.csv",
        tracking_csv=out_root / "tracking.csv",
        forecast_csv=out_root / "forecast.csv",
        report_csv=out_root / "report.csv",
        scores_csv=out_root / "scores.csv",
        sweep_csv=out_root / "sweep.csv",
        manifest_json=out_root / "manifest.json",
        benchmark_dir=bench_dir if bench_on else None,
    )
