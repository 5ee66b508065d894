"""Command-line entry points for the regflex pipeline.

Subcommands mirror the pipeline stages: ``schedule`` runs only the
day-ahead reserve scheduler, ``run`` executes a full experiment,
``score`` and ``sweep`` post-process an existing tracking file without
re-running any simulation, and ``replay`` materializes a delayed-held
signal trace.  Exit codes: 0 success, 2 configuration error, 3 runtime
fault.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import harness, perfmetrics, regsignal, regtrack, scheduler
from .harness import ConfigError, ExperimentConfig, RunFault, load_config
from .plantsim import FanModel, ThermalModel
from .scheduler import ComfortCalendar, Tariff

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regflex",
        description="HVAC frequency-regulation simulation and control stack")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="day-ahead reserve scheduling only")
    p.add_argument("--config", required=True)
    p.add_argument("--date", type=int, default=0, help="day index of the run")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--symmetric", action="store_true", default=None)
    grp.add_argument("--asymmetric", dest="symmetric", action="store_false")
    grp2 = p.add_mutually_exclusive_group()
    grp2.add_argument("--setback", action="store_true", default=None)
    grp2.add_argument("--no-setback", dest="setback", action="store_false")

    p = sub.add_parser("run", help="full paired-cell experiment")
    p.add_argument("--config", required=True)

    p = sub.add_parser("score", help="PJM scores from an existing tracking file")
    p.add_argument("--tracking", required=True)
    p.add_argument("--reserves", default=None)
    p.add_argument("--out", default="scores.csv")

    p = sub.add_parser("sweep", help="reserve-threshold tracking-metric sweep")
    p.add_argument("--tracking", required=True)
    p.add_argument("--thresholds", default="0,50,100,200",
                   help="comma-separated capacity floors in W")
    p.add_argument("--out", default="sweep.csv")

    p = sub.add_parser("replay", help="delayed-held signal trace to CSV")
    p.add_argument("--signal", required=True)
    p.add_argument("--period", type=float, default=4.0)
    p.add_argument("--delay-mean", type=float, default=2.89)
    p.add_argument("--delay-p95", type=float, default=2.99)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="held.csv")
    return parser


def _cmd_schedule(args) -> int:
    cfg = load_config(args.config)
    if args.symmetric is not None:
        cfg = dataclasses.replace(cfg, symmetric=args.symmetric)
    if args.setback is not None:
        cfg = dataclasses.replace(cfg, setback=args.setback)
    day = args.date
    if not 0 <= day < cfg.duration_days:
        raise ConfigError(f"date index {day} outside run of {cfg.duration_days} days")
    ss = np.random.SeedSequence(cfg.seed)
    _, _, seed_weather = ss.spawn(3)
    weather = harness.synthetic_weather(
        cfg.duration_days, seed_weather, amb_mean_c=cfg.amb_mean_c,
        amb_swing_c=cfg.amb_swing_c, solar_peak_wm2=cfg.solar_peak_wm2,
        noise_c=cfg.weather_noise_c, forecast_bias_c=cfg.forecast_bias_c)
    n_slots = cfg.duration_days * harness.SLOTS_PER_DAY
    q_int = harness.internal_gain_series(n_slots, cfg.q_int_work_w, cfg.q_int_base_w)
    slot0 = day * harness.SLOTS_PER_DAY
    from .plantsim import WeatherTrace
    day_weather = WeatherTrace(
        harness.SLOT_S,
        weather.amb_c[slot0:slot0 + harness.SLOTS_PER_DAY],
        weather.solar_wm2[slot0:slot0 + harness.SLOTS_PER_DAY],
        weather.amb_forecast_c[slot0:slot0 + harness.SLOTS_PER_DAY],
        weather.solar_forecast_wm2[slot0:slot0 + harness.SLOTS_PER_DAY])
    calendar = ComfortCalendar.for_day(harness.SLOTS_PER_DAY, cfg.setback)
    tariff = Tariff.flat(harness.SLOTS_PER_DAY, cfg.energy_eur_kwh,
                         cfg.capacity_eur_kwh)
    sched = scheduler.schedule_reserves(
        ThermalModel(), FanModel(rated_power_w=cfg.fan_rated_power_a_w),
        day_weather, q_int[slot0:slot0 + harness.SLOTS_PER_DAY],
        calendar, tariff, symmetric=cfg.symmetric,
        segments=cfg.scheduler_segments,
        flow_bounds=(cfg.level1_flow_min_kg_s, cfg.level1_flow_max_kg_s),
        zero_mean_relax=cfg.zero_mean_relax)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scheduler.write_reserve_csv(sched, out / "reserve.csv")
    scheduler.write_baseline_csv(sched, out / "schedule.csv")
    print(f"wrote {out / 'reserve.csv'} and {out / 'schedule.csv'}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    artifacts = harness.run_experiment(cfg)
    print(f"run complete: artifacts in {artifacts.out_dir}")
    return EXIT_OK


def _cmd_score(args) -> int:
    records = regtrack.read_tracking_csv(args.tracking)
    t = np.array([r.t_s for r in records])
    p_d = np.array([r.p_d_w for r in records])
    p_f = np.array([r.p_f_w for r in records])
    r_tot = np.array([r.r_u_w + r.r_d_w for r in records])
    n_hours = int(np.floor((t[-1] - t[0]) / 3600.0)) + 1
    t0 = float(t[0])
    caps = [float(r_tot[(t >= t0 + 3600.0 * h) & (t < t0 + 3600.0 * (h + 1))]
                  .max(initial=0.0)) for h in range(n_hours)]
    scores = perfmetrics.pjm_scores(t, p_d, p_f, caps, t0_s=t0)
    harness.write_scores_csv(scores, args.out)
    print(f"wrote {args.out} ({len(scores)} hours)")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    records = regtrack.read_tracking_csv(args.tracking)
    try:
        thresholds = sorted(float(x) for x in args.thresholds.split(","))
    except ValueError:
        raise ConfigError(f"bad thresholds list {args.thresholds!r}") from None
    sweep = perfmetrics.reserve_threshold_sweep(records, thresholds)
    harness.write_sweep_csv(sweep, args.out)
    print(f"wrote {args.out} ({len(sweep)} thresholds)")
    return EXIT_OK


def _cmd_replay(args) -> int:
    sig = regsignal.load_signal_csv(args.signal)
    sig = regsignal.downsample(sig, args.period)
    delay = regsignal.DelayModel(mean_s=args.delay_mean, p95_s=args.delay_p95,
                                 seed=args.seed)
    ticks = np.arange(len(sig)) * args.period + sig.t[0]
    held = regsignal.held_values(sig, delay, ticks)
    regsignal.write_signal_csv(
        regsignal.RegulationSignal(ticks, held), args.out)
    print(f"wrote {args.out} ({len(held)} ticks)")
    return EXIT_OK


_COMMANDS = {
    "schedule": _cmd_schedule,
    "run": _cmd_run,
    "score": _cmd_score,
    "sweep": _cmd_sweep,
    "replay": _cmd_replay,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, regsignal.SignalError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunFault, RuntimeError) as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
