"""Post-processing an existing run without re-simulating.

Takes the tracking trace of a finished experiment (runs a quick one if
none is given), recomputes the hourly market scores from the CSV alone,
and sweeps the reserve-threshold filter to show how tracking-error
statistics change when only well-committed hours are counted.

Run:  python demos/score_and_sweep.py [tracking.csv]
"""

import sys
from pathlib import Path

import numpy as np

from regflex import perfmetrics, regtrack
from regflex.harness import ExperimentConfig, run_experiment
from regflex.perfmetrics import pjm_scores, reserve_threshold_sweep


def main():
    if len(sys.argv) > 1:
        tracking = Path(sys.argv[1])
    else:
        print("no tracking file given; running a fixed-reserve day first ...")
        art = run_experiment(ExperimentConfig(
            seed=7, reserve_mode="fixed", benchmark_mode="off",
            out_dir="demo_out/sweep"))
        tracking = art.tracking_csv

    records = regtrack.read_tracking_csv(tracking)
    t = np.array([r.t_s for r in records])
    p_d = np.array([r.p_d_w for r in records])
    p_f = np.array([r.p_f_w for r in records])
    r_tot = np.array([r.r_u_w + r.r_d_w for r in records])
    n_hours = int(np.floor((t[-1] - t[0]) / 3600.0)) + 1
    caps = [float(r_tot[(t >= 3600.0 * h) & (t < 3600.0 * (h + 1))]
                  .max(initial=0.0)) for h in range(n_hours)]

    scores = pjm_scores(t, p_d, p_f, caps, t0_s=float(t[0]))
    avg = perfmetrics.average_scores(scores)
    print(f"\n{len(records)} samples, {avg['n_valid']} scored hours, "
          f"average S_tot {avg['s_tot']:.3f}")
    print(f"{'hour':>4s} {'S_c':>6s} {'S_d':>6s} {'S_p':>6s} {'S_tot':>6s}")
    for s in scores:
        if s.valid:
            print(f"{s.hour:4d} {s.s_c:6.3f} {s.s_d:6.3f} {s.s_p:6.3f} "
                  f"{s.s_tot:6.3f}")

    print("\nreserve-threshold sweep (hours with at least this much "
          "committed capacity):")
    print(f"{'thr W':>8s} {'MAE W':>8s} {'RMSE W':>8s} {'rel-to-cap':>11s} "
          f"{'samples':>8s}")
    for thr, m, size in reserve_threshold_sweep(records,
                                                [0.0, 50.0, 100.0, 200.0]):
        if m is None:
            print(f"{thr:8.0f} {'-':>8s} {'-':>8s} {'-':>11s} {size:8d}")
        else:
            print(f"{thr:8.0f} {m.e_mae_w:8.2f} {m.e_rmse_w:8.2f} "
                  f"{m.e_r_mape:11.4f} {size:8d}")


if __name__ == "__main__":
    main()
