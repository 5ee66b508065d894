"""Day-ahead reserve scheduling walkthrough.

Solves the same forecast day four ways and prints the committed hourly
capacities, showing how the night setback and the symmetry requirement
change what the fan can sell.

Run:  python demos/schedule_a_day.py
"""

import numpy as np

from regflex import harness
from regflex.plantsim import FanModel, ThermalModel
from regflex.scheduler import ComfortCalendar, Tariff, schedule_reserves


def main():
    ss = np.random.SeedSequence(0)
    _, _, seed_weather = ss.spawn(3)
    weather = harness.synthetic_weather(1, seed_weather)
    q_int = harness.internal_gain_series(harness.SLOTS_PER_DAY, 4500.0, 2400.0)
    thermal, fan = ThermalModel(), FanModel()
    tariff = Tariff.flat(harness.SLOTS_PER_DAY)

    variants = [
        ("setback, asymmetric", True, False),
        ("setback, symmetric", True, True),
        ("no setback, asymmetric", False, False),
        ("no setback, symmetric", False, True),
    ]
    results = {}
    for name, setback, symmetric in variants:
        cal = ComfortCalendar.for_day(harness.SLOTS_PER_DAY, setback)
        sched = schedule_reserves(thermal, fan, weather, q_int, cal, tariff,
                                  symmetric=symmetric)
        results[name] = sched
        total = float(np.sum(sched.r_u_w + sched.r_d_w))
        print(f"{name:24s}  objective {sched.objective_eur:8.3f} EUR  "
              f"total capacity {total / 1000.0:7.2f} kWh-equivalent")

    print("\nhourly capacities, setback asymmetric case (W):")
    sched = results["setback, asymmetric"]
    print(f"{'hour':>4s} {'R_u':>8s} {'R_d':>8s}")
    for h, (ru, rd) in enumerate(zip(sched.r_u_w, sched.r_d_w)):
        print(f"{h:4d} {ru:8.1f} {rd:8.1f}")

    base = results["no setback, asymmetric"]
    gain = (np.sum(sched.r_u_w + sched.r_d_w)
            / max(np.sum(base.r_u_w + base.r_d_w), 1e-9) - 1.0)
    print(f"\nnight setback raises daily committed capacity by "
          f"{100.0 * gain:.0f}%: the widened 12-35 degC band lets the zone "
          f"drift overnight, so the whole flow band becomes sellable.")
    print("down capacity dominates up capacity: raising fan power (cooling "
          "harder) is almost always comfortable, while cutting it risks the "
          "25 degC ceiling.")


if __name__ == "__main__":
    main()
