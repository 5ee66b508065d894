"""regflex: desk-scale HVAC frequency-regulation simulation and control.

A three-level hierarchical controller (day-ahead robust reserve
scheduler, 15-minute climate MPC with a Kalman filter, 4-second switched
fan tracker) running against a deterministic simulated HVAC plant, with
tracking metrics and PJM-style performance scoring.
"""

from .climatectl import EstimatorState, MpcPlan, MpcProblem, kf_update, solve_mpc
from .harness import ExperimentConfig, RunArtifacts, load_config, run_experiment
from .perfmetrics import (PjmScore, TrackingMetrics, average_scores,
                          efficiency_report, pjm_scores,
                          reserve_threshold_sweep, tracking_metrics)
from .plantsim import (ChilledWaterLoop, FanModel, PlantState, ThermalModel,
                       WeatherTrace, initial_state, step_plant)
from .regsignal import (DelayModel, RegulationSignal, downsample, held_values,
                        load_signal_csv, replay, write_signal_csv)
from .regtrack import (TrackerConfig, TrackerState, TrackingRecord,
                       desired_power, initial_tracker, track_step)
from .scheduler import (ComfortCalendar, InfeasibleSchedule, ReserveSchedule,
                        Tariff, read_reserve_csv, schedule_reserves,
                        write_baseline_csv, write_reserve_csv)

__version__ = "1.0.0"
