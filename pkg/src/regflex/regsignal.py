"""Normalized frequency-regulation signal handling.

Loads archived signal traces from CSV, decimates them to the controller
cadence, and replays them through a communication-delay model with
stale-sample-hold delivery semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RegulationSignal",
    "DelayModel",
    "SignalError",
    "load_signal_csv",
    "write_signal_csv",
    "downsample",
    "replay",
    "held_values",
]

SIGNAL_HEADER = "t_s,w"


class SignalError(ValueError):
    """Raised for malformed, out-of-range, or non-monotone signal data."""


@dataclass(frozen=True)
class RegulationSignal:
    """An immutable series of normalized regulation samples.

    ``t`` holds seconds since experiment start, strictly increasing.
    ``w`` holds dimensionless values in [-1, 1].
    """

    t: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        w = np.asarray(self.w, dtype=float)
        t.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "w", w)
        if t.shape != w.shape or t.ndim != 1:
            raise SignalError("t and w must be 1-D arrays of equal length")
        if len(t) == 0:
            raise SignalError("empty signal")
        if np.any(np.diff(t) <= 0):
            raise SignalError("sample times must be strictly increasing")
        if np.any(np.abs(w) > 1.0):
            raise SignalError("w out of range [-1, 1]")

    def __len__(self):
        return len(self.t)

    @property
    def period(self) -> float:
        """Sample period in seconds (requires at least two samples)."""
        if len(self.t) < 2:
            raise SignalError("period undefined for single-sample signal")
        return float(self.t[1] - self.t[0])

    def __iter__(self):
        return zip(self.t.tolist(), self.w.tolist())


@dataclass(frozen=True)
class DelayModel:
    """Communication-delay model for signal delivery.

    ``kind`` is one of ``constant``, ``lognormal``, ``empirical-histogram``.
    The lognormal family is fit to (mean_s, p95_s) by moment matching.
    Sampled delays are non-negative and, when ``outlier_cap_s`` is set,
    capped at that value.  The same seed always yields the same sequence.
    """

    kind: str = "lognormal"
    mean_s: float = 2.89
    p95_s: float = 2.99
    seed: int = 0
    outlier_cap_s: float | None = 5.0
    # empirical-histogram support: bin edges (len n+1) and weights (len n)
    hist_edges: tuple = field(default=())
    hist_weights: tuple = field(default=())

    _Z95 = 1.6448536269514722

    def __post_init__(self):
        if self.kind not in ("constant", "lognormal", "empirical-histogram"):
            raise ValueError(f"unknown delay kind: {self.kind!r}")
        if self.kind == "lognormal":
            if self.mean_s <= 0 or self.p95_s <= 0:
                raise ValueError("lognormal delay needs positive mean and p95")
            disc = self._Z95**2 + 2.0 * math.log(self.mean_s / self.p95_s)
            if disc < 0:
                raise ValueError("no lognormal matches the given mean/p95 pair")
        if self.kind == "empirical-histogram" and (
            len(self.hist_edges) != len(self.hist_weights) + 1
            or len(self.hist_weights) == 0
        ):
            raise ValueError("histogram needs n+1 edges for n weights")

    def _lognormal_params(self) -> tuple[float, float]:
        # mean = exp(mu + s^2/2), p95 = exp(mu + z*s); smaller root keeps s >= 0
        disc = self._Z95**2 + 2.0 * math.log(self.mean_s / self.p95_s)
        sigma = self._Z95 - math.sqrt(disc)
        mu = math.log(self.mean_s) - 0.5 * sigma**2
        return mu, sigma

    def sample(self, n: int) -> np.ndarray:
        """Draw ``n`` delays in seconds, reproducibly for a fixed seed."""
        rng = np.random.default_rng(self.seed)
        if self.kind == "constant":
            d = np.full(n, self.mean_s, dtype=float)
        elif self.kind == "lognormal":
            mu, sigma = self._lognormal_params()
            d = rng.lognormal(mean=mu, sigma=sigma, size=n)
        else:
            edges = np.asarray(self.hist_edges, dtype=float)
            weights = np.asarray(self.hist_weights, dtype=float)
            p = weights / weights.sum()
            bins = rng.choice(len(p), size=n, p=p)
            u = rng.random(n)
            d = edges[bins] + u * (edges[bins + 1] - edges[bins])
        d = np.maximum(d, 0.0)
        if self.outlier_cap_s is not None:
            d = np.minimum(d, self.outlier_cap_s)
        return d


def load_signal_csv(path) -> RegulationSignal:
    """Parse a signal CSV with header ``t_s,w``.

    Raises SignalError with the offending line number for malformed rows,
    out-of-range w, or non-monotone timestamps.
    """
    ts, ws = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if header != SIGNAL_HEADER:
            raise SignalError(f"bad header {header!r}, expected {SIGNAL_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise SignalError(f"line {lineno}: expected 2 columns, got {len(parts)}")
            try:
                t = float(parts[0])
                w = float(parts[1])
            except ValueError:
                raise SignalError(f"line {lineno}: malformed number") from None
            if abs(w) > 1.0:
                raise SignalError(f"line {lineno}: w={w} out of range [-1, 1]")
            if ts and t <= ts[-1]:
                raise SignalError(f"line {lineno}: non-monotone timestamp {t}")
            ts.append(t)
            ws.append(w)
    if not ts:
        raise SignalError("signal file has no samples")
    return RegulationSignal(np.array(ts), np.array(ws))


def write_signal_csv(signal: RegulationSignal, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SIGNAL_HEADER + "\n")
        for t, w in signal:
            fh.write(f"{t:.6f},{w:.6f}\n")


def downsample(signal: RegulationSignal, target_period: float) -> RegulationSignal:
    """Decimate to ``target_period`` by keeping every k-th sample from t[0].

    The target period must be an integer multiple of the source period.
    """
    src = signal.period
    ratio = target_period / src
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9:
        raise SignalError(
            f"target period {target_period} not an integer multiple of {src}"
        )
    if k == 1:
        return signal
    return RegulationSignal(signal.t[::k].copy(), signal.w[::k].copy())


def replay(signal: RegulationSignal, delay: DelayModel):
    """Yield ``(t_emitted, t_available, w)`` per sample, in emission order.

    Availability time is the emission time plus a sampled delay; no sample
    is ever dropped, large delays only stale it.
    """
    delays = delay.sample(len(signal))
    for (t, w), d in zip(signal, delays):
        yield t, t + d, w


def held_values(signal: RegulationSignal, delay: DelayModel, tick_times) -> np.ndarray:
    """Value a consumer sees at each tick under stale-sample hold.

    At tick ``t`` the consumer uses the most recently *emitted* sample whose
    availability time is <= t; ticks before the first arrival hold 0.
    The consumed sample index is non-decreasing across ticks by construction.
    """
    tick_times = np.asarray(tick_times, dtype=float)
    events = sorted(replay(signal, delay), key=lambda e: e[1])
    out = np.zeros(len(tick_times))
    held_w = 0.0
    newest_emit = -math.inf
    j = 0
    for i, t in enumerate(tick_times):
        while j < len(events) and events[j][1] <= t:
            t_emit, _, w = events[j]
            if t_emit > newest_emit:
                newest_emit = t_emit
                held_w = w
            j += 1
        out[i] = held_w
    return out
