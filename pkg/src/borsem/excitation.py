"""Incident Gaussian video pulse and the uniform time grid.

All times are in working units where c = 1 and lengths are measured in the
same unit as the body size ``a``; with ``a = 1`` a time unit is one light
transit of the maximum transverse dimension (a/c).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

#: Default distance from the pulse wavefront to its peak, in pulse widths.
TRUNCATION_WIDTHS = 4.0
#: Trailing cutoff after the peak, in pulse widths (exp(-64) ~ 1.6e-28).
TAIL_WIDTHS = 8.0


def to_seconds(t, a: float, c: float = SPEED_OF_LIGHT):
    """Convert a time in units of a/c to seconds for a body of size ``a`` metres."""
    return np.asarray(t) * a / c


def from_seconds(t, a: float, c: float = SPEED_OF_LIGHT):
    """Convert seconds to units of a/c."""
    return np.asarray(t) * c / a


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    def times(self) -> np.ndarray:
        # multiplicative, so sample k is exactly t0 + k*dt (no accumulation)
        return self.t0 + np.arange(self.n_steps) * self.dt

    def time(self, k: int) -> float:
        return self.t0 + k * self.dt

    def index_at(self, t: float) -> int:
        """Index of the first sample at or after ``t`` (clipped to the grid)."""
        k = int(np.ceil((t - self.t0) / self.dt - 1e-9))
        return min(max(k, 0), self.n_steps)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled waveform; ``values`` may be real or complex."""

    values: np.ndarray
    t0: float
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))
        if self.values.ndim != 1:
            raise ValueError("TimeSeries values must be one-dimensional")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t0, self.dt, len(self.values))

    def times(self) -> np.ndarray:
        return self.grid.times()

    def __len__(self):
        return len(self.values)

    def scaled(self, alpha) -> "TimeSeries":
        return TimeSeries(alpha * self.values, self.t0, self.dt, dict(self.meta))

    def window(self, start: int, length: int) -> "TimeSeries":
        if start < 0 or length < 1 or start + length > len(self.values):
            raise ValueError(
                f"window [{start}, {start + length}) outside series of length {len(self.values)}"
            )
        meta = dict(self.meta)
        meta["window_start"] = meta.get("window_start", 0) + start
        return TimeSeries(self.values[start:start + length], self.t0 + start * self.dt, self.dt, meta)

    def decimated(self, q: int) -> "TimeSeries":
        """Every ``q``-th sample, starting with the first."""
        if q < 1:
            raise ValueError("decimation factor must be >= 1")
        meta = dict(self.meta)
        meta["decimation"] = meta.get("decimation", 1) * q
        return TimeSeries(self.values[::q], self.t0, self.dt * q, meta)


@dataclass(frozen=True)
class GaussianPulse:
    """Baseband Gaussian ``amplitude * exp(-((t - t_peak) / width)**2)``.

    ``width`` is the 1/e half-width.
    """

    width: float
    amplitude: float = 1.0
    t_peak: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"pulse width must be positive, got {self.width}")

    @property
    def wavefront(self) -> float:
        """Instant at which the (truncated) pulse switches on."""
        return self.t_peak - TRUNCATION_WIDTHS * self.width

    @property
    def tail(self) -> float:
        """Instant after which the truncated pulse is identically zero."""
        return self.t_peak + TAIL_WIDTHS * self.width

    def delayed(self, delta: float) -> "GaussianPulse":
        return GaussianPulse(self.width, self.amplitude, self.t_peak + delta)

    def scaled(self, alpha: float) -> "GaussianPulse":
        return GaussianPulse(self.width, alpha * self.amplitude, self.t_peak)


def pulse_value(p: GaussianPulse, t):
    x = (np.asarray(t, dtype=float) - p.t_peak) / p.width
    return p.amplitude * np.exp(-x * x)


def pulse_derivative(p: GaussianPulse, t):
    x = (np.asarray(t, dtype=float) - p.t_peak) / p.width
    return -2.0 * x / p.width * p.amplitude * np.exp(-x * x)


def truncated_pulse_value(p: GaussianPulse, t):
    """Pulse value supported on ``[p.wavefront, p.tail]``; exactly zero outside.

    The jump at the wavefront is ``exp(-TRUNCATION_WIDTHS**2)`` of the peak.
    """
    t = np.asarray(t, dtype=float)
    return np.where((t >= p.wavefront) & (t <= p.tail), pulse_value(p, t), 0.0)


def auto_placed(width: float, t_start: float = 0.0, amplitude: float = 1.0) -> GaussianPulse:
    """Pulse whose peak sits ``TRUNCATION_WIDTHS`` widths after ``t_start``."""
    return GaussianPulse(width, amplitude, t_start + TRUNCATION_WIDTHS * width)


def sample_pulse(p: GaussianPulse, g: TimeGrid) -> TimeSeries:
    return TimeSeries(pulse_value(p, g.times()), g.t0, g.dt, {"grid": g})
