"""Net-metering billing: rates, time-of-use schedules, netting windows.

A rate has three parts: a retail (buy) price applied to net imports, an
export (compensation) price applied to net exports, and a fixed connection
charge added once per billing application. Bills may net imports against
exports over windows longer than one metering interval before the rates
apply; longer windows can only lower the bill because the buy price is
never below the export price.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_log = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440


def parse_clock(text: str) -> int:
    """Convert 'HH:MM' into minutes after midnight; '24:00' is end of day."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"clock time must look like 'HH:MM', got {text!r}")
    hours, minutes = int(parts[0]), int(parts[1])
    if not (0 <= hours <= 24 and 0 <= minutes < 60) or (hours == 24 and minutes != 0):
        raise ValueError(f"clock time out of range: {text!r}")
    return hours * 60 + minutes


@dataclass(frozen=True)
class NemRate:
    """Buy/export/fixed price triple for one billing application.

    Parameters
    ----------
    buy_rate : float
        Price of net imports ($/kWh).
    export_rate : float
        Compensation for net exports ($/kWh). Must not exceed ``buy_rate``,
        otherwise importing and re-exporting inside one window would be a
        money pump.
    fixed_charge : float
        Connection charge ($) added once per billing application. It never
        enters scheduling decisions, only bills.
    """

    buy_rate: float
    export_rate: float
    fixed_charge: float = 0.0

    def __post_init__(self) -> None:
        if self.buy_rate < 0 or self.export_rate < 0 or self.fixed_charge < 0:
            raise ValueError(f"rates must be nonnegative, got {self}")
        if self.buy_rate < self.export_rate:
            raise ValueError(
                f"buy_rate {self.buy_rate} must be >= export_rate {self.export_rate}"
            )


def payment(rate: NemRate, z: float) -> float:
    """Payment for net consumption ``z`` in kWh.

    Imports (z > 0) are billed at the buy rate, exports (z < 0) are
    credited at the export rate, and the fixed charge applies either way.
    """
    if z >= 0:
        return rate.buy_rate * z + rate.fixed_charge
    return rate.export_rate * z + rate.fixed_charge


@dataclass(frozen=True)
class TariffWindow:
    """One daily clock window [start_minute, end_minute) and its rate."""

    start_minute: int
    end_minute: int
    rate: NemRate

    def __post_init__(self) -> None:
        if not 0 <= self.start_minute < self.end_minute <= MINUTES_PER_DAY:
            raise ValueError(
                f"window [{self.start_minute}, {self.end_minute}) is not a valid "
                "slice of the day"
            )


@dataclass(frozen=True)
class TariffSchedule:
    """Daily ToU windows plus the interval and netting geometry.

    Parameters
    ----------
    windows : tuple[TariffWindow, ...]
        Must partition the 24-hour day with no gap or overlap.
    dt_hours : float
        Length of one metering interval in hours.
    netting_intervals : int
        Number of consecutive intervals whose net consumption is summed
        before one billing application of the window's rate.
    horizon : int, optional
        Number of intervals in the simulation horizon; when set, lookups
        past it are rejected and the netting window must divide it.
    """

    windows: tuple[TariffWindow, ...]
    dt_hours: float = 1.0
    netting_intervals: int = 1
    horizon: int | None = None

    def __post_init__(self) -> None:
        if not self.windows:
            raise ValueError("schedule needs at least one window")
        if self.dt_hours <= 0:
            raise ValueError(f"dt_hours must be positive, got {self.dt_hours}")
        if self.netting_intervals < 1:
            raise ValueError(
                f"netting_intervals must be >= 1, got {self.netting_intervals}"
            )
        ordered = tuple(sorted(self.windows, key=lambda w: w.start_minute))
        cursor = 0
        for w in ordered:
            if w.start_minute != cursor:
                raise ValueError(
                    f"windows must partition the day; gap or overlap at minute {cursor}"
                )
            cursor = w.end_minute
        if cursor != MINUTES_PER_DAY:
            raise ValueError(f"windows must cover the day up to 24:00, end at {cursor}")
        if self.horizon is not None:
            if self.horizon < 1:
                raise ValueError(f"horizon must be positive, got {self.horizon}")
            if self.horizon % self.netting_intervals != 0:
                raise ValueError(
                    f"netting window {self.netting_intervals} does not divide "
                    f"horizon {self.horizon}"
                )
        object.__setattr__(self, "windows", ordered)

    @classmethod
    def flat(
        cls,
        rate: NemRate,
        dt_hours: float = 1.0,
        netting_intervals: int = 1,
        horizon: int | None = None,
    ) -> "TariffSchedule":
        """Single-rate schedule covering the whole day."""
        return cls(
            windows=(TariffWindow(0, MINUTES_PER_DAY, rate),),
            dt_hours=dt_hours,
            netting_intervals=netting_intervals,
            horizon=horizon,
        )

    def minute_of_day(self, t: int) -> float:
        return (t * self.dt_hours * 60.0) % MINUTES_PER_DAY


def rate_at(schedule: TariffSchedule, t: int) -> NemRate:
    """Rate in force at interval ``t``.

    Raises IndexError when t is negative or beyond the schedule's horizon.
    """
    if t < 0 or (schedule.horizon is not None and t >= schedule.horizon):
        raise IndexError(f"interval {t} outside horizon {schedule.horizon}")
    minute = schedule.minute_of_day(t)
    for w in schedule.windows:
        if w.start_minute <= minute < w.end_minute:
            return w.rate
    # unreachable: windows partition the day
    raise RuntimeError(f"no window covers minute {minute}")


def rate_arrays(
    schedule: TariffSchedule, horizon: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-interval (buy, export, fixed, window index) arrays for a horizon."""
    minutes = (np.arange(horizon) * (schedule.dt_hours * 60.0)) % MINUTES_PER_DAY
    starts = np.array([w.start_minute for w in schedule.windows], dtype=float)
    idx = np.searchsorted(starts, minutes, side="right") - 1
    buy = np.array([w.rate.buy_rate for w in schedule.windows])[idx]
    exp = np.array([w.rate.export_rate for w in schedule.windows])[idx]
    fix = np.array([w.rate.fixed_charge for w in schedule.windows])[idx]
    return buy, exp, fix, idx


def payment_trace(schedule: TariffSchedule, z_trace) -> np.ndarray:
    """Per-interval payments ignoring netting (one application per interval)."""
    z = np.asarray(z_trace, dtype=float)
    buy, exp, fix, _ = rate_arrays(schedule, len(z))
    return buy * np.maximum(z, 0.0) + exp * np.minimum(z, 0.0) + fix


def bill_trace(
    schedule: TariffSchedule,
    z_trace,
    netting: int | None = None,
    export_override=None,
) -> np.ndarray:
    """Per-window bills for a net-consumption trace.

    Net consumption is summed over each netting window and priced once with
    the rate in force at the window's first interval. A window that spans a
    rate change is still billed at its opening rate; this is logged because
    the result then depends on where windows start. ``export_override``
    replaces the schedule's export rates with a per-interval sequence
    (dynamic avoided-cost compensation).
    """
    z = np.asarray(z_trace, dtype=float)
    n = schedule.netting_intervals if netting is None else netting
    if n < 1:
        raise ConfigError(f"netting window must be >= 1, got {n}")
    if len(z) % n != 0:
        raise ConfigError(
            f"trace length {len(z)} is not divisible by netting window {n}"
        )
    buy, exp, fix, _ = rate_arrays(schedule, len(z))
    if export_override is not None:
        exp = np.asarray(export_override, dtype=float)
        if exp.shape != z.shape:
            raise ConfigError(
                f"export override length {len(exp)} != trace length {len(z)}"
            )
    sums = z.reshape(-1, n).sum(axis=1)
    changed = np.zeros((len(sums), n), dtype=bool)
    for arr in (buy, exp, fix):
        a = arr.reshape(-1, n)
        changed |= a != a[:, :1]
    straddles = int(changed.any(axis=1).sum())
    if straddles:
        _log.warning(
            "%d netting window(s) straddle a rate change; billed at the rate "
            "in force at each window's first interval",
            straddles,
        )
    first = np.arange(0, len(z), n)
    return (
        buy[first] * np.maximum(sums, 0.0)
        + exp[first] * np.minimum(sums, 0.0)
        + fix[first]
    )
