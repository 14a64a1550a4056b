"""Household time series: synthetic generation/demand plus CSV ingestion.

The synthetic generator ships with the package so every simulation and
acceptance run is reproducible without external data: solar output is a
daylight bell with per-day cloudiness and multiplicative noise, demand is a
base load with morning and evening peaks. All randomness flows from one
seed.
"""

from __future__ import annotations

import csv
import datetime
from pathlib import Path

import numpy as np

from .errors import ConfigError

TRACE_COLUMNS = ("timestamp", "generation_kwh", "baseline_kwh")
_START = datetime.datetime(2022, 6, 1)


def synthetic_traces(
    days: int,
    dt_minutes: float,
    seed: int = 42,
    solar_kw: float = 5.0,
    demand_kw: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generation and baseline-demand traces in kWh per interval."""
    if days < 1:
        raise ValueError(f"days must be >= 1, got {days}")
    per_day = int(round(1440 / dt_minutes))
    if abs(per_day * dt_minutes - 1440) > 1e-6:
        raise ValueError(f"dt_minutes {dt_minutes} does not divide the day")
    rng = np.random.default_rng(seed)
    n = days * per_day
    dt_h = dt_minutes / 60.0
    hours = (np.arange(n) * dt_h) % 24.0
    day_idx = np.arange(n) // per_day

    daylight = np.clip(np.sin(np.pi * (hours - 6.0) / 14.0), 0.0, None) ** 1.5
    cloud = 0.55 + 0.45 * rng.beta(3.0, 1.6, size=days)
    gen_noise = np.clip(1.0 + 0.15 * rng.standard_normal(n), 0.3, 1.6)
    generation = solar_kw * cloud[day_idx] * daylight * gen_noise * dt_h

    morning = np.exp(-0.5 * ((hours - 7.5) / 1.3) ** 2)
    evening = np.exp(-0.5 * ((hours - 19.0) / 2.2) ** 2)
    level = 0.35 + 0.9 * morning + 1.3 * evening
    demand_noise = np.clip(1.0 + 0.2 * rng.standard_normal(n), 0.25, 2.0)
    baseline = demand_kw * level * demand_noise * dt_h
    return generation, baseline


def timestamps(n: int, dt_minutes: float, start: datetime.datetime = _START) -> list[str]:
    step = datetime.timedelta(minutes=dt_minutes)
    return [(start + i * step).isoformat() for i in range(n)]


def read_trace_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Load (generation, baseline) from a trace CSV.

    Expected columns: timestamp (ISO-8601), generation_kwh, baseline_kwh.
    """
    path = Path(path)
    generation: list[float] = []
    baseline: list[float] = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in TRACE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(
                [f"{path}: missing trace column(s) {', '.join(missing)}"]
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                g = float(row["generation_kwh"])
                b = float(row["baseline_kwh"])
            except (TypeError, ValueError):
                raise ConfigError([f"{path}:{lineno}: non-numeric trace value"])
            if g < 0 or b < 0:
                raise ConfigError([f"{path}:{lineno}: trace values must be >= 0"])
            generation.append(g)
            baseline.append(b)
    if not generation:
        raise ConfigError([f"{path}: trace file has no rows"])
    return np.array(generation), np.array(baseline)


def read_export_csv(path: str | Path) -> np.ndarray:
    """Load a per-interval export-rate trace (column ``export_rate``)."""
    path = Path(path)
    values: list[float] = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if "export_rate" not in (reader.fieldnames or []):
            raise ConfigError([f"{path}: missing column export_rate"])
        for lineno, row in enumerate(reader, start=2):
            try:
                v = float(row["export_rate"])
            except (TypeError, ValueError):
                raise ConfigError([f"{path}:{lineno}: non-numeric export rate"])
            if v < 0:
                raise ConfigError([f"{path}:{lineno}: export rate must be >= 0"])
            values.append(v)
    if not values:
        raise ConfigError([f"{path}: export-rate file has no rows"])
    return np.array(values)


def write_trace_csv(
    path: str | Path,
    generation,
    baseline,
    dt_minutes: float,
    start: datetime.datetime = _START,
) -> None:
    path = Path(path)
    stamps = timestamps(len(generation), dt_minutes, start)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for ts, g, b in zip(stamps, generation, baseline):
            writer.writerow([ts, f"{g:.6f}", f"{b:.6f}"])
