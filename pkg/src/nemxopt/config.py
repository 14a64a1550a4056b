"""Scenario configuration: JSON schema, validation, object construction.

Configs are plain JSON. Structural problems are reported with their JSON
path; semantic problems (cross-field rules, unit ranges, missing files)
are appended with the same path convention so a bad config produces one
consolidated list of violations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import sim, traces
from .demand import Device, QuadraticUtility, calibrate_quadratic
from .errors import ConfigError
from .policy import PolicyCase
from .storage import Battery
from .tariff import NemRate, TariffSchedule, TariffWindow, parse_clock, rate_at

_DAYS_PER_MONTH = 30.0

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["devices", "tariff", "interval_minutes"],
    "properties": {
        "label": {"type": "string"},
        "devices": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "d_min": {"type": "number", "minimum": 0},
                    "d_max": {"type": "number", "minimum": 0},
                    "alpha": {"type": "number"},
                    "beta": {"type": "number"},
                    "baseline_kwh": {"type": "number"},
                    "baseline_price": {"type": "number"},
                    "elasticity": {"type": "number"},
                },
            },
        },
        "battery": {
            "type": "object",
            "additionalProperties": False,
            "required": ["charge_kw", "discharge_kw"],
            "properties": {
                "charge_kw": {"type": "number", "minimum": 0},
                "discharge_kw": {"type": "number", "minimum": 0},
                "tau": {"type": "number"},
                "rho": {"type": "number"},
                "soc_min_kwh": {"type": "number", "minimum": 0},
                "soc_max_kwh": {"type": "number", "minimum": 0},
                "soc_init_kwh": {"type": "number", "minimum": 0},
                "salvage": {"type": "number", "minimum": 0},
            },
        },
        "tariff": {
            "type": "object",
            "additionalProperties": False,
            "required": ["windows"],
            "properties": {
                "windows": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["start", "end", "buy_rate", "export_rate"],
                        "properties": {
                            "start": {"type": "string"},
                            "end": {"type": "string"},
                            "buy_rate": {"type": "number", "minimum": 0},
                            "export_rate": {"type": "number", "minimum": 0},
                        },
                    },
                },
                "fixed_charge": {"type": "number", "minimum": 0},
                "fixed_charge_per_month": {"type": "number", "minimum": 0},
                "export_rate_file": {"type": "string"},
            },
        },
        "interval_minutes": {"type": "number", "exclusiveMinimum": 0},
        "netting_intervals": {"type": "integer", "minimum": 1},
        "horizon_intervals": {"type": "integer", "minimum": 1},
        "customer_type": {"enum": list(sim.CUSTOMER_TYPES)},
        "use_baseline_demand": {"type": "boolean"},
        "traces": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "file": {"type": "string"},
                "synthetic": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["days"],
                    "properties": {
                        "days": {"type": "integer", "minimum": 1},
                        "solar_kw": {"type": "number", "exclusiveMinimum": 0},
                        "demand_kw": {"type": "number", "exclusiveMinimum": 0},
                        "seed": {"type": "integer"},
                    },
                },
            },
        },
        "sweeps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "storage_rates_kw": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "number", "exclusiveMinimum": 0},
                },
                "nettings": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "integer", "minimum": 1},
                },
                "export_rates": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0},
                },
                "efficiencies": {
                    "type": "array",
                    "items": {"type": "number"},
                },
                "vos_storage_rate_kw": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seed": {"type": "integer"},
    },
}


@dataclass
class ScenarioConfig:
    """Parsed and validated scenario description."""

    devices: tuple[Device, ...]
    battery: Battery | None
    schedule: TariffSchedule
    customer_type: str
    traces_spec: dict | None
    use_baseline_demand: bool
    export_rate_file: Path | None
    sweeps: dict = field(default_factory=dict)
    seed: int = 42
    label: str = ""
    base_dir: Path = Path(".")
    horizon_intervals: int | None = None

    def load_traces(self) -> tuple[np.ndarray, np.ndarray]:
        if self.traces_spec is None:
            raise ConfigError(["traces: required for simulation subcommands"])
        if "file" in self.traces_spec:
            return traces.read_trace_csv(self.base_dir / self.traces_spec["file"])
        spec = self.traces_spec["synthetic"]
        return traces.synthetic_traces(
            days=spec["days"],
            dt_minutes=self.schedule.dt_hours * 60.0,
            seed=spec.get("seed", self.seed),
            solar_kw=spec.get("solar_kw", 5.0),
            demand_kw=spec.get("demand_kw", 1.0),
        )

    def scenario(self) -> sim.Scenario:
        generation, baseline = self.load_traces()
        if (
            self.horizon_intervals is not None
            and len(generation) != self.horizon_intervals
        ):
            raise ConfigError(
                [
                    f"traces: length {len(generation)} != horizon_intervals "
                    f"{self.horizon_intervals}"
                ]
            )
        export_override = None
        if self.export_rate_file is not None:
            export_override = traces.read_export_csv(self.export_rate_file)
        return sim.Scenario(
            customer_type=self.customer_type,
            devices=self.devices,
            schedule=self.schedule,
            generation=generation,
            battery=self.battery,
            baseline=baseline if self.use_baseline_demand else None,
            export_override=export_override,
            label=self.label,
        )

    def policy_case(self, t: int = 0) -> PolicyCase:
        if self.battery is None:
            raise ConfigError(["battery: required for policy subcommands"])
        return PolicyCase(
            devices=self.devices,
            rate=rate_at(self.schedule, t),
            battery=self.battery,
            t=t,
        )


def _parse_devices(raw: list[dict], violations: list[str]) -> tuple[Device, ...]:
    devices = []
    seen = set()
    for i, spec in enumerate(raw):
        path = f"devices[{i}]"
        dev_id = spec.get("id", f"device{i}")
        if dev_id in seen:
            violations.append(f"{path}.id: duplicate device id {dev_id!r}")
        seen.add(dev_id)
        parametric = "alpha" in spec or "beta" in spec
        calibrated = any(
            k in spec for k in ("baseline_kwh", "baseline_price", "elasticity")
        )
        if parametric and calibrated:
            violations.append(
                f"{path}: give either alpha/beta or "
                "baseline_kwh/baseline_price/elasticity, not both"
            )
            continue
        if parametric:
            if "alpha" not in spec or "beta" not in spec:
                violations.append(f"{path}: alpha and beta must be given together")
                continue
            alpha, beta = spec["alpha"], spec["beta"]
        elif calibrated:
            missing = [
                k
                for k in ("baseline_kwh", "baseline_price", "elasticity")
                if k not in spec
            ]
            if missing:
                violations.append(f"{path}: missing {', '.join(missing)}")
                continue
            try:
                alpha, beta = calibrate_quadratic(
                    spec["baseline_kwh"], spec["baseline_price"], spec["elasticity"]
                )
            except ValueError as exc:
                violations.append(f"{path}: {exc}")
                continue
        else:
            violations.append(
                f"{path}: needs alpha/beta or baseline_kwh/baseline_price/elasticity"
            )
            continue
        try:
            utility = QuadraticUtility(alpha=alpha, beta=beta)
        except ValueError as exc:
            which = "beta" if "beta" in str(exc) else "alpha"
            violations.append(f"{path}.{which}: {exc}")
            continue
        d_min = spec.get("d_min", 0.0)
        d_max = spec.get("d_max", utility.saturation)
        try:
            devices.append(
                Device(id=dev_id, d_min=d_min, d_max=d_max, utility=utility)
            )
        except ValueError as exc:
            violations.append(f"{path}: {exc}")
    return tuple(devices)


def _parse_battery(
    spec: dict | None, dt_hours: float, violations: list[str]
) -> Battery | None:
    if spec is None:
        return None
    tau = spec.get("tau", 0.95)
    rho = spec.get("rho", 0.95)
    for name, eff in (("tau", tau), ("rho", rho)):
        if not 0 < eff <= 1:
            violations.append(
                f"battery.{name}: charge/discharge efficiency must lie in (0, 1], "
                f"got {eff}"
            )
            return None
    soc_max = spec.get("soc_max_kwh", 13.5)
    try:
        return Battery(
            charge_limit=spec["charge_kw"] * dt_hours,
            discharge_limit=spec["discharge_kw"] * dt_hours,
            charge_eff=tau,
            discharge_eff=rho,
            soc_min=spec.get("soc_min_kwh", 0.0),
            soc_max=soc_max,
            soc_init=spec.get("soc_init_kwh", soc_max / 2.0),
            salvage_rate=spec.get("salvage", 0.0),
        )
    except ValueError as exc:
        violations.append(f"battery: {exc}")
        return None


def _parse_schedule(
    cfg: dict, violations: list[str]
) -> TariffSchedule | None:
    spec = cfg["tariff"]
    dt_hours = cfg["interval_minutes"] / 60.0
    netting = cfg.get("netting_intervals", 1)
    if "fixed_charge" in spec and "fixed_charge_per_month" in spec:
        violations.append(
            "tariff: give fixed_charge or fixed_charge_per_month, not both"
        )
        return None
    if "fixed_charge_per_month" in spec:
        # Apportioned uniformly per billing window; 30-day months.
        fixed = spec["fixed_charge_per_month"] * (netting * dt_hours) / (
            _DAYS_PER_MONTH * 24.0
        )
    else:
        fixed = spec.get("fixed_charge", 0.0)
    windows = []
    window_problems = False
    for i, w in enumerate(spec["windows"]):
        path = f"tariff.windows[{i}]"
        try:
            rate = NemRate(
                buy_rate=w["buy_rate"],
                export_rate=w["export_rate"],
                fixed_charge=fixed,
            )
            windows.append(
                TariffWindow(parse_clock(w["start"]), parse_clock(w["end"]), rate)
            )
        except ValueError as exc:
            violations.append(f"{path}: {exc}")
            window_problems = True
    if window_problems:
        return None
    try:
        return TariffSchedule(
            windows=tuple(windows),
            dt_hours=dt_hours,
            netting_intervals=netting,
            horizon=cfg.get("horizon_intervals"),
        )
    except ValueError as exc:
        violations.append(f"tariff.windows: {exc}")
        return None


def parse_config(path: str | Path) -> ScenarioConfig:
    """Load and validate a scenario config; raises ConfigError with all issues."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"{path}: no such config file"])
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"])

    validator = jsonschema.Draft202012Validator(SCHEMA)
    violations = [
        f"{err.json_path[2:] if err.json_path.startswith('$.') else '<root>'}: "
        f"{err.message}"
        for err in sorted(validator.iter_errors(raw), key=lambda e: e.json_path)
    ]
    if violations:
        raise ConfigError(violations)

    devices = _parse_devices(raw["devices"], violations)
    schedule = _parse_schedule(raw, violations)
    battery = _parse_battery(
        raw.get("battery"), raw["interval_minutes"] / 60.0, violations
    )

    traces_spec = raw.get("traces")
    if traces_spec is not None:
        if ("file" in traces_spec) == ("synthetic" in traces_spec):
            violations.append("traces: give exactly one of file or synthetic")
        elif "file" in traces_spec:
            trace_path = path.parent / traces_spec["file"]
            if not trace_path.exists():
                violations.append(f"traces.file: {trace_path} does not exist")

    export_rate_file = None
    if "export_rate_file" in raw["tariff"]:
        export_rate_file = path.parent / raw["tariff"]["export_rate_file"]
        if not export_rate_file.exists():
            violations.append(
                f"tariff.export_rate_file: {export_rate_file} does not exist"
            )

    horizon = raw.get("horizon_intervals")
    netting = raw.get("netting_intervals", 1)
    if horizon is not None and horizon % netting != 0:
        violations.append(
            f"netting_intervals: {netting} does not divide horizon_intervals {horizon}"
        )

    if violations:
        raise ConfigError(violations)

    return ScenarioConfig(
        devices=devices,
        battery=battery,
        schedule=schedule,
        customer_type=raw.get("customer_type", "active_sdg"),
        traces_spec=traces_spec,
        use_baseline_demand=raw.get("use_baseline_demand", False),
        export_rate_file=export_rate_file,
        sweeps=raw.get("sweeps", {}),
        seed=raw.get("seed", 42),
        label=raw.get("label", ""),
        base_dir=path.parent,
        horizon_intervals=horizon,
    )
