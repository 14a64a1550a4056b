"""Time-series simulation of the five customer types.

Runs a scenario interval by interval: the customer's policy proposes a
decision, the storage action is clipped to what the state of charge allows,
active customers re-solve their consumption around a clipped action, and
bills are settled over netting windows. The closed-form policy assumes the
SoC limits never bind; every clip event is counted so users can judge how
far a run strays from that regime.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import analysis, policy
from .demand import AggregateCurve, Device
from .errors import MetricError, SandwichError, SweepError
from .storage import Battery, check_salvage_sandwich
from .tariff import NemRate, TariffSchedule, bill_trace, rate_arrays
from .policy import Decision, PolicyTables

_log = logging.getLogger(__name__)

CUSTOMER_TYPES = ("consumer", "passive_dg", "active_dg", "passive_sdg", "active_sdg")
_SDG_TYPES = frozenset({"passive_sdg", "active_sdg"})


@dataclass
class Scenario:
    """One simulation setup: traces, tariff, devices, battery, customer type.

    Traces are kWh per interval. Passive and consumer demand comes from the
    baseline trace when one is provided, otherwise from the devices' response
    to the buy rate. Storage customers need a battery; the other types ignore
    it.
    """

    customer_type: str
    devices: tuple[Device, ...]
    schedule: TariffSchedule
    generation: np.ndarray
    battery: Battery | None = None
    baseline: np.ndarray | None = None
    export_override: np.ndarray | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.customer_type not in CUSTOMER_TYPES:
            raise ValueError(
                f"unknown customer type {self.customer_type!r}; "
                f"expected one of {CUSTOMER_TYPES}"
            )
        if not self.devices:
            raise ValueError("scenario needs at least one device")
        self.generation = np.asarray(self.generation, dtype=float)
        if self.generation.ndim != 1 or not len(self.generation):
            raise ValueError("generation trace must be a nonempty 1-D array")
        if np.any(self.generation < 0):
            raise ValueError("generation trace must be nonnegative")
        if self.baseline is not None:
            self.baseline = np.asarray(self.baseline, dtype=float)
            if self.baseline.shape != self.generation.shape:
                raise ValueError(
                    f"baseline length {len(self.baseline)} != generation "
                    f"length {len(self.generation)}"
                )
            if np.any(self.baseline < 0):
                raise ValueError("baseline trace must be nonnegative")
        if self.customer_type in _SDG_TYPES and self.battery is None:
            raise ValueError(f"{self.customer_type} requires a battery")
        if self.export_override is not None:
            self.export_override = np.asarray(self.export_override, dtype=float)
            if self.export_override.shape != self.generation.shape:
                raise ValueError(
                    f"export override length {len(self.export_override)} != "
                    f"horizon {len(self.generation)}"
                )
            if np.any(self.export_override < 0):
                raise ValueError("export override must be nonnegative")
        if len(self.generation) % self.schedule.netting_intervals != 0:
            raise ValueError(
                f"netting window {self.schedule.netting_intervals} does not "
                f"divide horizon {len(self.generation)}"
            )

    @property
    def horizon(self) -> int:
        return len(self.generation)

    @property
    def dt_hours(self) -> float:
        return self.schedule.dt_hours


@dataclass
class SimReport:
    """Per-interval results plus aggregated totals for one run."""

    scenario: Scenario
    consumption: np.ndarray  # (T, K)
    storage: np.ndarray
    net: np.ndarray
    soc: np.ndarray  # (T + 1,)
    payment_interval: np.ndarray
    surplus_interval: np.ndarray
    bills: np.ndarray
    totals: dict[str, float] = field(default_factory=dict)
    clip_events: int = 0

    def decision_at(self, t: int) -> Decision:
        z = float(self.net[t])
        if z > policy.ZONE_TOL:
            zone = policy.ZONE_PLUS
        elif z < -policy.ZONE_TOL:
            zone = policy.ZONE_MINUS
        else:
            zone = policy.ZONE_ZERO
        return Decision(
            consumption=tuple(self.consumption[t]),
            storage=float(self.storage[t]),
            net=z,
            zone=zone,
            payment=float(self.payment_interval[t]),
            surplus=float(self.surplus_interval[t]),
        )

    def billed_total(self, netting: int | None = None) -> float:
        return float(
            bill_trace(
                self.scenario.schedule,
                self.net,
                netting,
                self.scenario.export_override,
            ).sum()
        )

    def billed_surplus(self, netting: int | None = None) -> float:
        """Total utility minus the netted bill plus storage salvage."""
        return (
            self.totals["utility"] - self.billed_total(netting) + self.totals["salvage"]
        )

    def self_consumption(self, netting: int | None = None) -> float | None:
        """Share of generation absorbed on-site, after window netting.

        None for customers without generation (nothing to self-consume).
        """
        if self.scenario.customer_type == "consumer":
            return None
        if float(self.scenario.generation.sum()) <= 0:
            return None
        n = netting or self.scenario.schedule.netting_intervals
        netted = self.net.reshape(-1, n).sum(axis=1)
        return analysis.self_consumption(netted, self.scenario.generation)


def _passive_demand(scenario: Scenario, curve: AggregateCurve, buy: np.ndarray):
    """Fixed per-interval demand for consumer/passive types.

    Baseline trace when provided (clamped into the devices' range so the
    utility of the allocation is defined), otherwise the buy-rate response.
    """
    if scenario.baseline is not None:
        lo, hi = curve.min_total, curve.max_total
        total = np.clip(scenario.baseline, lo, hi)
        clamped = int((total != scenario.baseline).sum())
        if clamped:
            _log.warning(
                "%d baseline interval(s) outside the devices' consumption "
                "range were clamped for utility accounting",
                clamped,
            )
        _, alloc = curve.allocate(total)
        return total, alloc
    alloc = curve.allocation_at_price(buy)
    return alloc.sum(axis=1), alloc


def _soc_walk(scenario: Scenario, d_total, d_alloc, e_desired, resolver=None):
    """Serial state-of-charge pass with clipping (and optional re-solve)."""
    bat = scenario.battery
    T = scenario.horizon
    soc = np.empty(T + 1)
    e_out = np.empty(T)
    s = bat.soc_init
    soc[0] = s
    clip_events = 0
    tau, rho = bat.charge_eff, bat.discharge_eff
    s_min, s_max = bat.soc_min, bat.soc_max
    e_chg, e_dis = bat.charge_limit, bat.discharge_limit
    desired = e_desired.tolist()
    for t in range(T):
        hi = min(e_chg, (s_max - s) / tau)
        lo = -min(e_dis, (s - s_min) * rho)
        e = desired[t]
        if e > hi + 1e-12 or e < lo - 1e-12:
            e = min(hi, max(lo, e))
            clip_events += 1
            if resolver is not None:
                row = resolver(t, e)
                d_alloc[t] = row
                d_total[t] = row.sum()
        s += tau * e if e >= 0 else e / rho
        s = min(max(s, s_min), s_max)
        soc[t + 1] = s
        e_out[t] = e
    return e_out, soc, clip_events


def run(scenario: Scenario, enforce_sandwich: bool = False) -> SimReport:
    """Simulate one scenario over its full horizon."""
    T = scenario.horizon
    kind = scenario.customer_type
    schedule = scenario.schedule
    buy, exp, fix, _ = rate_arrays(schedule, T)
    if scenario.export_override is not None:
        exp = scenario.export_override
        if np.any(exp > buy):
            raise ValueError("export override exceeds the buy rate somewhere")
    curve = AggregateCurve(scenario.devices, 0)
    g = scenario.generation

    # Decisions depend only on the (buy, export) pair in force, so intervals
    # are batched by distinct pair; avoided-cost export traces just add pairs.
    pairs, gid = np.unique(np.column_stack([buy, exp]), axis=0, return_inverse=True)
    gid = gid.ravel()
    group_rates = [NemRate(b, x) for b, x in pairs]

    if scenario.battery is not None:
        check = check_salvage_sandwich(scenario.battery, group_rates)
        if not check.passed:
            if enforce_sandwich:
                raise SandwichError("; ".join(check.violations))
            _log.warning(
                "salvage value not sandwiched (%d violation(s)); the policy "
                "formulas are evaluated anyway but optimality is not guaranteed",
                len(check.violations),
            )

    soc = None
    clip_events = 0
    if kind == "consumer":
        d_total, d_alloc = _passive_demand(scenario, curve, buy)
        e = np.zeros(T)
        z = d_total.copy()
    elif kind == "passive_dg":
        d_total, d_alloc = _passive_demand(scenario, curve, buy)
        e = np.zeros(T)
        z = d_total - g
    elif kind == "active_dg":
        d_alloc = np.empty((T, len(scenario.devices)))
        for i, rate in enumerate(group_rates):
            mask = gid == i
            if mask.any():
                d_alloc[mask] = _active_dg_batch(curve, rate, g[mask])
        d_total = d_alloc.sum(axis=1)
        e = np.zeros(T)
        z = d_total - g
    elif kind == "passive_sdg":
        d_total, d_alloc = _passive_demand(scenario, curve, buy)
        bat = scenario.battery
        e_desired = np.clip(g - d_total, -bat.discharge_limit, bat.charge_limit)
        e, soc, clip_events = _soc_walk(scenario, d_total, d_alloc, e_desired)
        z = d_total - g + e
    else:  # active_sdg
        bat = scenario.battery
        d_alloc = np.empty((T, len(scenario.devices)))
        e_desired = np.empty(T)
        tables = []
        for i, rate in enumerate(group_rates):
            tab = PolicyTables(scenario.devices, rate, bat, 0, check=False)
            tables.append(tab)
            mask = gid == i
            if mask.any():
                batch = tab.decide_batch(g[mask])
                d_alloc[mask] = batch.consumption
                e_desired[mask] = batch.storage

        def resolver(t: int, e_clipped: float) -> np.ndarray:
            return _active_dg_row(curve, tables[gid[t]], g[t] - e_clipped)

        d_total = d_alloc.sum(axis=1)
        e, soc, clip_events = _soc_walk(scenario, d_total, d_alloc, e_desired, resolver)
        d_total = d_alloc.sum(axis=1)
        z = d_total - g + e

    if soc is None:
        s0 = scenario.battery.soc_init if scenario.battery else 0.0
        soc = np.full(T + 1, s0)

    pay = buy * np.maximum(z, 0.0) + exp * np.minimum(z, 0.0) + fix
    util = np.asarray(curve.utility(d_alloc), dtype=float)
    surplus = util - pay
    bills = bill_trace(schedule, z, export_override=scenario.export_override)
    salvage = 0.0
    if scenario.battery is not None and kind in _SDG_TYPES:
        salvage = scenario.battery.salvage_rate * (soc[-1] - soc[0])

    totals = {
        "utility": float(util.sum()),
        "payment_interval": float(pay.sum()),
        "payment_billed": float(bills.sum()),
        "stage_surplus": float(surplus.sum()),
        "salvage": float(salvage),
        "surplus": float(surplus.sum() + salvage),
        "imports_kwh": float(np.maximum(z, 0.0).sum()),
        "exports_kwh": float(-np.minimum(z, 0.0).sum()),
        "days": T * scenario.dt_hours / 24.0,
    }
    return SimReport(
        scenario=scenario,
        consumption=d_alloc,
        storage=e,
        net=z,
        soc=soc,
        payment_interval=pay,
        surplus_interval=surplus,
        bills=bills,
        totals=totals,
        clip_events=clip_events,
    )


def _active_dg_batch(curve: AggregateCurve, rate: NemRate, g: np.ndarray) -> np.ndarray:
    """Vectorized storage-free policy: track g inside the response range."""
    d_buy = curve.allocation_at_price(rate.buy_rate)
    d_exp = curve.allocation_at_price(rate.export_rate)
    f_buy, f_exp = float(d_buy.sum()), float(d_exp.sum())
    out = np.empty((len(g), len(curve.devices)))
    low = g < f_buy
    high = g > f_exp
    mid = ~(low | high)
    out[low] = d_buy
    out[high] = d_exp
    if mid.any():
        lam = curve.inverse(g[mid])
        out[mid] = curve.allocation_at_price(lam)
    return out


def _active_dg_row(curve: AggregateCurve, tab: PolicyTables, g_eff: float) -> np.ndarray:
    """Storage-free optimum at effective generation, for clip re-solves."""
    f_buy = float(tab.d_buy.sum())
    f_exp = float(tab.d_exp.sum())
    if g_eff < f_buy:
        return tab.d_buy
    if g_eff > f_exp:
        return tab.d_exp
    lam = curve.inverse(g_eff)
    return curve.allocation_at_price(lam)


@dataclass(frozen=True)
class CompareRow:
    customer_type: str
    storage_rate_kw: float
    gains: dict[int, float]
    self_consumption: dict[int, float | None]
    clip_events: int


@dataclass(frozen=True)
class ComparisonTable:
    """Surplus gains over the consumer benchmark, per netting and storage rate."""

    rows: tuple[CompareRow, ...]
    nettings: tuple[int, ...]
    benchmark: dict[int, float]


def compare_customers(
    scenario: Scenario,
    storage_rates_kw: Sequence[float] = (0.5, 0.75, 1.0),
    nettings: Sequence[int] = (1, 60),
) -> ComparisonTable:
    """Run all five customer types on identical traces.

    Policies are evaluated per interval; the netting window only changes
    how the resulting net-consumption trace is billed, so each run is
    settled once per requested netting. Storage rates are in kW and are
    converted to per-interval energy by the interval length.
    """
    if scenario.battery is None:
        raise ValueError("compare_customers needs a battery template")
    for n in nettings:
        if scenario.horizon % n != 0:
            raise ValueError(f"netting {n} does not divide horizon {scenario.horizon}")

    def report_for(kind: str, battery: Battery | None) -> SimReport:
        sc = replace(scenario, customer_type=kind, battery=battery)
        return run(sc)

    consumer = report_for("consumer", None)
    benchmark = {n: consumer.billed_surplus(n) for n in nettings}
    rows = [
        CompareRow("consumer", 0.0, {n: 0.0 for n in nettings}, dict.fromkeys(nettings), 0)
    ]
    for kind in ("passive_dg", "active_dg"):
        rep = report_for(kind, None)
        rows.append(
            CompareRow(
                kind,
                0.0,
                {n: analysis.surplus_gain(rep.billed_surplus(n), benchmark[n]) for n in nettings},
                {n: rep.self_consumption(n) for n in nettings},
                rep.clip_events,
            )
        )
    dt = scenario.dt_hours
    for rate_kw in storage_rates_kw:
        battery = replace(
            scenario.battery,
            charge_limit=rate_kw * dt,
            discharge_limit=rate_kw * dt,
        )
        for kind in ("passive_sdg", "active_sdg"):
            rep = report_for(kind, battery)
            rows.append(
                CompareRow(
                    kind,
                    rate_kw,
                    {
                        n: analysis.surplus_gain(rep.billed_surplus(n), benchmark[n])
                        for n in nettings
                    },
                    {n: rep.self_consumption(n) for n in nettings},
                    rep.clip_events,
                )
            )
    return ComparisonTable(tuple(rows), tuple(nettings), benchmark)


@dataclass(frozen=True)
class SweepRow:
    value: float
    gains: dict[str, float]
    skipped: bool = False
    note: str = ""


@dataclass(frozen=True)
class SweepTable:
    parameter: str  # "export_rate" or "efficiency"
    rows: tuple[SweepRow, ...]


_PAIRINGS = (
    ("active_sdg", "active_dg"),
    ("passive_sdg", "passive_dg"),
    ("active_sdg", "passive_dg"),
    ("passive_sdg", "active_dg"),
)


def value_of_storage_sweep(
    scenario: Scenario,
    export_rates: Sequence[float] | None = None,
    efficiencies: Sequence[float] | None = None,
    storage_rate_kw: float = 0.75,
) -> SweepTable:
    """Surplus gain of storage customers over storage-free ones along a grid.

    Exactly one of ``export_rates`` / ``efficiencies`` must be given. Grid
    points where the salvage sandwich fails are kept in the table but
    flagged as skipped.
    """
    if (export_rates is None) == (efficiencies is None):
        raise ValueError("provide exactly one of export_rates or efficiencies")
    if scenario.battery is None:
        raise ValueError("value_of_storage_sweep needs a battery template")
    if scenario.export_override is not None:
        raise ValueError("sweeps do not support per-interval export overrides")
    grid = export_rates if export_rates is not None else efficiencies
    parameter = "export_rate" if export_rates is not None else "efficiency"
    if not len(grid):
        raise SweepError("sweep grid is empty")

    dt = scenario.dt_hours
    base_battery = replace(
        scenario.battery,
        charge_limit=storage_rate_kw * dt,
        discharge_limit=storage_rate_kw * dt,
    )
    rows = []
    for value in grid:
        try:
            if parameter == "export_rate":
                windows = tuple(
                    replace(w, rate=replace(w.rate, export_rate=float(value)))
                    for w in scenario.schedule.windows
                )
                schedule = replace(scenario.schedule, windows=windows)
                battery = base_battery
            else:
                if not 0 < value <= 1:
                    raise ValueError(f"efficiency must lie in (0, 1], got {value}")
                schedule = scenario.schedule
                battery = replace(
                    base_battery, charge_eff=float(value), discharge_eff=float(value)
                )
            check = check_salvage_sandwich(battery, [w.rate for w in schedule.windows])
            if not check.passed:
                rows.append(
                    SweepRow(float(value), {}, skipped=True, note=check.violations[0])
                )
                continue
        except ValueError as exc:
            rows.append(SweepRow(float(value), {}, skipped=True, note=str(exc)))
            continue

        reports = {}
        for kind in ("passive_dg", "active_dg", "passive_sdg", "active_sdg"):
            sc = replace(
                scenario,
                customer_type=kind,
                schedule=schedule,
                battery=battery if kind in _SDG_TYPES else None,
            )
            reports[kind] = run(sc)
        gains = {}
        for sdg, dg in _PAIRINGS:
            try:
                gains[f"{sdg}_vs_{dg}"] = analysis.surplus_gain(
                    reports[sdg].billed_surplus(), reports[dg].billed_surplus()
                )
            except MetricError:
                gains[f"{sdg}_vs_{dg}"] = float("nan")
        rows.append(SweepRow(float(value), gains))

    if all(r.skipped for r in rows):
        raise SweepError("no feasible grid points in the sweep")
    return SweepTable(parameter, tuple(rows))
