"""Net-zero-zone quantification, comparative statics, report metrics.

The net-zero zone is the interval of renewable outputs over which a
customer's policy holds net consumption at exactly zero; its length grows
with each flexible resource the customer adds, and the co-optimizing
customer's zone length is exactly the sum of the storage-only and
flexibility-only lengths. The statics probe perturbs one exogenous
parameter at a time and reports the observed direction of change of the
optimal decisions, payment, and surplus inside each zone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import policy as policy_mod
from .demand import Device, aggregate_response
from .errors import MetricError, ProbeError, SandwichError
from .policy import PolicyCase, Thresholds
from .storage import Battery
from .tariff import NemRate

PROSUMER_TYPES = ("passive_dg", "active_dg", "passive_sdg", "active_sdg")

INCREASING = "increasing"
DECREASING = "decreasing"
UNCHANGED = "unchanged"
INDETERMINATE = "indeterminate"

QUANTITIES = ("d", "e", "P", "S")
ZONES = ("+", "0", "-")
PARAMETERS = ("g", "pi_plus", "pi_minus", "gamma", "pi0")

_FLAT_TOL = 1e-12


@dataclass(frozen=True)
class ZoneReport:
    """Net-zero interval [g_lo, g_hi] for one prosumer type."""

    prosumer_type: str
    g_lo: float
    g_hi: float

    @property
    def length(self) -> float:
        return self.g_hi - self.g_lo


def net_zero_zone(
    prosumer_type: str,
    devices: Sequence[Device],
    rate: NemRate,
    battery: Battery,
    t: int = 0,
) -> ZoneReport:
    """Exact net-zero interval of one prosumer type's optimal policy.

    Storage widens the buy-rate response point by the power limits;
    flexible demand stretches it to the whole band between the buy- and
    export-rate responses; together they do both.
    """
    if prosumer_type not in PROSUMER_TYPES:
        raise ValueError(
            f"unknown prosumer type {prosumer_type!r}; expected one of "
            f"{PROSUMER_TYPES}"
        )
    policy_mod.check_sandwich(rate, battery)
    f_buy = aggregate_response(devices, rate.buy_rate, t)
    if prosumer_type == "passive_dg":
        lo, hi = f_buy, f_buy
    elif prosumer_type == "active_dg":
        lo, hi = f_buy, aggregate_response(devices, rate.export_rate, t)
    elif prosumer_type == "passive_sdg":
        lo = f_buy - battery.discharge_limit
        hi = f_buy + battery.charge_limit
    else:  # active_sdg
        thr = policy_mod.thresholds(devices, rate, battery, t)
        lo, hi = thr.delta_plus, thr.delta_minus
    return ZoneReport(prosumer_type, lo, hi)


def self_consumption(z_trace, g_trace) -> float:
    """Share of generation absorbed on-site: 1 - total exports / total generation.

    Clamped to [0, 1]; storage can export previously stored energy, which
    would otherwise push the ratio below zero.
    """
    z = np.asarray(z_trace, dtype=float)
    g = np.asarray(g_trace, dtype=float)
    total_g = float(g.sum())
    if total_g <= 0:
        raise MetricError("self-consumption is undefined without generation")
    exports = float(-np.minimum(z, 0.0).sum())
    return float(np.clip(1.0 - exports / total_g, 0.0, 1.0))


def surplus_gain(candidate: float, benchmark: float) -> float:
    """Percent surplus gain of a candidate over a positive benchmark."""
    if benchmark <= 0:
        raise MetricError(
            f"surplus gain undefined for nonpositive benchmark {benchmark}"
        )
    return 100.0 * (candidate - benchmark) / benchmark


# Expected direction of change per (quantity, zone): one entry per parameter.
# The payment response to a buy-rate increase in the import zone depends on
# how elastic the demand is, so it is genuinely indeterminate.
EXPECTED_STATICS: dict[tuple[str, str], dict[str, str]] = {
    ("d", "+"): {
        "g": UNCHANGED,
        "pi_plus": DECREASING,
        "pi_minus": UNCHANGED,
        "gamma": UNCHANGED,
        "pi0": UNCHANGED,
    },
    ("d", "-"): {
        "g": UNCHANGED,
        "pi_plus": UNCHANGED,
        "pi_minus": DECREASING,
        "gamma": UNCHANGED,
        "pi0": UNCHANGED,
    },
    ("d", "0"): {
        "g": INCREASING,
        "pi_plus": UNCHANGED,
        "pi_minus": UNCHANGED,
        "gamma": DECREASING,
        "pi0": UNCHANGED,
    },
    ("e", "+"): {p: UNCHANGED for p in PARAMETERS},
    ("e", "-"): {p: UNCHANGED for p in PARAMETERS},
    ("e", "0"): {
        "g": INCREASING,
        "pi_plus": UNCHANGED,
        "pi_minus": UNCHANGED,
        "gamma": INCREASING,
        "pi0": UNCHANGED,
    },
    ("P", "+"): {
        "g": DECREASING,
        "pi_plus": INDETERMINATE,
        "pi_minus": UNCHANGED,
        "gamma": UNCHANGED,
        "pi0": INCREASING,
    },
    ("P", "-"): {
        "g": DECREASING,
        "pi_plus": UNCHANGED,
        "pi_minus": DECREASING,
        "gamma": UNCHANGED,
        "pi0": INCREASING,
    },
    ("P", "0"): {
        "g": UNCHANGED,
        "pi_plus": UNCHANGED,
        "pi_minus": UNCHANGED,
        "gamma": UNCHANGED,
        "pi0": INCREASING,
    },
    ("S", "+"): {
        "g": INCREASING,
        "pi_plus": DECREASING,
        "pi_minus": UNCHANGED,
        "gamma": UNCHANGED,
        "pi0": DECREASING,
    },
    ("S", "-"): {
        "g": INCREASING,
        "pi_plus": UNCHANGED,
        "pi_minus": INCREASING,
        "gamma": UNCHANGED,
        "pi0": DECREASING,
    },
    ("S", "0"): {
        "g": INCREASING,
        "pi_plus": UNCHANGED,
        "pi_minus": UNCHANGED,
        "gamma": DECREASING,
        "pi0": DECREASING,
    },
}


@dataclass(frozen=True)
class StaticsReport:
    """Observed vs. expected direction for one statics cell.

    ``passed`` is None for cells expected indeterminate (reported without
    assertion), otherwise whether the observed sign matches.
    """

    quantity: str
    zone: str
    parameter: str
    observed: str
    expected: str
    passed: bool | None


class _ZoneShift(Exception):
    """A probe step moved a sample point out of its zone."""


def _zone_points(thr: Thresholds, zone: str) -> list[float]:
    """Interior sample points for a zone.

    The import and export zones each get one midpoint. The net-zero zone is
    sampled at the midpoint of every nonempty policy sub-segment, because
    the salvage and renewable effects act on different sub-segments; a
    single midpoint would miss them.
    """
    if zone == "+":
        if thr.delta_plus <= 1e-9:
            raise ProbeError("net-consumption zone is empty under this configuration")
        return [thr.delta_plus / 2.0]
    if zone == "-":
        return [thr.delta_minus + max(1.0, thr.delta_minus)]
    edges = thr.as_tuple()
    pts = []
    for lo, hi in zip(edges, edges[1:]):
        lo = max(lo, 0.0)
        if hi - lo > 1e-9:
            pts.append(0.5 * (lo + hi))
    if not pts:
        raise ProbeError("net-zero zone is empty under this configuration")
    return pts


def _zone_of_g(thr: Thresholds, g: float) -> str:
    if g < thr.delta_plus:
        return "+"
    if g > thr.delta_minus:
        return "-"
    return "0"


def _perturbed_case(case: PolicyCase, parameter: str, eps: float) -> PolicyCase:
    if parameter == "g":
        return case
    if parameter == "pi_plus":
        rate = replace(case.rate, buy_rate=case.rate.buy_rate + eps)
        return replace(case, rate=rate)
    if parameter == "pi_minus":
        rate = replace(case.rate, export_rate=case.rate.export_rate + eps)
        return replace(case, rate=rate)
    if parameter == "gamma":
        battery = replace(
            case.battery, salvage_rate=case.battery.salvage_rate + eps
        )
        return replace(case, battery=battery)
    if parameter == "pi0":
        rate = replace(case.rate, fixed_charge=case.rate.fixed_charge + eps)
        return replace(case, rate=rate)
    raise ValueError(f"unknown parameter {parameter!r}; expected one of {PARAMETERS}")


def _probe_decisions(case: PolicyCase, zone: str, parameter: str, eps: float):
    """Base and perturbed decisions at the zone's sample points.

    Raises ValueError/SandwichError/_ZoneShift when the step is infeasible;
    the caller halves eps and retries.
    """
    thr = case.thresholds()
    pts = _zone_points(thr, zone)
    pert_case = _perturbed_case(case, parameter, eps)
    pert_pts = [p + eps for p in pts] if parameter == "g" else pts
    pert_thr = pert_case.thresholds()
    for p in pert_pts:
        if _zone_of_g(pert_thr, p) != zone:
            raise _ZoneShift(f"sample {p} left zone {zone}")
    base = [case.decide(p) for p in pts]
    pert = [pert_case.decide(p) for p in pert_pts]
    return base, pert


def _extract(quantity: str, decision) -> float:
    if quantity == "d":
        return decision.total_consumption
    if quantity == "e":
        return decision.storage
    if quantity == "P":
        return decision.payment
    if quantity == "S":
        return decision.surplus
    raise ValueError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")


def _classify(deltas: Sequence[float]) -> str:
    if all(abs(d) <= _FLAT_TOL for d in deltas):
        return UNCHANGED
    if all(d >= -_FLAT_TOL for d in deltas):
        return INCREASING
    if all(d <= _FLAT_TOL for d in deltas):
        return DECREASING
    return INDETERMINATE


def _observe(case: PolicyCase, zone: str, parameter: str, eps: float, max_halvings: int):
    step = eps
    for _ in range(max_halvings + 1):
        try:
            return _probe_decisions(case, zone, parameter, step), step
        except (_ZoneShift, SandwichError, ValueError):
            step /= 2.0
    raise ProbeError(
        f"no feasible probe step for {parameter} in zone {zone!r} after "
        f"{max_halvings} halvings"
    )


def statics_probe(
    quantity: str,
    zone: str,
    parameter: str,
    case: PolicyCase,
    eps: float = 1e-4,
    max_halvings: int = 20,
) -> StaticsReport:
    """Observed direction of change of one quantity in one zone.

    Evaluates the policy at interior points of the zone, nudges the
    parameter up by eps (halving eps until the perturbed configuration is
    valid and the points stay in the zone), and classifies the change:
    weakly one-signed with at least one strict move counts as that sign.
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")
    if zone not in ZONES:
        raise ValueError(f"unknown zone {zone!r}; expected one of {ZONES}")
    (base, pert), _ = _observe(case, zone, parameter, eps, max_halvings)
    deltas = [_extract(quantity, b) - _extract(quantity, a) for a, b in zip(base, pert)]
    observed = _classify(deltas)
    expected = EXPECTED_STATICS[(quantity, zone)][parameter]
    passed = None if expected == INDETERMINATE else observed == expected
    return StaticsReport(quantity, zone, parameter, observed, expected, passed)


def statics_table(
    case: PolicyCase, eps: float = 1e-4, max_halvings: int = 20
) -> list[StaticsReport]:
    """All statics cells for one configuration (decisions shared per probe)."""
    reports = []
    for zone in ZONES:
        for parameter in PARAMETERS:
            (base, pert), _ = _observe(case, zone, parameter, eps, max_halvings)
            for quantity in QUANTITIES:
                deltas = [
                    _extract(quantity, b) - _extract(quantity, a)
                    for a, b in zip(base, pert)
                ]
                observed = _classify(deltas)
                expected = EXPECTED_STATICS[(quantity, zone)][parameter]
                passed = None if expected == INDETERMINATE else observed == expected
                reports.append(
                    StaticsReport(quantity, zone, parameter, observed, expected, passed)
                )
    return reports
