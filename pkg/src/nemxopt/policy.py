"""Closed-form co-optimization of storage and flexible demand.

For one interval, the household picks device consumptions and a storage
action to maximize utility minus the net-metering payment plus the salvage
value of the state-of-charge change. When the salvage value is sandwiched
between the export and buy rates, the optimum is a threshold policy in the
renewable output g: six breakpoints split the g-axis into seven ranges, and
in each range the consumption is pinned to a price response while the
storage either saturates a power limit, absorbs the remaining renewable
slack, or idles. Between the outermost breakpoints the household runs at
exactly zero net consumption.

Everything here is a pure function of immutable inputs. ``PolicyTables``
precomputes the per-rate machinery once so simulations can evaluate whole
g-arrays at a time; the scalar ``decide`` path goes through the generic
bisection allocator instead, which keeps the two routes independently
checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import demand
from .demand import AggregateCurve, Device, aggregate_response, device_response
from .errors import SandwichError
from .storage import Battery
from .tariff import NemRate, payment

# Absolute tolerance for classifying net consumption as exactly zero.
ZONE_TOL = 1e-9

ZONE_PLUS = "+"
ZONE_ZERO = "0"
ZONE_MINUS = "-"

_SANDWICH_TOL = 1e-12


@dataclass(frozen=True)
class Thresholds:
    """The six renewable-output breakpoints of the policy, in kWh.

    Ordered nondecreasing: delta_plus <= sigma_plus <= sigma_plus_o
    <= sigma_minus_o <= sigma_minus <= delta_minus. Below ``delta_plus``
    the household imports; above ``delta_minus`` it exports; in between it
    is off the grid.
    """

    delta_plus: float
    sigma_plus: float
    sigma_plus_o: float
    sigma_minus_o: float
    sigma_minus: float
    delta_minus: float

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.delta_plus,
            self.sigma_plus,
            self.sigma_plus_o,
            self.sigma_minus_o,
            self.sigma_minus,
            self.delta_minus,
        )


@dataclass(frozen=True)
class Decision:
    """One interval's scheduling outcome.

    ``net`` is total consumption plus storage action minus renewable
    output. ``zone`` is "+", "0", or "-" by the sign of ``net`` (within
    ZONE_TOL of zero counts as "0"). ``payment`` and ``surplus`` are None
    when no rate/utility context was supplied (fixed-demand policies called
    without a rate).
    """

    consumption: tuple[float, ...]
    storage: float
    net: float
    zone: str
    payment: float | None = None
    surplus: float | None = None
    marginal_price: float | None = None

    @property
    def total_consumption(self) -> float:
        return sum(self.consumption)


@dataclass(frozen=True)
class PriorityClass:
    """Where one device sits in the load priority order.

    ``rank`` follows the five marginal-utility cases: 1 consumes in every
    zone, 5 never consumes above its floor. ``activation`` is the smallest
    renewable output at which the device consumes above d_min: 0.0 for
    rank 1, +inf for rank 5.
    """

    device_id: str
    rank: int
    activation: float

    @property
    def label(self) -> str:
        if self.rank == 1:
            return "always"
        if self.rank == 5:
            return "never"
        return f"g > {self.activation:.6g}"


@dataclass(frozen=True)
class PolicyCase:
    """One (devices, rate, battery) configuration at a fixed interval."""

    devices: tuple[Device, ...]
    rate: NemRate
    battery: Battery
    t: int = 0

    def thresholds(self, check: bool = True) -> Thresholds:
        return thresholds(self.devices, self.rate, self.battery, self.t, check)

    def decide(self, g: float, check: bool = True) -> Decision:
        return decide(g, self.devices, self.rate, self.battery, self.t, check)

    def tables(self, check: bool = True) -> "PolicyTables":
        return PolicyTables(self.devices, self.rate, self.battery, self.t, check)


def check_sandwich(rate: NemRate, battery: Battery) -> None:
    """Raise SandwichError unless export <= charge value <= discharge cost <= buy."""
    if rate.export_rate > battery.charge_value + _SANDWICH_TOL:
        raise SandwichError(
            f"export rate {rate.export_rate} exceeds stored-energy value "
            f"{battery.charge_value}; the threshold policy is not valid here"
        )
    if battery.discharge_cost > rate.buy_rate + _SANDWICH_TOL:
        raise SandwichError(
            f"discharge cost {battery.discharge_cost} exceeds buy rate "
            f"{rate.buy_rate}; the threshold policy is not valid here"
        )


def thresholds(
    devices: Sequence[Device],
    rate: NemRate,
    battery: Battery,
    t: int = 0,
    check: bool = True,
) -> Thresholds:
    """The six breakpoints for one rate and battery.

    Each is an aggregate price response shifted by a storage power limit:
    the response at the buy rate less the discharge limit opens the
    net-zero zone, the response at the export rate plus the charge limit
    closes it, and the responses at the discharge cost and charge value
    bracket the storage-idle stretch in between.
    """
    if check:
        check_sandwich(rate, battery)
    f_buy = aggregate_response(devices, rate.buy_rate, t)
    f_dis = aggregate_response(devices, battery.discharge_cost, t)
    f_chg = aggregate_response(devices, battery.charge_value, t)
    f_exp = aggregate_response(devices, rate.export_rate, t)
    return Thresholds(
        delta_plus=f_buy - battery.discharge_limit,
        sigma_plus=f_dis - battery.discharge_limit,
        sigma_plus_o=f_dis,
        sigma_minus_o=f_chg,
        sigma_minus=f_chg + battery.charge_limit,
        delta_minus=f_exp + battery.charge_limit,
    )


def _zone_of(z: float) -> str:
    if z > ZONE_TOL:
        return ZONE_PLUS
    if z < -ZONE_TOL:
        return ZONE_MINUS
    return ZONE_ZERO


def _finish(devices, rate, t, d_list, e, g, price) -> Decision:
    z = sum(d_list) + e - g
    pay = payment(rate, z)
    surplus = demand.utility_value(devices, d_list, t) - pay
    return Decision(
        consumption=tuple(d_list),
        storage=e,
        net=z,
        zone=_zone_of(z),
        payment=pay,
        surplus=surplus,
        marginal_price=price,
    )


def decide(
    g: float,
    devices: Sequence[Device],
    rate: NemRate,
    battery: Battery,
    t: int = 0,
    check: bool = True,
) -> Decision:
    """Optimal consumption and storage action for renewable output ``g``.

    Walks the seven threshold ranges. In the price-pegged ranges every
    device consumes its response at the relevant price and storage
    saturates a limit, idles, or soaks up the renewable slack; in the
    allocation ranges the net consumption is held at zero by water-filling
    the available energy across devices.
    """
    if g < 0:
        raise ValueError(f"renewable output must be nonnegative, got {g}")
    thr = thresholds(devices, rate, battery, t, check)
    e_chg, e_dis = battery.charge_limit, battery.discharge_limit

    if g <= thr.delta_plus:
        d = [device_response(dv, rate.buy_rate, t) for dv in devices]
        return _finish(devices, rate, t, d, -e_dis, g, rate.buy_rate)
    if g <= thr.sigma_plus:
        lam, d = demand.allocate(devices, g + e_dis, t)
        return _finish(devices, rate, t, [float(x) for x in d], -e_dis, g, lam)
    if g <= thr.sigma_plus_o:
        d = [device_response(dv, battery.discharge_cost, t) for dv in devices]
        return _finish(devices, rate, t, d, g - sum(d), g, battery.discharge_cost)
    if g <= thr.sigma_minus_o:
        lam, d = demand.allocate(devices, g, t)
        return _finish(devices, rate, t, [float(x) for x in d], 0.0, g, lam)
    if g <= thr.sigma_minus:
        d = [device_response(dv, battery.charge_value, t) for dv in devices]
        return _finish(devices, rate, t, d, g - sum(d), g, battery.charge_value)
    if g <= thr.delta_minus:
        lam, d = demand.allocate(devices, g - e_chg, t)
        return _finish(devices, rate, t, [float(x) for x in d], e_chg, g, lam)
    d = [device_response(dv, rate.export_rate, t) for dv in devices]
    return _finish(devices, rate, t, d, e_chg, g, rate.export_rate)


class PolicyTables:
    """Precomputed decision machinery for one (devices, rate, battery, t).

    Requires quadratic utilities: the aggregate response is then an exact
    piecewise-linear curve, so whole g-arrays can be classified and
    allocated without iteration. The scalar ``decide`` function is the
    generic route; the two are cross-checked in the test suite.
    """

    def __init__(
        self,
        devices: Sequence[Device],
        rate: NemRate,
        battery: Battery,
        t: int = 0,
        check: bool = True,
    ) -> None:
        if check:
            check_sandwich(rate, battery)
        self.devices = tuple(devices)
        self.rate = rate
        self.battery = battery
        self.t = t
        self.curve = AggregateCurve(devices, t)
        self.d_buy = self.curve.allocation_at_price(rate.buy_rate)
        self.d_dis = self.curve.allocation_at_price(battery.discharge_cost)
        self.d_chg = self.curve.allocation_at_price(battery.charge_value)
        self.d_exp = self.curve.allocation_at_price(rate.export_rate)
        f_buy = float(self.d_buy.sum())
        f_dis = float(self.d_dis.sum())
        f_chg = float(self.d_chg.sum())
        f_exp = float(self.d_exp.sum())
        self.thresholds = Thresholds(
            delta_plus=f_buy - battery.discharge_limit,
            sigma_plus=f_dis - battery.discharge_limit,
            sigma_plus_o=f_dis,
            sigma_minus_o=f_chg,
            sigma_minus=f_chg + battery.charge_limit,
            delta_minus=f_exp + battery.charge_limit,
        )

    def decide_batch(self, g) -> "BatchDecisions":
        """Vectorized policy over an array of renewable outputs."""
        g = np.asarray(g, dtype=float)
        if np.any(g < 0):
            raise ValueError("renewable output must be nonnegative")
        thr = np.array(self.thresholds.as_tuple())
        col = np.searchsorted(thr, g, side="left")  # 0..6

        n = len(g)
        k = len(self.devices)
        d = np.empty((n, k))
        e = np.empty(n)
        price = np.empty(n)
        e_chg = self.battery.charge_limit
        e_dis = self.battery.discharge_limit

        fixed = {
            0: (self.d_buy, self.rate.buy_rate),
            2: (self.d_dis, self.battery.discharge_cost),
            4: (self.d_chg, self.battery.charge_value),
            6: (self.d_exp, self.rate.export_rate),
        }
        for c, (alloc, p) in fixed.items():
            mask = col == c
            if mask.any():
                d[mask] = alloc
                price[mask] = p
        # Slack columns: storage absorbs whatever the pegged consumption leaves.
        e[col == 0] = -e_dis
        e[col == 2] = g[col == 2] - float(self.d_dis.sum())
        e[col == 4] = g[col == 4] - float(self.d_chg.sum())
        e[col == 6] = e_chg

        # Allocation columns: storage saturates (or idles) and the devices
        # split the remaining energy so the net consumption stays at zero.
        for c, shift, e_val in ((1, e_dis, -e_dis), (3, 0.0, 0.0), (5, -e_chg, e_chg)):
            mask = col == c
            if mask.any():
                lam = self.curve.inverse(g[mask] + shift)
                d[mask] = self.curve.allocation_at_price(lam)
                price[mask] = lam
                e[mask] = e_val

        z = d.sum(axis=1) + e - g
        pay = (
            self.rate.buy_rate * np.maximum(z, 0.0)
            + self.rate.export_rate * np.minimum(z, 0.0)
            + self.rate.fixed_charge
        )
        surplus = self.curve.utility(d) - pay
        zone = np.where(z > ZONE_TOL, 1, np.where(z < -ZONE_TOL, -1, 0)).astype(np.int8)
        return BatchDecisions(d, e, z, zone, pay, surplus, price)

    def decide(self, g: float) -> Decision:
        """Scalar decision through the precomputed tables."""
        batch = self.decide_batch(np.array([g]))
        return batch.decision_at(0)


@dataclass
class BatchDecisions:
    """Array-of-structs view of decisions over a g-grid."""

    consumption: np.ndarray  # (n, k)
    storage: np.ndarray
    net: np.ndarray
    zone: np.ndarray  # int8: +1, 0, -1
    payment: np.ndarray
    surplus: np.ndarray
    marginal_price: np.ndarray

    def decision_at(self, i: int) -> Decision:
        zone = {1: ZONE_PLUS, 0: ZONE_ZERO, -1: ZONE_MINUS}[int(self.zone[i])]
        return Decision(
            consumption=tuple(self.consumption[i]),
            storage=float(self.storage[i]),
            net=float(self.net[i]),
            zone=zone,
            payment=float(self.payment[i]),
            surplus=float(self.surplus[i]),
            marginal_price=float(self.marginal_price[i]),
        )


def priority_rank(
    devices: Sequence[Device],
    rate: NemRate,
    battery: Battery,
    t: int = 0,
    check: bool = True,
) -> list[PriorityClass]:
    """Classify devices by when the policy lets them consume above d_min.

    A device's class depends only on its marginal utility at d_min relative
    to the four prices the policy pegs consumption to. The activation value
    is exact for every device: it is the aggregate response at the device's
    own entry price, shifted by the storage limit active in that range.
    Devices with d_min > 0 consume their floor in every zone regardless of
    class; uncontrollable devices never move above it.
    """
    if check:
        check_sandwich(rate, battery)
    out: list[PriorityClass] = []
    for dv in devices:
        entry = demand.marginal_utility(dv, dv.d_min, t)
        if entry > rate.buy_rate:
            rank, activation = 1, 0.0
        elif entry > battery.discharge_cost:
            rank = 2
            activation = max(
                0.0,
                aggregate_response(devices, entry, t) - battery.discharge_limit,
            )
        elif entry > battery.charge_value:
            rank = 3
            activation = aggregate_response(devices, entry, t)
        elif entry > rate.export_rate:
            rank = 4
            activation = aggregate_response(devices, entry, t) + battery.charge_limit
        else:
            rank, activation = 5, math.inf
        out.append(PriorityClass(device_id=dv.id, rank=rank, activation=activation))
    return out


def passive_decide(
    g: float,
    fixed_demand: float,
    battery: Battery,
    rate: NemRate | None = None,
) -> Decision:
    """Storage-only policy for a fixed total consumption.

    Charges or discharges as much as the power limits allow to pull net
    consumption toward zero: the storage action is the negated
    renewable-adjusted demand clamped to the limits, which minimizes |net|
    over all feasible actions.
    """
    if fixed_demand < 0:
        raise ValueError(f"fixed demand must be nonnegative, got {fixed_demand}")
    residual = fixed_demand - g
    e = min(battery.charge_limit, max(-battery.discharge_limit, -residual))
    z = residual + e
    pay = payment(rate, z) if rate is not None else None
    return Decision(
        consumption=(fixed_demand,),
        storage=e,
        net=z,
        zone=_zone_of(z),
        payment=pay,
    )


def active_dg_decide(
    g: float,
    devices: Sequence[Device],
    rate: NemRate,
    t: int = 0,
) -> Decision:
    """Storage-free policy: track the renewable inside the response range.

    Consumption pegs to the buy-rate response below it, follows g exactly
    between the buy- and export-rate responses (net zero), and pegs to the
    export-rate response above.
    """
    if g < 0:
        raise ValueError(f"renewable output must be nonnegative, got {g}")
    f_buy = aggregate_response(devices, rate.buy_rate, t)
    f_exp = aggregate_response(devices, rate.export_rate, t)
    if g < f_buy:
        d = [device_response(dv, rate.buy_rate, t) for dv in devices]
        price = rate.buy_rate
    elif g <= f_exp:
        price, alloc = demand.allocate(devices, g, t)
        d = [float(x) for x in alloc]
    else:
        d = [device_response(dv, rate.export_rate, t) for dv in devices]
        price = rate.export_rate
    return _finish(devices, rate, t, d, 0.0, g, price)


def passive_dg_decide(
    g: float,
    fixed_demand: float,
    rate: NemRate | None = None,
) -> Decision:
    """No storage, no flexibility: net consumption is demand minus renewable."""
    z = fixed_demand - g
    pay = payment(rate, z) if rate is not None else None
    return Decision(
        consumption=(fixed_demand,),
        storage=0.0,
        net=z,
        zone=_zone_of(z),
        payment=pay,
    )
