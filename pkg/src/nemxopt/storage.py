"""Battery model: power limits, asymmetric efficiencies, SoC dynamics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .tariff import NemRate

_TOL = 1e-9


@dataclass(frozen=True)
class Battery:
    """Storage parameters in energy-per-interval units.

    ``charge_limit`` / ``discharge_limit`` bound the energy moved through
    the meter in one interval (kWh). Charging at e > 0 raises the state of
    charge by ``charge_eff * e``; discharging by e < 0 drains
    ``|e| / discharge_eff``. ``salvage_rate`` is the marginal value ($/kWh)
    assigned to energy left in the battery at the end of the horizon.
    """

    charge_limit: float
    discharge_limit: float
    charge_eff: float = 0.95
    discharge_eff: float = 0.95
    soc_min: float = 0.0
    soc_max: float = 13.5
    soc_init: float = 6.75
    salvage_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.charge_limit < 0 or self.discharge_limit < 0:
            raise ValueError(
                f"power limits must be nonnegative, got charge {self.charge_limit}, "
                f"discharge {self.discharge_limit}"
            )
        for name in ("charge_eff", "discharge_eff"):
            eff = getattr(self, name)
            if not 0 < eff <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {eff}")
        if not self.soc_min <= self.soc_init <= self.soc_max:
            raise ValueError(
                f"need soc_min <= soc_init <= soc_max, got "
                f"{self.soc_min} <= {self.soc_init} <= {self.soc_max}"
            )
        if self.salvage_rate < 0:
            raise ValueError(f"salvage_rate must be nonnegative, got {self.salvage_rate}")

    @property
    def charge_value(self) -> float:
        """Marginal value of charging 1 kWh: only charge_eff of it is stored."""
        return self.charge_eff * self.salvage_rate

    @property
    def discharge_cost(self) -> float:
        """Marginal cost of serving 1 kWh from storage: 1/discharge_eff is drained."""
        return self.salvage_rate / self.discharge_eff

    def soc_increment(self, e: float) -> float:
        """Change in state of charge from storage action ``e``."""
        if e >= 0:
            return self.charge_eff * e
        return e / self.discharge_eff

    def salvage_increment(self, e: float) -> float:
        """Salvage value of the SoC change from storage action ``e``."""
        return self.salvage_rate * self.soc_increment(e)


def soc_step(battery: Battery, s: float, e: float) -> float:
    """Next state of charge after applying ``e`` for one interval."""
    if e > battery.charge_limit + _TOL or e < -battery.discharge_limit - _TOL:
        raise ValueError(
            f"storage action {e} outside [-{battery.discharge_limit}, "
            f"{battery.charge_limit}]"
        )
    return s + battery.soc_increment(e)


def feasible_action_interval(s: float, battery: Battery) -> tuple[float, float]:
    """Storage actions keeping the next SoC within capacity.

    Tighter than the power limits when the battery is nearly full or
    nearly empty; always contains 0.
    """
    if not battery.soc_min - _TOL <= s <= battery.soc_max + _TOL:
        raise ValueError(
            f"state of charge {s} outside [{battery.soc_min}, {battery.soc_max}]"
        )
    e_hi = min(battery.charge_limit, (battery.soc_max - s) / battery.charge_eff)
    e_lo = -min(battery.discharge_limit, (s - battery.soc_min) * battery.discharge_eff)
    return min(e_lo, 0.0), max(e_hi, 0.0)


@dataclass(frozen=True)
class SalvageCheck:
    """Result of the salvage-sandwich validation.

    Passing means every rate in the horizon satisfies
    export_rate <= charge_value <= discharge_cost <= buy_rate, the regime
    in which the closed-form policy is optimal.
    """

    passed: bool
    charge_value: float
    discharge_cost: float
    violations: tuple[str, ...]


def check_salvage_sandwich(battery: Battery, rates: Sequence[NemRate]) -> SalvageCheck:
    """Validate the salvage value against every rate in the horizon."""
    violations: list[str] = []
    for i, rate in enumerate(rates):
        if rate.export_rate > battery.charge_value + _TOL:
            violations.append(
                f"rate {i}: export rate {rate.export_rate} exceeds stored-energy "
                f"value {battery.charge_value}"
            )
        if battery.discharge_cost > rate.buy_rate + _TOL:
            violations.append(
                f"rate {i}: discharge cost {battery.discharge_cost} exceeds buy "
                f"rate {rate.buy_rate}"
            )
    return SalvageCheck(
        passed=not violations,
        charge_value=battery.charge_value,
        discharge_cost=battery.discharge_cost,
        violations=tuple(violations),
    )
