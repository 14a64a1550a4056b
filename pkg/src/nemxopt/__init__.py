"""Co-optimization of behind-the-meter storage and flexible demand under
net-metering tariffs: closed-form threshold policy, load priority ranking,
net-zero-zone analysis, a brute-force certification oracle, and a
time-series simulation harness."""

from .demand import (
    AggregateCurve,
    CustomUtility,
    Device,
    QuadraticUtility,
    aggregate_response,
    allocate,
    calibrate_quadratic,
    device_response,
    invert_aggregate,
    marginal_utility,
    utility_value,
)
from .errors import (
    ConfigError,
    InfeasibleTargetError,
    MetricError,
    NemxError,
    OracleScaleError,
    ProbeError,
    SandwichError,
    SweepError,
)
from .policy import (
    Decision,
    PolicyCase,
    PolicyTables,
    PriorityClass,
    Thresholds,
    active_dg_decide,
    decide,
    passive_decide,
    passive_dg_decide,
    priority_rank,
    thresholds,
)
from .storage import (
    Battery,
    SalvageCheck,
    check_salvage_sandwich,
    feasible_action_interval,
    soc_step,
)
from .tariff import NemRate, TariffSchedule, TariffWindow, bill_trace, payment, rate_at

__version__ = "0.1.0"

__all__ = [
    "AggregateCurve",
    "Battery",
    "ConfigError",
    "CustomUtility",
    "Decision",
    "Device",
    "InfeasibleTargetError",
    "MetricError",
    "NemRate",
    "NemxError",
    "OracleScaleError",
    "PolicyCase",
    "PolicyTables",
    "PriorityClass",
    "ProbeError",
    "QuadraticUtility",
    "SalvageCheck",
    "SandwichError",
    "SweepError",
    "TariffSchedule",
    "TariffWindow",
    "Thresholds",
    "active_dg_decide",
    "aggregate_response",
    "allocate",
    "bill_trace",
    "calibrate_quadratic",
    "check_salvage_sandwich",
    "decide",
    "device_response",
    "feasible_action_interval",
    "invert_aggregate",
    "marginal_utility",
    "passive_decide",
    "passive_dg_decide",
    "payment",
    "priority_rank",
    "rate_at",
    "soc_step",
    "thresholds",
    "utility_value",
]
