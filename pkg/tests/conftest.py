"""Shared fixtures: the worked single-device case and random-case samplers."""

from __future__ import annotations

import numpy as np
import pytest

from nemxopt import Battery, Device, NemRate, QuadraticUtility
from nemxopt.policy import PolicyCase


def worked_devices() -> tuple[Device, ...]:
    return (Device("load", 0.0, 10.0, QuadraticUtility(1.0, 0.1)),)


def worked_battery(**overrides) -> Battery:
    # charge_eff * salvage = 0.2 and salvage / discharge_eff = 0.3
    params = dict(
        charge_limit=2.0,
        discharge_limit=2.0,
        charge_eff=2.0 / 3.0,
        discharge_eff=1.0,
        soc_min=0.0,
        soc_max=1000.0,
        soc_init=500.0,
        salvage_rate=0.3,
    )
    params.update(overrides)
    return Battery(**params)


@pytest.fixture
def worked_case() -> PolicyCase:
    """Single quadratic device, buy 0.5 / export 0.1, charge value 0.2,
    discharge cost 0.3, both storage limits 2. Thresholds (3,5,7,8,10,11)."""
    return PolicyCase(
        devices=worked_devices(),
        rate=NemRate(0.5, 0.1),
        battery=worked_battery(),
    )


def sample_case(
    rng: np.random.Generator,
    k_max: int = 4,
    interior: bool = False,
) -> PolicyCase:
    """Random configuration satisfying the salvage sandwich strictly.

    ``interior=True`` restricts to cases where every device responds
    strictly at all four policy prices and both zones +/- are nonempty,
    which the comparative-statics suite needs (a clamped response cannot
    show the strict signs).
    """
    buy = rng.uniform(0.35, 0.8)
    tau = rng.uniform(0.75, 0.95)
    rho = rng.uniform(0.75, 0.95)
    salvage = rng.uniform(0.3 * buy * rho, 0.8 * buy * rho)
    charge_value = tau * salvage
    export = rng.uniform(0.01, 0.8 * charge_value)

    k = int(rng.integers(1, k_max + 1))
    devices = []
    for i in range(k):
        beta = rng.uniform(0.08, 0.5)
        if interior:
            alpha = rng.uniform(1.1 * buy, 2.5 * buy)
            d_min = 0.0
            d_max = (alpha - export) / beta + rng.uniform(0.3, 1.0)
        else:
            alpha = rng.uniform(0.15, 2.0)
            d_min = float(rng.uniform(0.0, 0.4)) if rng.random() < 0.25 else 0.0
            d_max = d_min + rng.uniform(0.5, 10.0)
            if rng.random() < 0.1:
                d_max = d_min  # uncontrollable
        devices.append(
            Device(f"dev{i}", d_min, d_max, QuadraticUtility(alpha, beta))
        )

    if interior:
        f_buy = sum(
            min(dv.d_max, max(dv.d_min, (dv.utility.alpha - buy) / dv.utility.beta))
            for dv in devices
        )
        discharge_limit = rng.uniform(0.05, 0.6) * f_buy
        charge_limit = rng.uniform(0.1, 2.0)
    else:
        discharge_limit = rng.uniform(0.0, 2.5)
        charge_limit = rng.uniform(0.0, 2.5)

    battery = Battery(
        charge_limit=charge_limit,
        discharge_limit=discharge_limit,
        charge_eff=tau,
        discharge_eff=rho,
        soc_min=0.0,
        soc_max=1000.0,
        soc_init=500.0,
        salvage_rate=salvage,
    )
    return PolicyCase(tuple(devices), NemRate(buy, export), battery)


@pytest.fixture
def case_sampler():
    return sample_case
