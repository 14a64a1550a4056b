"""Flexible demands: concave utilities, price responses, allocation.

Each device consumes within fixed bounds and values consumption through a
strictly concave utility. The surplus-maximizing response to a marginal
price is the inverse marginal utility clamped to the bounds; summing over
devices gives the household's aggregate response, a nonincreasing
piecewise-monotone curve. Allocating a fixed total across devices means
inverting that curve: every device consumes at a common marginal price,
which is the water-filling split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InfeasibleTargetError

_PROBE_POINTS = 100
_BETA_MIN = 1e-9

# Bisection runs to float resolution; the contract only promises 1e-9.
INVERT_TOL = 1e-9
_BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class QuadraticUtility:
    """Saturating quadratic utility: alpha*d - beta/2 * d**2 up to d = alpha/beta.

    Marginal value falls linearly from ``alpha`` at zero consumption and
    floors at zero past the saturation point, so value() is flat there.
    """

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def saturation(self) -> float:
        return self.alpha / self.beta

    def value(self, d):
        d_eff = np.minimum(d, self.saturation)
        return self.alpha * d_eff - 0.5 * self.beta * d_eff * d_eff

    def marginal(self, d):
        return np.maximum(0.0, self.alpha - self.beta * d)

    def marginal_inverse(self, price):
        """Consumption where marginal value equals ``price`` (unclamped)."""
        return (self.alpha - price) / self.beta


class CustomUtility:
    """Concave utility supplied as (value, marginal, marginal_inverse) callables.

    The marginal must be nonincreasing, strictly decreasing wherever it is
    positive, and the inverse must invert it. All three are spot-checked on
    a probe grid over ``probe_range`` at construction; failures reject the
    utility. ``marginal_inverse`` must accept every price down to 0.0 and
    may return +inf there (the device bounds clamp it).
    """

    def __init__(
        self,
        value: Callable[[float], float],
        marginal: Callable[[float], float],
        marginal_inverse: Callable[[float], float],
        probe_range: tuple[float, float],
    ) -> None:
        lo, hi = probe_range
        if not 0 <= lo < hi:
            raise ValueError(f"probe_range must satisfy 0 <= lo < hi, got {probe_range}")
        grid = np.linspace(lo, hi, _PROBE_POINTS)
        m = np.array([float(marginal(x)) for x in grid])
        if np.any(m < -1e-12):
            raise ValueError("marginal utility must be nonnegative on the probe grid")
        if np.any(np.diff(m) > 1e-9):
            raise ValueError("marginal utility must be nonincreasing")
        pos = m > 1e-9
        if pos.sum() >= 2 and np.any(np.diff(m[pos]) >= -1e-12):
            raise ValueError(
                "marginal utility must be strictly decreasing where positive"
            )
        for x, mx in zip(grid[pos], m[pos]):
            back = float(marginal_inverse(mx))
            if abs(back - x) > 1e-6 * max(1.0, abs(x)):
                raise ValueError(
                    f"marginal_inverse({mx}) = {back} does not invert marginal at {x}"
                )
        self._value = value
        self._marginal = marginal
        self._marginal_inverse = marginal_inverse

    def value(self, d):
        return self._value(d)

    def marginal(self, d):
        return self._marginal(d)

    def marginal_inverse(self, price):
        return self._marginal_inverse(price)


@dataclass(frozen=True)
class Device:
    """One flexible load: consumption bounds plus a concave utility.

    ``d_min == d_max`` marks an uncontrollable load; it adds a constant to
    every allocation and no curvature to the aggregate response. Entries in
    ``utility_overrides`` replace the default utility at specific intervals.
    """

    id: str
    d_min: float
    d_max: float
    utility: QuadraticUtility | CustomUtility
    utility_overrides: Mapping[int, QuadraticUtility | CustomUtility] = field(
        default_factory=dict
    )

    def __post_init__(self) -> None:
        if not 0 <= self.d_min <= self.d_max:
            raise ValueError(
                f"device {self.id!r}: need 0 <= d_min <= d_max, "
                f"got [{self.d_min}, {self.d_max}]"
            )

    def utility_at(self, t: int):
        return self.utility_overrides.get(t, self.utility)

    @property
    def controllable(self) -> bool:
        return self.d_max > self.d_min


def marginal_utility(device: Device, d: float, t: int = 0) -> float:
    """Marginal value of consumption ``d`` for one device."""
    if d < 0:
        raise ValueError(f"consumption must be nonnegative, got {d}")
    return float(device.utility_at(t).marginal(d))


def device_response(device: Device, price: float, t: int = 0) -> float:
    """Surplus-maximizing consumption at a marginal price, clamped to bounds."""
    if price < 0:
        raise ValueError(f"price must be nonnegative, got {price}")
    raw = float(device.utility_at(t).marginal_inverse(price))
    return min(device.d_max, max(device.d_min, raw))


def aggregate_response(devices: Sequence[Device], price: float, t: int = 0) -> float:
    """Household response: sum of device responses at a common price."""
    return sum(device_response(dv, price, t) for dv in devices)


def utility_value(devices: Sequence[Device], allocation, t: int = 0) -> float:
    """Total utility of a per-device allocation."""
    return float(
        sum(float(dv.utility_at(t).value(d)) for dv, d in zip(devices, allocation))
    )


def total_bounds(devices: Sequence[Device]) -> tuple[float, float]:
    return (
        sum(dv.d_min for dv in devices),
        sum(dv.d_max for dv in devices),
    )


def _price_ceiling(devices: Sequence[Device], t: int) -> float:
    """Price above which every device sits at its lower bound."""
    return max(
        (marginal_utility(dv, dv.d_min, t) for dv in devices), default=0.0
    )


def invert_aggregate(
    devices: Sequence[Device], target: float, t: int = 0, tol: float = INVERT_TOL
) -> float:
    """Price at which the aggregate response equals ``target``.

    Bisection on the monotone aggregate response over [0, max marginal at
    d_min]. When the target sits on a plateau (an interval of prices with
    the same aggregate), the midpoint of the plateau is returned; the
    induced allocation is the same anywhere on the plateau. Quadratic-only
    device lists can cross-check against ``AggregateCurve.inverse``, the
    closed-form piecewise-linear inverse.
    """
    if not devices:
        raise InfeasibleTargetError("no devices to allocate to")
    lo_q, _ = total_bounds(devices)
    hi_q = aggregate_response(devices, 0.0, t)
    guard = tol * max(1.0, abs(target))
    if target < lo_q - guard or target > hi_q + guard:
        raise InfeasibleTargetError(
            f"target {target} outside aggregate response range [{lo_q}, {hi_q}]"
        )
    target = min(max(target, lo_q), hi_q)
    p_hi = _price_ceiling(devices, t)
    if p_hi <= 0:
        return 0.0
    eps = 1e-15 * max(1.0, p_hi)

    def f(p: float) -> float:
        return aggregate_response(devices, p, t)

    # Leftmost price with response <= target.
    if f(0.0) <= target:
        left = 0.0
    else:
        lo, hi = 0.0, p_hi
        for _ in range(_BISECT_MAX_ITER):
            if hi - lo <= eps:
                break
            mid = 0.5 * (lo + hi)
            if f(mid) <= target:
                hi = mid
            else:
                lo = mid
        left = hi
    # Rightmost price with response >= target.
    if f(p_hi) >= target:
        right = p_hi
    else:
        lo, hi = 0.0, p_hi
        for _ in range(_BISECT_MAX_ITER):
            if hi - lo <= eps:
                break
            mid = 0.5 * (lo + hi)
            if f(mid) >= target:
                lo = mid
            else:
                hi = mid
        right = lo
    return 0.5 * (left + right)


def allocate(
    devices: Sequence[Device], target: float, t: int = 0, tol: float = INVERT_TOL
) -> tuple[float, np.ndarray]:
    """Water-filling split of ``target`` across devices.

    Returns the common marginal price and the per-device allocation, the
    unique utility-maximizing split of the total.
    """
    price = invert_aggregate(devices, target, t, tol)
    return price, np.array([device_response(dv, price, t) for dv in devices])


def all_quadratic(devices: Sequence[Device], t: int = 0) -> bool:
    return all(isinstance(dv.utility_at(t), QuadraticUtility) for dv in devices)


class AggregateCurve:
    """Exact piecewise-linear aggregate response for quadratic devices.

    Stores the breakpoint polyline of price vs. total response so bulk
    evaluation and inversion need no iteration. ``inverse`` returns the
    plateau midpoint on flat stretches, matching ``invert_aggregate``.
    """

    def __init__(self, devices: Sequence[Device], t: int = 0) -> None:
        if not all_quadratic(devices, t):
            raise ValueError("AggregateCurve requires quadratic utilities")
        self.devices = tuple(devices)
        self.t = t
        utils = [dv.utility_at(t) for dv in devices]
        self.alpha = np.array([u.alpha for u in utils])
        self.beta = np.array([u.beta for u in utils])
        self.d_min = np.array([dv.d_min for dv in devices])
        self.d_max = np.array([dv.d_max for dv in devices])
        self.saturation = self.alpha / self.beta
        if len(devices):
            self._lo_corner = self.alpha - self.beta * self.d_min
            self._hi_corner = self.alpha - self.beta * self.d_max
            self.price_cap = float(np.maximum(0.0, self._lo_corner).max())
            corners = np.concatenate(([0.0], self._lo_corner, self._hi_corner))
            prices = np.unique(np.clip(corners, 0.0, self.price_cap))
        else:
            self._lo_corner = np.empty(0)
            self._hi_corner = np.empty(0)
            self.price_cap = 0.0
            prices = np.array([0.0])
        self._prices = prices
        self._quantities = self._corner_response(prices)

    def _corner_response(self, prices: np.ndarray) -> np.ndarray:
        """Polyline quantities with clamp corners evaluated exactly.

        At a breakpoint equal to a device's own clamp corner the division
        (alpha - p) / beta can land one ulp off the bound, which would split
        a plateau; comparing against the corner price directly keeps
        plateaus exactly flat.
        """
        if not len(self.devices):
            return np.zeros(len(prices))
        p = prices[:, None]
        vals = np.clip((self.alpha - p) / self.beta, self.d_min, self.d_max)
        vals = np.where(p <= self._hi_corner, self.d_max, vals)
        vals = np.where(p >= self._lo_corner, self.d_min, vals)
        return vals.sum(axis=1)

    def response(self, price) -> np.ndarray | float:
        """Aggregate response at one price or an array of prices."""
        p = np.asarray(price, dtype=float)
        if not len(self.devices):
            return np.zeros(p.shape) if p.shape else 0.0
        raw = (self.alpha - p[..., None]) / self.beta
        out = np.clip(raw, self.d_min, self.d_max).sum(axis=-1)
        return out if p.shape else float(out)

    def allocation_at_price(self, price) -> np.ndarray:
        """Per-device responses; last axis indexes devices."""
        p = np.asarray(price, dtype=float)
        raw = (self.alpha - p[..., None]) / self.beta
        return np.clip(raw, self.d_min, self.d_max)

    def utility(self, allocation) -> np.ndarray | float:
        """Total utility of per-device allocations (last axis = devices)."""
        d = np.asarray(allocation, dtype=float)
        d_eff = np.minimum(d, self.saturation)
        vals = (self.alpha * d_eff - 0.5 * self.beta * d_eff * d_eff).sum(axis=-1)
        return vals if d.ndim > 1 else float(vals)

    @property
    def min_total(self) -> float:
        return float(self.d_min.sum())

    @property
    def max_total(self) -> float:
        return float(self._quantities[0] if len(self._quantities) else 0.0)

    def inverse(self, target, tol: float = INVERT_TOL):
        """Price(s) at which the response equals ``target``; plateau midpoints.

        Scalar targets outside the response range raise
        InfeasibleTargetError; array targets are expected pre-validated and
        are clamped into range.
        """
        scalar = np.isscalar(target) or np.asarray(target).ndim == 0
        tgt = np.atleast_1d(np.asarray(target, dtype=float))
        q = self._quantities
        p = self._prices
        hi_q, lo_q = q[0], q[-1]
        if scalar:
            guard = tol * max(1.0, abs(float(tgt[0])))
            if tgt[0] < lo_q - guard or tgt[0] > hi_q + guard:
                raise InfeasibleTargetError(
                    f"target {float(tgt[0])} outside aggregate response range "
                    f"[{lo_q}, {hi_q}]"
                )
        tgt = np.clip(tgt, lo_q, hi_q)
        qn = -q  # ascending
        i_left = np.searchsorted(qn, -tgt, side="left")
        i_right = np.searchsorted(qn, -tgt, side="right")

        left = np.empty_like(tgt)
        inner = i_left > 0
        left[~inner] = p[0]
        if inner.any():
            i = i_left[inner]
            q0, q1 = q[i - 1], q[i]
            p0, p1 = p[i - 1], p[i]
            frac = (q0 - tgt[inner]) / (q0 - q1)
            left[inner] = p0 + frac * (p1 - p0)

        right = np.empty_like(tgt)
        atcap = i_right >= len(q)
        right[atcap] = p[-1]
        if (~atcap).any():
            i = i_right[~atcap]
            q0, q1 = q[i - 1], q[i]
            p0, p1 = p[i - 1], p[i]
            frac = (q0 - tgt[~atcap]) / (q0 - q1)
            right[~atcap] = p0 + frac * (p1 - p0)

        lam = 0.5 * (left + right)
        return float(lam[0]) if scalar else lam

    def allocate(self, target):
        """(price, per-device allocation) for one target or an array."""
        lam = self.inverse(target)
        return lam, self.allocation_at_price(lam)


def calibrate_quadratic(
    baseline_kwh: float,
    baseline_price: float,
    elasticity: float,
    beta_min: float = _BETA_MIN,
) -> tuple[float, float]:
    """Fit (alpha, beta) from one observed consumption/price point.

    The linear demand curve d(p) = (alpha - p)/beta is pinned to pass
    through (baseline_kwh, baseline_price) with the given point elasticity,
    so the calibrated device reproduces the baseline at the baseline price.
    Demand must be downward-sloping (elasticity < 0); a near-zero beta
    (perfectly elastic limit) is rejected as degenerate.
    """
    if baseline_kwh <= 0:
        raise ValueError(f"baseline_kwh must be positive, got {baseline_kwh}")
    if baseline_price <= 0:
        raise ValueError(f"baseline_price must be positive, got {baseline_price}")
    if not elasticity < 0 or not math.isfinite(elasticity):
        raise ValueError(
            f"elasticity must be finite and negative, got {elasticity}"
        )
    beta = -baseline_price / (elasticity * baseline_kwh)
    if beta < beta_min:
        raise ValueError(
            f"calibrated beta {beta} below {beta_min}: demand is effectively "
            "perfectly elastic"
        )
    alpha = baseline_price + beta * baseline_kwh
    return alpha, beta
