"""Per-step reward of re-investing a portfolio in a symmetric concentrated range.

A *controller* ``n`` is the half-width of the range ``[p d**-n, p d**n]`` in
interval exponents. It is a positive float, with ``math.inf`` standing for a
full-range (v2-style) position. Strategy code only uses integers, but bound
evaluation needs real-valued controllers such as ``4 * P``.

Every function here has a scalar entry point and works element-wise on numpy
arrays through :func:`log_growth` and friends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .amm import (
    DomainError,
    PriceRange,
    Reserves,
    liquidity_for_symmetric_deposit,
    v2_reserves,
    v3_real_reserves,
)

LN2 = math.log(2.0)

Controller = float


@dataclass(frozen=True)
class PoolParams:
    """Interval size ``d`` (tick base raised to the tick spacing) and fee tier ``gamma``."""

    interval_size: float
    fee_tier: float

    def __post_init__(self):
        if not 1.0001 <= self.interval_size < 2:
            raise DomainError(f"interval size must lie in [1.0001, 2), got {self.interval_size}")
        if not 0 < self.fee_tier < 1:
            raise DomainError(f"fee tier must lie in (0, 1), got {self.fee_tier}")

    @property
    def d(self) -> float:
        return self.interval_size

    @property
    def gamma(self) -> float:
        return self.fee_tier

    @property
    def ln_d(self) -> float:
        return math.log(self.interval_size)


@dataclass(frozen=True)
class MarketStep:
    rho: float
    u: float

    def __post_init__(self):
        if not math.isfinite(self.rho):
            raise DomainError(f"rho must be finite, got {self.rho}")
        if not (self.u >= 0 and math.isfinite(self.u)):
            raise DomainError(f"relative volume must be finite and nonnegative, got {self.u}")


def parse_controller(text: str | float | int) -> Controller:
    """Parse ``"inf"`` or a positive number into a controller value."""
    if isinstance(text, str):
        s = text.strip().lower()
        if s in ("inf", "infinity", "∞"):
            return math.inf
        value = float(s)
    else:
        value = float(text)
    if not value > 0 or math.isnan(value):
        raise DomainError(f"controller must be positive, got {text!r}")
    return value


def format_controller(n: Controller) -> str:
    if math.isinf(n):
        return "inf"
    return str(int(n)) if float(n).is_integer() else repr(float(n))


def step_arrays(steps) -> tuple[np.ndarray, np.ndarray]:
    """``(rho, u)`` arrays from a Trace-like object or a sequence of MarketStep."""
    if hasattr(steps, "rho") and hasattr(steps, "u") and not isinstance(steps, MarketStep):
        return np.asarray(steps.rho, dtype=float), np.asarray(steps.u, dtype=float)
    steps = list(steps)
    rho = np.fromiter((s.rho for s in steps), dtype=float, count=len(steps))
    u = np.fromiter((s.u for s in steps), dtype=float, count=len(steps))
    return rho, u


def _concentration(n, ln_d):
    # 1 - d**(-n/2); equals 1 for n = inf
    return -np.expm1(-0.5 * n * ln_d)


def fee_fraction_array(n, rho, u, pool: PoolParams) -> np.ndarray:
    n, rho, u = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (n, rho, u)))
    in_range = np.abs(rho) <= n
    with np.errstate(divide="ignore", invalid="ignore"):
        fee = pool.gamma * u / _concentration(n, pool.ln_d)
    return np.where(in_range, fee, 0.0)


def _inside_excess(a, b, fee_term):
    # in-range ratio minus one:
    # (2 d**(rho/2) - d**(-n/2) (1 + d**rho) + fee) / (2 (1 - d**(-n/2))) - 1
    # == (2 expm1(a) - d**(-n/2) expm1(2a) + fee) / (2 (1 - d**(-n/2)))
    return (2 * np.expm1(a) - np.exp(-b) * np.expm1(2 * a) + fee_term) / (-2 * np.expm1(-b))


def value_ratio_array(n, rho, pool: PoolParams) -> np.ndarray:
    n, rho = np.broadcast_arrays(np.asarray(n, dtype=float), np.asarray(rho, dtype=float))
    ln_d = pool.ln_d
    a = 0.5 * rho * ln_d
    b = 0.5 * n * ln_d
    with np.errstate(over="ignore", invalid="ignore"):
        # (1 + d**(n/2)) / 2, times d**rho below the range
        exited = np.exp(np.logaddexp(0.0, b) - LN2 + np.where(rho < -n, 2 * a, 0.0))
        inside = 1 + _inside_excess(a, b, 0.0)
        ratio = np.where(np.abs(rho) <= n, inside, exited)
        return np.where(np.isinf(n), np.exp(a), ratio)


def log_growth(n, rho, u, pool: PoolParams) -> np.ndarray:
    """Element-wise reward ``ln(M_{t+1} / M_t)``; broadcasts its array arguments."""
    n, rho, u = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (n, rho, u)))
    ln_d = pool.ln_d
    a = 0.5 * rho * ln_d
    b = 0.5 * n * ln_d
    in_range = np.abs(rho) <= n
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        exited = np.logaddexp(0.0, b) - LN2 + np.where(rho < -n, 2 * a, 0.0)
        excess = _inside_excess(a, b, 2 * pool.gamma * u)
        excess = np.where(np.isinf(n), np.expm1(a) + pool.gamma * u, excess)
        if np.any(in_range & ~(excess > -1)):
            raise DomainError("reward argument is not positive; inputs violate the model domain")
        inside = np.log1p(excess)
    return np.where(in_range, inside, exited)


def fee_fraction(n: Controller, step: MarketStep, pool: PoolParams) -> float:
    """Fees earned during ``step`` as a fraction of the invested value."""
    return float(fee_fraction_array(n, step.rho, step.u, pool))


def value_ratio(n: Controller, rho: float, pool: PoolParams) -> float:
    """End-of-step position value over start-of-step value, fees excluded."""
    return float(value_ratio_array(n, rho, pool))


def step_reward(n: Controller, step: MarketStep, pool: PoolParams) -> float:
    return float(log_growth(n, step.rho, step.u, pool))


def reward_matrix(controllers: Sequence[Controller], steps, pool: PoolParams) -> np.ndarray:
    """Rewards of every controller on every step, shape ``(T, len(controllers))``."""
    rho, u = step_arrays(steps)
    grid = np.asarray(controllers, dtype=float)
    return log_growth(grid[None, :], rho[:, None], u[:, None], pool)


def total_reward(controllers: Iterable[Controller] | Controller, steps, pool: PoolParams) -> float:
    """Sum of per-step rewards when step ``t`` uses ``controllers[t]``.

    A single controller value is broadcast over the whole trace.
    """
    rho, u = step_arrays(steps)
    if len(rho) == 0:
        raise ValueError("trace must contain at least one step")
    if np.ndim(controllers) == 0:
        n = np.full(len(rho), float(controllers))
    else:
        n = np.asarray(list(controllers), dtype=float)
        if n.shape != rho.shape:
            raise ValueError(f"got {n.size} controllers for {rho.size} steps")
    return float(np.sum(log_growth(n, rho, u, pool)))


def portfolio_after_step(
    n: Controller, price: float, value: float, rho: float, pool: PoolParams
) -> Reserves:
    """Token amounts held at the end of a step, before re-balancing."""
    if price <= 0 or value <= 0:
        raise DomainError(f"price and value must be positive, got {price}, {value}")
    d = pool.d
    liquidity = liquidity_for_symmetric_deposit(value, price, n, d)
    sp = math.sqrt(price)
    if math.isinf(n):
        half_move = d ** (0.5 * rho)
        return Reserves(liquidity / sp / half_move, liquidity * sp * half_move)
    lo = d ** (-0.5 * n)
    hi = d ** (0.5 * n)
    if rho > n:
        return Reserves(0.0, liquidity * sp * (hi - lo))
    if rho < -n:
        return Reserves(liquidity / sp * (hi - lo), 0.0)
    return Reserves(liquidity / sp * (d ** (-0.5 * rho) - lo), liquidity * sp * (d ** (0.5 * rho) - lo))


def token_level_reward(
    n: Controller, step: MarketStep, pool: PoolParams, price: float = 1.0, value: float = 1.0
) -> float:
    """Reward computed by simulating the position token by token.

    Deposit ``value`` evenly at ``price``, reprice at ``price * d**rho``, add the
    pro-rata fee if the price stayed in range, and take the log value ratio.
    This reaches the same number as :func:`step_reward` by an independent route.
    """
    d = pool.d
    new_price = price * d**step.rho
    if math.isinf(n):
        liquidity = value / (2 * math.sqrt(price))
        held = v2_reserves(liquidity, new_price)
        in_range = True
    else:
        rng = PriceRange.symmetric(price, n, d)
        # half the value sits in token B between the lower bound and the spot price
        liquidity = (value / 2) / (math.sqrt(price) - math.sqrt(rng.lower))
        held = v3_real_reserves(liquidity, new_price, rng)
        in_range = abs(step.rho) <= n
    fee = 0.0
    if in_range:
        # pool volume v = u * 2 sqrt(p) * pool_liquidity; our share is liquidity / pool_liquidity
        fee = pool.gamma * step.u * 2 * math.sqrt(price) * liquidity
    return math.log((held.value(new_price) + fee) / value)

