"""Constant-product and concentrated-liquidity pool arithmetic.

All quantities are plain floats. Token A is the base asset and token B the
quote asset, so a price ``p`` is measured in token B per token A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class DomainError(ValueError):
    """An argument lies outside the domain of a pool formula."""


@dataclass(frozen=True)
class Reserves:
    token_a: float
    token_b: float

    def __post_init__(self):
        if not (self.token_a >= 0 and self.token_b >= 0):
            raise DomainError(f"reserves must be nonnegative, got {self.token_a}, {self.token_b}")

    def value(self, price: float) -> float:
        """Worth of both legs in token B at ``price``."""
        return price * self.token_a + self.token_b


@dataclass(frozen=True)
class PriceRange:
    lower: float
    upper: float

    def __post_init__(self):
        # upper may be +inf (full-range position)
        if not (0 < self.lower < self.upper):
            raise DomainError(f"invalid price range [{self.lower}, {self.upper}]")

    @classmethod
    def symmetric(cls, price: float, half_width: float, interval_size: float) -> PriceRange:
        """The range ``[p * d**-n, p * d**n]`` centred on ``price``."""
        return cls(price * interval_size ** (-half_width), price * interval_size**half_width)

    def __contains__(self, price: float) -> bool:
        return self.lower <= price <= self.upper


def spot_price(reserves: Reserves) -> float:
    if reserves.token_a <= 0:
        raise DomainError("spot price undefined for an empty token A reserve")
    return reserves.token_b / reserves.token_a


def v2_reserves(liquidity: float, price: float) -> Reserves:
    """Full-range reserves holding ``liquidity`` at ``price``: x = L/sqrt(p), y = L*sqrt(p)."""
    if liquidity <= 0 or price <= 0:
        raise DomainError(f"liquidity and price must be positive, got {liquidity}, {price}")
    sp = math.sqrt(price)
    return Reserves(liquidity / sp, liquidity * sp)


def v3_real_reserves(liquidity: float, price: float, price_range: PriceRange) -> Reserves:
    """Real token amounts of a position with ``liquidity`` on ``price_range``.

    Outside the range the position has been converted entirely into one
    token: all B above the range, all A below it.
    """
    if liquidity <= 0 or price <= 0:
        raise DomainError(f"liquidity and price must be positive, got {liquidity}, {price}")
    if not isinstance(price_range, PriceRange):
        raise DomainError("price_range must be a PriceRange")
    sa = math.sqrt(price_range.lower)
    inv_sb = 1.0 / math.sqrt(price_range.upper)
    if price > price_range.upper:
        return Reserves(0.0, (math.sqrt(price_range.upper) - sa) * liquidity)
    if price < price_range.lower:
        return Reserves((1.0 / sa - inv_sb) * liquidity, 0.0)
    sp = math.sqrt(price)
    return Reserves((1.0 / sp - inv_sb) * liquidity, (sp - sa) * liquidity)


def virtual_reserves(reserves: Reserves, liquidity: float, price_range: PriceRange) -> Reserves:
    """Shift real reserves to the v2-equivalent curve: x + L/sqrt(b), y + L*sqrt(a)."""
    return Reserves(
        reserves.token_a + liquidity / math.sqrt(price_range.upper),
        reserves.token_b + liquidity * math.sqrt(price_range.lower),
    )


def liquidity_for_symmetric_deposit(
    value: float, price: float, half_width: float, interval_size: float
) -> float:
    """Liquidity bought by ``value`` (token B units) split evenly across both tokens.

    The position spans ``[p * d**-n, p * d**n]``; ``half_width=math.inf`` is
    the full-range position.
    """
    if value <= 0 or price <= 0:
        raise DomainError(f"value and price must be positive, got {value}, {price}")
    if not 1.0001 <= interval_size < 2:
        raise DomainError(f"interval size must lie in [1.0001, 2), got {interval_size}")
    if not half_width > 0:
        raise DomainError(f"half width must be positive, got {half_width}")
    if math.isinf(half_width):
        return value / (2 * math.sqrt(price))
    # 1 - d**(-n/2), written to keep precision for tiny n*ln(d)
    concentration = -math.expm1(-0.5 * half_width * math.log(interval_size))
    return value / (2 * math.sqrt(price) * concentration)


def swap_exact_in(reserves: Reserves, amount_in: float, fee: float = 0.0) -> tuple[float, Reserves]:
    """Sell ``amount_in`` of token A into a constant-product pool.

    Returns the token B amount the trader receives and the pool's reserves
    after the trade. The fee is withheld from the trader's output and paid
    out to LPs, so it does not stay in the reserves.
    """
    if reserves.token_a <= 0 or reserves.token_b <= 0:
        raise DomainError("swap requires positive reserves")
    if amount_in <= 0:
        raise DomainError(f"amount_in must be positive, got {amount_in}")
    if not 0 <= fee < 1:
        raise DomainError(f"fee must lie in [0, 1), got {fee}")
    x, y = reserves.token_a, reserves.token_b
    new_x = x + amount_in
    # both forms avoid cancellation: output for small trades, reserve for large ones
    gross_out = y * amount_in / new_x
    return (1 - fee) * gross_out, Reserves(new_x, x * y / new_x)
