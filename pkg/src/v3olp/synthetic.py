"""Synthetic traces that satisfy the preconditions of the reward bounds."""

from __future__ import annotations

import math

import numpy as np

from .market_data import Trace
from .reward import PoolParams


def volume_floor(P: float, pool: PoolParams, a: float) -> float:
    """Relative-volume floor ``(a / gamma) * (P ln d)**2``."""
    return a / pool.gamma * (P * pool.ln_d) ** 2


def volume_cap(pool: PoolParams) -> float:
    return 2.0 / pool.gamma


def compliant_trace(
    rng: np.random.Generator,
    horizon: int,
    pool: PoolParams,
    max_price_factor: float = 2.0,
    a: float = 10.0,
) -> Trace:
    """Random trace with ``d**|rho| <= max_price_factor`` and ``floor_a <= u <= 2/gamma``.

    rho is uniform on ``[-log_d F, log_d F]``; u is uniform between the volume
    floor for ``a`` (computed from the realised P) and the cap.
    """
    if not 1 < max_price_factor <= 2:
        raise ValueError(f"max price factor must lie in (1, 2], got {max_price_factor}")
    rho_max = math.log(max_price_factor) / pool.ln_d
    rho = rng.uniform(-rho_max, rho_max, size=horizon)
    P = float(np.mean(np.abs(rho)))
    lo, hi = volume_floor(P, pool, a), volume_cap(pool)
    if lo > hi:
        raise ValueError(f"no admissible volume: floor {lo:.6g} exceeds cap {hi:.6g}")
    u = rng.uniform(lo, hi, size=horizon)
    return Trace(rho, u)


def flat_trace(horizon: int) -> Trace:
    """Constant price and no trading."""
    return Trace(np.zeros(horizon), np.zeros(horizon))
