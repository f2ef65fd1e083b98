"""Online-learning model of concentrated liquidity provision.

Pool arithmetic, the per-step LP reward, static and exponential-weights
strategies, and evaluators for the reward lower bounds.
"""

from .amm import (
    DomainError,
    PriceRange,
    Reserves,
    liquidity_for_symmetric_deposit,
    spot_price,
    swap_exact_in,
    v2_reserves,
    v3_real_reserves,
)
from .bounds import BoundReport, check_all
from .market_data import RawSample, Trace, TraceFormatError, TraceStats, compute_stats
from .reward import (
    MarketStep,
    PoolParams,
    fee_fraction,
    portfolio_after_step,
    step_reward,
    total_reward,
    value_ratio,
)
from .strategies import EwaParams, EwaState, default_params, run_ewa, run_static

__version__ = "0.1.0"
