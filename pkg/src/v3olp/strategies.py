"""Static controllers and the exponential-weights adaptive strategy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .reward import Controller, PoolParams, reward_matrix, step_arrays


@dataclass(frozen=True)
class EwaParams:
    """Expert count and learning rate.

    ``controllers`` defaults to the unit grid ``1..num_controllers``; any other
    grid (for instance powers of ten) may be supplied instead.
    """

    num_controllers: int
    eta: float
    controllers: tuple[Controller, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.num_controllers < 1:
            raise ValueError(f"need at least one controller, got {self.num_controllers}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"learning rate must be positive and finite, got {self.eta}")
        if not self.controllers:
            object.__setattr__(self, "controllers", tuple(float(n) for n in range(1, self.num_controllers + 1)))
        elif len(self.controllers) != self.num_controllers:
            raise ValueError("controller grid length does not match num_controllers")

    @classmethod
    def for_grid(cls, grid, eta: float) -> EwaParams:
        grid = tuple(float(n) for n in grid)
        return cls(len(grid), eta, grid)


@dataclass(frozen=True)
class EwaState:
    cumulative_rewards: np.ndarray
    eta: float
    step_index: int = 0

    def __post_init__(self):
        rewards = np.asarray(self.cumulative_rewards, dtype=float)
        if rewards.ndim != 1 or rewards.size < 1:
            raise ValueError("cumulative rewards must be a nonempty vector")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("cumulative rewards must be finite")
        object.__setattr__(self, "cumulative_rewards", rewards)

    @classmethod
    def initial(cls, params: EwaParams) -> EwaState:
        return cls(np.zeros(params.num_controllers), params.eta)

    @property
    def num_controllers(self) -> int:
        return self.cumulative_rewards.size


def expert_count(pool: PoolParams) -> int:
    """``floor(log_d 32)``, the largest unit-grid controller the analysis needs."""
    n = math.floor(math.log(32.0) / pool.ln_d)
    # guard against log rounding when d is an exact root of 32
    while pool.d ** (n + 1) <= 32.0 * (1 + 1e-12):
        n += 1
    while n > 1 and pool.d**n > 32.0 * (1 + 1e-12):
        n -= 1
    return n


def theorem_eta(num_controllers: int, horizon: int) -> float:
    return math.sqrt(math.log(num_controllers) / (128.0 * horizon))


def default_params(horizon: int, pool: PoolParams) -> EwaParams:
    """Expert grid ``1..floor(log_d 32)`` with the horizon-tuned learning rate."""
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    n = expert_count(pool)
    if n < 2:
        raise RuntimeError(f"interval size {pool.d} yields fewer than two experts")
    return EwaParams(n, theorem_eta(n, horizon))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def ewa_distribution(state: EwaState) -> np.ndarray:
    return _softmax_rows(state.eta * state.cumulative_rewards)


def ewa_update(state: EwaState, step_rewards) -> EwaState:
    step_rewards = np.asarray(step_rewards, dtype=float)
    if step_rewards.shape != state.cumulative_rewards.shape:
        raise ValueError(
            f"expected {state.num_controllers} rewards, got shape {step_rewards.shape}"
        )
    return EwaState(state.cumulative_rewards + step_rewards, state.eta, state.step_index + 1)


@dataclass
class StaticRun:
    controller: Controller
    total: float
    reward_series: np.ndarray


@dataclass
class EwaRun:
    """Record of one EWA pass.

    ``reward_series[t]`` is the log growth of the split portfolio at step t,
    ``distributions[t]`` the weights used at step t, and ``expert_rewards``
    the full reward table the learner observed.
    """

    params: EwaParams
    wealth_log: float
    reward_series: np.ndarray
    distributions: np.ndarray
    expert_rewards: np.ndarray = field(repr=False)

    @property
    def expected_rewards(self) -> np.ndarray:
        """Per-step weighted average reward, the quantity the regret bound controls."""
        return np.sum(self.distributions * self.expert_rewards, axis=1)

    @property
    def expert_totals(self) -> np.ndarray:
        return self.expert_rewards.sum(axis=0)


def run_static(steps, pool: PoolParams, n: Controller) -> StaticRun:
    rho, _ = step_arrays(steps)
    if rho.size < 1:
        raise ValueError("trace must contain at least one step")
    series = reward_matrix([n], steps, pool)[:, 0]
    return StaticRun(n, float(np.sum(series)), series)


def run_ewa_on_rewards(expert_rewards: np.ndarray, params: EwaParams) -> EwaRun:
    """Run the learner against a precomputed ``(T, N)`` reward table.

    Weights at step t come from rewards of steps ``< t`` only, so the first
    step is uniform. Wealth is split across controllers in proportion to the
    weights, hence step growth is ``sum_n p_t(n) exp(r_t(n))``.
    """
    rewards = np.asarray(expert_rewards, dtype=float)
    if rewards.ndim != 2 or rewards.shape[1] != params.num_controllers:
        raise ValueError(f"reward table shape {rewards.shape} does not match {params.num_controllers} experts")
    if rewards.shape[0] < 1:
        raise ValueError("trace must contain at least one step")
    cumulative = np.zeros_like(rewards)
    np.cumsum(rewards[:-1], axis=0, out=cumulative[1:])
    logits = params.eta * cumulative
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))
    norm = weights.sum(axis=1)
    top = rewards.max(axis=1, keepdims=True)
    # ratio of two identically summed terms, so all-zero rewards give exactly zero growth
    series = top[:, 0] + np.log(np.sum(weights * np.exp(rewards - top), axis=1) / norm)
    dist = weights / norm[:, None]
    return EwaRun(params, float(np.sum(series)), series, dist, rewards)


def run_ewa(steps, pool: PoolParams, params: EwaParams) -> EwaRun:
    return run_ewa_on_rewards(reward_matrix(params.controllers, steps, pool), params)
