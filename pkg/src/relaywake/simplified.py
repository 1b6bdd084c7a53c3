"""Simplified relay model: a fixed count of relays waking at the points of a
Poisson process, for which the optimal rule is a single reward threshold.

The one-step value map beta(b) = E[max{b,R}] - T/(eta*n) crosses the identity
at a unique alpha when beta(0) >= 0; stopping at the first reward >= alpha is
optimal at every stage.  The mean reward of the alpha rule has a closed form
in the reward cdf, which this module also inverts to hit a target reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RewardDistribution

__all__ = [
    "SimplifiedSpec",
    "one_step_value",
    "solve_alpha",
    "stage_value_maps",
    "expected_reward",
    "alpha_for_target_reward",
    "simulate_threshold_rule",
]

_QUAD_POINTS = 10_001  # reward-axis quadrature resolution
_ALPHA_RESIDUAL = 1e-9
_GAMMA_TOL = 1e-6


@dataclass(frozen=True)
class SimplifiedSpec:
    """Parameters of the simplified model: relay count, cycle length, delay
    weight, and the per-relay reward law."""

    n_tilde: int
    T: float
    eta: float
    dist: RewardDistribution

    def __post_init__(self):
        if self.n_tilde < 1:
            raise ValueError("n_tilde must be >= 1")
        if self.eta <= 0 or self.T <= 0:
            raise ValueError("eta and T must be positive")


def _cum_table(grid: np.ndarray, vals: np.ndarray) -> np.ndarray:
    h = grid[1] - grid[0]
    return np.concatenate(([0.0], np.cumsum((vals[1:] + vals[:-1]) * 0.5 * h)))


def _reward_tables(dist: RewardDistribution):
    """Fine reward grid with the cdf and cumulative survival integral,
    cached on the distribution object."""
    cached = getattr(dist, "_simplified_tables", None)
    if cached is not None:
        return cached
    grid = np.linspace(0.0, dist.support, _QUAD_POINTS)
    cdf = np.clip(dist.cdf(grid), 0.0, 1.0)
    surv = 1.0 - cdf
    tables = (grid, cdf, surv, _cum_table(grid, surv), {})
    try:
        dist._simplified_tables = tables
    except AttributeError:
        pass
    return tables


def _cum_eval(grid: np.ndarray, vals: np.ndarray, cum: np.ndarray, x: float) -> float:
    """int_0^x of the piecewise-linear interpolant of vals on grid.

    Exact within each cell (trapezoid cumulative plus the quadratic sub-cell
    term), so linear integrands integrate to machine precision.
    """
    h = grid[1] - grid[0]
    x = min(max(x, grid[0]), grid[-1])
    i = min(int((x - grid[0]) / h), grid.size - 2)
    t = x - grid[i]
    slope = (vals[i + 1] - vals[i]) / h
    return float(cum[i] + vals[i] * t + 0.5 * slope * t * t)


def _survival_integral_above(dist, x: float) -> float:
    """int_x^{r_max} (1 - F(r)) dr."""
    grid, _, surv, surv_cum, _ = _reward_tables(dist)
    return float(surv_cum[-1]) - _cum_eval(grid, surv, surv_cum, x)


def one_step_value(spec: SimplifiedSpec, b: float) -> float:
    """Value of continuing exactly one step from best reward b:
    b + int_b^{r_max} (1-F) dr - T/(eta*n).
    """
    if b < 0 or b > spec.dist.support + 1e-12:
        raise ValueError(f"b must lie in [0, {spec.dist.support}]")
    return b + _survival_integral_above(spec.dist, b) - spec.T / (spec.eta * spec.n_tilde)


def solve_alpha(spec: SimplifiedSpec) -> float:
    """The stopping threshold: the unique fixed point of the one-step value
    map when continuing once from zero is worthwhile, zero otherwise.
    """
    if one_step_value(spec, 0.0) < 0.0:
        return 0.0
    r_max = spec.dist.support
    cost = spec.T / (spec.eta * spec.n_tilde)

    def gap(b):
        # b - beta(b); increasing, negative at 0, positive at r_max
        return cost - _survival_integral_above(spec.dist, b)

    lo, hi = 0.0, r_max
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    alpha = 0.5 * (lo + hi)
    assert abs(alpha - one_step_value(spec, alpha)) < _ALPHA_RESIDUAL
    return float(alpha)


def stage_value_maps(spec: SimplifiedSpec, levels: int, b_points: int = 1001):
    """Stage value maps beta_1..beta_levels on a reward grid.

    beta_{j+1}(b) = E[max{b, R, beta_j(max{b,R})}] - T/(eta*n); all levels
    share one on-grid quadrature so the ordering and the equality above the
    fixed point hold exactly at grid resolution.  Verification-only: the
    operating policy needs alpha alone.
    """
    if spec.n_tilde < 2 or not 1 <= levels <= spec.n_tilde - 1:
        raise ValueError("levels must lie in [1, n_tilde - 1]")
    grid = np.linspace(0.0, spec.dist.support, b_points)
    tw = np.ones(b_points)
    tw[0] = tw[-1] = 0.5
    weights = tw * spec.dist.pdf(grid)
    weights /= weights.sum()
    csum = np.cumsum(weights)
    cost = spec.T / (spec.eta * spec.n_tilde)

    def expect_at_running_max(vals):
        # E_r[ vals[max(j, q)] ] for every grid index j
        gw = vals * weights
        suffix = np.concatenate((np.cumsum(gw[::-1])[::-1], [0.0]))
        return vals * csum + suffix[1:]

    maps = [expect_at_running_max(grid) - cost]
    for _ in range(1, levels):
        inner = np.maximum(grid, maps[-1])
        maps.append(expect_at_running_max(inner) - cost)
    return grid, maps


def expected_reward(spec: SimplifiedSpec, alpha: float) -> float:
    """Mean reward of the alpha-threshold rule.

    Below alpha the running best must beat r, which fails only when all n
    rewards do; above alpha the first crossing carries the reward:
        int_0^alpha (1 - F^n) dr
        + (1 - F(alpha)^n)/(1 - F(alpha)) * int_alpha^{r_max} (1-F) dr.
    """
    r_max = spec.dist.support
    if alpha < 0 or alpha > r_max + 1e-12:
        raise ValueError(f"alpha must lie in [0, {r_max}]")
    alpha = min(alpha, r_max)
    grid, cdf, _, _, per_n = _reward_tables(spec.dist)
    n = spec.n_tilde
    if n not in per_n:
        surv_n = 1.0 - cdf**n
        per_n[n] = (surv_n, _cum_table(grid, surv_n))
    surv_n, cum_n = per_n[n]
    left = _cum_eval(grid, surv_n, cum_n, alpha)
    f_alpha = float(np.interp(alpha, grid, cdf))
    if alpha >= r_max or f_alpha >= 1.0 - 1e-15:
        # nothing can clear alpha: the rule always waits for the overall best
        return left
    boost = (1.0 - f_alpha**n) / (1.0 - f_alpha)
    return left + boost * _survival_integral_above(spec.dist, alpha)


def alpha_for_target_reward(spec: SimplifiedSpec, gamma: float) -> float:
    """Threshold whose mean reward hits gamma; clamps to 0 below the
    first-relay mean and to r_max above the full-max mean.
    """
    r_max = spec.dist.support
    if gamma < 0 or gamma > r_max:
        raise ValueError(f"gamma must lie in [0, {r_max}]")
    if gamma <= expected_reward(spec, 0.0):
        return 0.0
    if gamma >= expected_reward(spec, r_max):
        return r_max
    lo, hi = 0.0, r_max
    while hi - lo > _GAMMA_TOL:
        mid = 0.5 * (lo + hi)
        if expected_reward(spec, mid) < gamma:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def simulate_threshold_rule(spec: SimplifiedSpec, alpha: float, episodes: int,
                            seed: int):
    """Monte-Carlo mean reward of the alpha rule on the simplified process
    itself (forced stop with the running best at the last stage).
    Returns (mean, standard error)."""
    rng = np.random.default_rng(seed)
    n = spec.n_tilde
    rewards = spec.dist.sample(rng, episodes * n).reshape(episodes, n)
    hit = rewards >= alpha
    first = np.where(hit.any(axis=1), hit.argmax(axis=1), n - 1)
    rows = np.arange(episodes)
    crossed = hit[rows, first]
    picked = np.where(crossed, rewards[rows, first], rewards.max(axis=1))
    return float(picked.mean()), float(picked.std(ddof=1) / np.sqrt(episodes))
