"""Stage-threshold solver for the known-count problem.

Backward induction on a uniform (w, b) grid produces one table per number of
relays still to come; stopping is optimal exactly when the best reward so far
reaches the table value.  The edge thresholds delta_l derived from the tables
drive the inner/outer stopping-set bounds.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import RewardDistribution, WakeModel

__all__ = [
    "SolverGrid",
    "ThresholdGrid",
    "ConsistencyError",
    "solve_thresholds",
    "reward_quadrature_weights",
    "threshold_cache_key",
    "load_or_solve",
]

# edge-threshold denominators: sentinel cut and the solver-bug alarm level
_DENOM_FLOOR = 1e-12
_DENOM_ALARM = -1e-9


class ConsistencyError(RuntimeError):
    """An internal inequality the solver guarantees was violated."""


@dataclass(frozen=True)
class SolverGrid:
    """Uniform discretization of [0, T] x [0, r_max]."""

    w_points: int = 100
    b_points: int = 100

    def __post_init__(self):
        if self.w_points < 2 or self.b_points < 2:
            raise ValueError("grids need at least two points per axis")


def reward_quadrature_weights(dist: RewardDistribution, b_grid: np.ndarray) -> np.ndarray:
    """Trapezoid-times-pdf weights on the reward grid, normalized to unit
    mass so grid expectations are proper averages.
    """
    tw = np.ones(b_grid.size)
    tw[0] = tw[-1] = 0.5
    w = tw * dist.pdf(b_grid)
    total = w.sum()
    if total <= 0:
        raise ValueError("reward pdf vanishes on the entire grid")
    return w / total


class ThresholdGrid:
    """Solved stage-threshold tables phi[l] on the (w, b) lattice.

    tables[l][i][j] is the threshold with l relays still to come at
    (w_i, b_j); tables[0] is identically zero.  Immutable after solve.
    """

    def __init__(self, eta: float, T: float, r_max: float,
                 tables: np.ndarray, dist_key: str = ""):
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.eta = float(eta)
        self.T = float(T)
        self.r_max = float(r_max)
        self.tables = np.ascontiguousarray(tables)
        self.tables.setflags(write=False)
        self.K = tables.shape[0]
        self.w_grid = np.linspace(0.0, T, tables.shape[1])
        self.b_grid = np.linspace(0.0, r_max, tables.shape[2])
        self.dist_key = dist_key
        self.clamp_warnings = 0

    # -- lookups ---------------------------------------------------------

    def _locate(self, w: float, b: float):
        nw, nb = self.w_grid.size, self.b_grid.size
        if w < 0.0 or w > self.T or b < 0.0 or b > self.r_max:
            self.clamp_warnings += 1
        fw = min(max(w / (self.T / (nw - 1)), 0.0), nw - 1.0)
        fb = min(max(b / (self.r_max / (nb - 1)), 0.0), nb - 1.0)
        iw = min(int(fw), nw - 2)
        ib = min(int(fb), nb - 2)
        return iw, ib, fw - iw, fb - ib

    def value(self, remaining: int, w: float, b: float) -> float:
        """Bilinear interpolation of tables[remaining] at (w, b)."""
        if not 0 <= remaining <= self.K - 1:
            raise ValueError(f"remaining must lie in [0, {self.K - 1}]")
        iw, ib, aw, ab = self._locate(w, b)
        t = self.tables[remaining]
        return float(
            t[iw, ib] * (1 - aw) * (1 - ab)
            + t[iw, ib + 1] * (1 - aw) * ab
            + t[iw + 1, ib] * aw * (1 - ab)
            + t[iw + 1, ib + 1] * aw * ab
        )

    def value_stack(self, upto: int, w: float, b: float) -> np.ndarray:
        """Interpolated values for levels 1..upto at a single (w, b)."""
        if not 1 <= upto <= self.K - 1:
            raise ValueError(f"upto must lie in [1, {self.K - 1}]")
        iw, ib, aw, ab = self._locate(w, b)
        t = self.tables[1:upto + 1]
        return (
            t[:, iw, ib] * (1 - aw) * (1 - ab)
            + t[:, iw, ib + 1] * (1 - aw) * ab
            + t[:, iw + 1, ib] * aw * (1 - ab)
            + t[:, iw + 1, ib + 1] * aw * ab
        )

    def edge_thresholds(self, k: int, w: float, b: float) -> np.ndarray:
        """Thresholds delta_l = (T-w)/(T-w-eta(b-phi_l)) for l = 1..K-k.

        A denominator at or below the floor means stopping dominates along
        that whole simplex edge and is reported as +inf; a genuinely negative
        denominator contradicts the solver's lower bound and raises.
        """
        if not 1 <= k <= self.K - 1:
            raise ValueError(f"stage must lie in [1, {self.K - 1}]")
        if not 0 <= w < self.T:
            raise ValueError(f"need 0 <= w < T, got w={w}")
        phis = self.value_stack(self.K - k, w, b)
        remain = self.T - w
        den = remain - self.eta * (b - phis)
        if np.any(den < _DENOM_ALARM):
            raise ConsistencyError(
                f"edge-threshold denominator {den.min():.3e} < 0 at (w={w}, b={b}); "
                "the threshold tables violate their lower bound"
            )
        out = np.full(den.size, np.inf)
        ok = den > _DENOM_FLOOR
        out[ok] = remain / den[ok]
        return out

    def should_stop_known(self, remaining: int, w: float, b: float) -> bool:
        """Known-count rule: stop iff the best reward reaches the stage
        threshold (always true with zero relays to come).
        """
        if remaining == 0:
            return True
        return b >= self.value(remaining, w, b)

    # -- persistence -------------------------------------------------------

    def save(self, path: str) -> None:
        meta = dict(eta=self.eta, T=self.T, r_max=self.r_max, dist_key=self.dist_key)
        np.savez(path, tables=self.tables, meta=json.dumps(meta))

    @classmethod
    def load(cls, path: str) -> "ThresholdGrid":
        with np.load(path, allow_pickle=False) as payload:
            meta = json.loads(str(payload["meta"]))
            tables = payload["tables"]
        return cls(meta["eta"], meta["T"], meta["r_max"], tables, meta["dist_key"])


def solve_thresholds(grid: SolverGrid, dist: RewardDistribution, model: WakeModel,
                     eta: float, K: int, backend=None) -> ThresholdGrid:
    """Solve the K stage-threshold tables by backward induction."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if K < 1:
        raise ValueError("K must be >= 1")
    impl = kernels.backend(backend)
    w_grid = np.linspace(0.0, model.T, grid.w_points)
    b_grid = np.linspace(0.0, dist.support, grid.b_points)
    rw = reward_quadrature_weights(dist, b_grid)
    tables = impl.solve_threshold_tables(w_grid, b_grid, rw, model.T, eta, K)
    return ThresholdGrid(eta, model.T, dist.support, tables, dist.content_key())


def threshold_cache_key(grid: SolverGrid, dist: RewardDistribution,
                        model: WakeModel, eta: float, K: int) -> str:
    """Content hash over everything the tables depend on."""
    raw = "|".join([
        f"eta={eta!r}", f"K={K}", f"T={model.T!r}",
        f"w={grid.w_points}", f"b={grid.b_points}",
        dist.content_key(),
    ])
    return hashlib.sha256(raw.encode()).hexdigest()[:32]


def load_or_solve(cache_dir: str | None, grid: SolverGrid, dist: RewardDistribution,
                  model: WakeModel, eta: float, K: int,
                  backend=None) -> tuple[ThresholdGrid, bool]:
    """Fetch the tables from the cache directory or solve and store them.

    Returns (grid, cache_hit).  With cache_dir None, always solves.
    """
    if cache_dir is None:
        return solve_thresholds(grid, dist, model, eta, K, backend), False
    key = threshold_cache_key(grid, dist, model, eta, K)
    path = os.path.join(cache_dir, f"thresholds-{key}.npz")
    if os.path.exists(path):
        return ThresholdGrid.load(path), True
    os.makedirs(cache_dir, exist_ok=True)
    tg = solve_thresholds(grid, dist, model, eta, K, backend)
    tg.save(path)
    return tg, False
