"""One-hop Monte-Carlo evaluation: per-policy episode replay, the eta sweep
with common random numbers, and matching a target mean reward.

Replays run through the compiled kernels when available; `run_episode` is the
readable single-episode path through the belief engine and the policy layer,
and the two must agree episode for episode.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .belief import HopObservation, first_wake_update, belief_update
from .model import (
    EpisodeBatch,
    Episode,
    InitialBelief,
    RewardDistribution,
    WakeModel,
    sample_episode_batch,
)
from .policies import CONTINUE, STOP, DecisionContext, PolicySpec, assumed_count, decide
from .simplified import SimplifiedSpec, solve_alpha
from .thresholds import SolverGrid, ThresholdGrid, load_or_solve

__all__ = [
    "OneHopConfig",
    "SimOutcome",
    "SweepResult",
    "run_episode",
    "replay_batch",
    "sweep",
    "match_gamma",
    "write_outcomes_csv",
    "read_outcomes_csv",
]

CSV_FIELDS = (
    "policy", "eta", "mean_delay", "se_delay", "mean_reward", "se_reward",
    "replications", "master_seed",
)


@dataclass
class OneHopConfig:
    """Everything a sweep needs; etas must be sorted ascending."""

    model: WakeModel
    dist: RewardDistribution
    belief: InitialBelief
    policies: tuple[str, ...]
    etas: np.ndarray
    replications: int = 100_000
    master_seed: int = 20110915
    nbar_strict: bool = True

    def __post_init__(self):
        self.etas = np.asarray(self.etas, dtype=float)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if np.any(np.diff(self.etas) < 0):
            raise ValueError("etas must be sorted ascending")

    def n_bar(self) -> int:
        return assumed_count(self.belief.mean(), self.belief.K, self.nbar_strict)


@dataclass(frozen=True)
class SimOutcome:
    policy: str
    eta: float
    mean_delay: float
    se_delay: float
    mean_reward: float
    se_reward: float
    replications: int
    master_seed: int


@dataclass
class SweepResult:
    rows: list[SimOutcome]
    solve_seconds: float
    sim_seconds: float
    cache_hits: int = 0
    cache_misses: int = 0


def run_episode(model: WakeModel, dist: RewardDistribution, belief: InitialBelief,
                policy: PolicySpec, episode: Episode,
                thresholds: ThresholdGrid | None = None) -> tuple[float, float]:
    """Walk one episode through the belief engine and the policy layer.

    Returns (delay, reward): the stop time and the best reward then held; an
    episode that outlives its relays waits to T and keeps the running best.
    """
    n = episode.count
    needs_belief = policy.kind in ("inner", "outer")
    bel = None
    obs = HopObservation(stage=0, w=0.0, b=0.0)
    horizon = n if policy.kind != "a-comdp" else min(n, policy.n_bar)
    for k in range(1, horizon + 1):
        w_k = float(episode.wake_times[k - 1])
        r_k = float(episode.rewards[k - 1])
        if needs_belief:
            if k == 1:
                bel = first_wake_update(belief, model, w_k)
            else:
                bel = belief_update(bel, model, obs.w, w_k - obs.w)
        obs = HopObservation(stage=k, w=w_k, b=max(obs.b, r_k))
        ctx = DecisionContext(obs=obs, belief=bel, known_n=n)
        if decide(policy, ctx, thresholds) == STOP:
            return obs.w, obs.b
    return model.T, obs.b


def replay_batch(policy: PolicySpec, batch: EpisodeBatch, belief: InitialBelief,
                 thresholds: ThresholdGrid | None = None,
                 backend: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Kernel replay of a packed batch under one policy: (delays, rewards)."""
    impl = kernels.backend(backend)
    code = kernels.POLICY_CODES[policy.kind]
    K = belief.K
    if thresholds is not None:
        tables = thresholds.tables
        nw, nb = tables.shape[1], tables.shape[2]
        w_step = thresholds.T / (nw - 1)
        b_step = thresholds.r_max / (nb - 1)
        eta = thresholds.eta
    else:
        tables = np.zeros((1, 2, 2))
        nw = nb = 2
        w_step = batch.T
        b_step = batch.r_max
        eta = 1.0
    return impl.replay_episodes(
        code, batch.counts, batch.offsets, batch.wakes, batch.rewards, tables,
        0.0, w_step, nw, 0.0, b_step, nb, batch.T, K, eta,
        policy.alpha if policy.alpha is not None else 0.0,
        policy.n_bar if policy.n_bar is not None else 0,
        belief.pmf,
    )


def _aggregate(policy_kind: str, eta: float, delays: np.ndarray,
               rewards: np.ndarray, master_seed: int) -> SimOutcome:
    n = delays.size
    return SimOutcome(
        policy=policy_kind,
        eta=float(eta),
        mean_delay=float(delays.mean()),
        se_delay=float(delays.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        mean_reward=float(rewards.mean()),
        se_reward=float(rewards.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        replications=n,
        master_seed=master_seed,
    )


def _policy_spec(kind: str, eta: float, cfg: OneHopConfig,
                 alpha: float | None) -> PolicySpec:
    n_bar = cfg.n_bar()
    if kind in ("comdp", "inner", "outer"):
        return PolicySpec(kind, eta=eta)
    if kind == "a-comdp":
        return PolicySpec(kind, eta=eta, n_bar=n_bar)
    if kind == "a-simpl":
        return PolicySpec(kind, alpha=alpha, n_bar=n_bar)
    return PolicySpec(kind)


class _SweepRunner:
    """Shared episode set plus per-eta evaluation with table/alpha reuse."""

    def __init__(self, cfg, grid, cache_dir, threads, backend):
        self.cfg = cfg
        self.grid = grid
        self.cache_dir = cache_dir
        self.threads = threads
        self.backend = backend
        self.solve_seconds = 0.0
        self.sim_seconds = 0.0
        self.cache_hits = 0
        self.cache_misses = 0
        t0 = time.time()
        self.batch = sample_episode_batch(cfg.model, cfg.dist, cfg.belief,
                                          cfg.master_seed, cfg.replications)
        self.sim_seconds += time.time() - t0

    def tables_for(self, eta: float) -> ThresholdGrid:
        t0 = time.time()
        tg, hit = load_or_solve(self.cache_dir, self.grid, self.cfg.dist,
                                self.cfg.model, eta, self.cfg.belief.K,
                                self.backend)
        self.solve_seconds += time.time() - t0
        self.cache_hits += int(hit)
        self.cache_misses += int(not hit)
        return tg

    def evaluate(self, kind: str, eta: float) -> SimOutcome:
        cfg = self.cfg
        needs_tables = kind in ("comdp", "inner", "outer", "a-comdp")
        tg = self.tables_for(eta) if needs_tables else None
        alpha = None
        if kind == "a-simpl":
            alpha = solve_alpha(SimplifiedSpec(cfg.n_bar(), cfg.model.T, eta, cfg.dist))
        spec = _policy_spec(kind, eta, cfg, alpha)
        t0 = time.time()
        delays, rewards = _replay_threaded(spec, self.batch, cfg.belief, tg,
                                           self.threads, self.backend)
        self.sim_seconds += time.time() - t0
        return _aggregate(kind, eta, delays, rewards, cfg.master_seed)


def sweep(cfg: OneHopConfig, grid: SolverGrid = SolverGrid(),
          cache_dir: str | None = None, threads: int = 1,
          backend: str | None = None, refine_gamma: float | None = None,
          refine_tol: float = 1e-3, refine_iters: int = 14) -> SweepResult:
    """Evaluate every configured policy at every eta over one shared episode
    set (common random numbers across policies and etas).

    With `refine_gamma` set, each policy's eta is additionally bisected (same
    episode set) until its mean reward lands within `refine_tol` of the
    target, and the refined rows join the table; matching at that gamma then
    compares policies at equal achieved reward instead of inheriting the
    coarse grid's reward offsets.
    """
    runner = _SweepRunner(cfg, grid, cache_dir, threads, backend)
    rows: list[SimOutcome] = []
    for eta in cfg.etas:
        for kind in cfg.policies:
            rows.append(runner.evaluate(kind, float(eta)))
    if refine_gamma is not None:
        for kind in cfg.policies:
            rows.extend(_refine_policy(runner, rows, kind, refine_gamma,
                                       refine_tol, refine_iters))
    return SweepResult(rows, runner.solve_seconds, runner.sim_seconds,
                       runner.cache_hits, runner.cache_misses)


def _refine_policy(runner, rows, kind, gamma, tol, iters):
    """Bisect eta between the bracketing coarse rows until the mean reward
    under the shared episodes is within tol of gamma."""
    own = sorted((r for r in rows if r.policy == kind), key=lambda r: r.eta)
    if not own or min(abs(r.mean_reward - gamma) for r in own) <= tol:
        return []
    below = [r for r in own if r.mean_reward < gamma]
    above = [r for r in own if r.mean_reward >= gamma]
    if not below or not above:
        return []  # target outside the achievable range; closest row stands
    lo = max(below, key=lambda r: r.eta).eta
    hi = min(above, key=lambda r: r.eta).eta
    extra = []
    for _ in range(iters):
        mid = float(np.sqrt(lo * hi))
        row = runner.evaluate(kind, mid)
        extra.append(row)
        if abs(row.mean_reward - gamma) <= tol:
            break
        if row.mean_reward < gamma:
            lo = mid
        else:
            hi = mid
    return extra


def _replay_threaded(spec, batch, belief, tg, threads, backend):
    if threads <= 1 or len(batch) < 4 * threads:
        return replay_batch(spec, batch, belief, tg, backend)
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.linspace(0, len(batch), threads + 1).astype(int)
    chunks = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        off = batch.offsets[lo:hi + 1]
        chunks.append(EpisodeBatch(
            counts=batch.counts[lo:hi],
            offsets=off - off[0],
            wakes=batch.wakes[off[0]:off[-1]],
            rewards=batch.rewards[off[0]:off[-1]],
            T=batch.T, r_max=batch.r_max, master_seed=batch.master_seed,
        ))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(
            lambda ch: replay_batch(spec, ch, belief, tg, backend), chunks
        ))
    delays = np.concatenate([p[0] for p in parts])
    rewards = np.concatenate([p[1] for p in parts])
    return delays, rewards


def match_gamma(rows: list[SimOutcome], policy: str, gamma: float) -> SimOutcome:
    """The swept row of `policy` whose mean reward lands closest to gamma;
    ties break toward the smaller eta."""
    candidates = [r for r in rows if r.policy == policy]
    if not candidates:
        raise ValueError(f"no sweep rows for policy {policy!r}")
    candidates.sort(key=lambda r: (abs(r.mean_reward - gamma), r.eta))
    return candidates[0]


def write_outcomes_csv(rows: list[SimOutcome], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in rows:
            writer.writerow([
                r.policy, repr(r.eta), repr(r.mean_delay), repr(r.se_delay),
                repr(r.mean_reward), repr(r.se_reward), r.replications,
                r.master_seed,
            ])


def read_outcomes_csv(path: str) -> list[SimOutcome]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(SimOutcome(
                policy=rec["policy"],
                eta=float(rec["eta"]),
                mean_delay=float(rec["mean_delay"]),
                se_delay=float(rec["se_delay"]),
                mean_reward=float(rec["mean_reward"]),
                se_reward=float(rec["se_reward"]),
                replications=int(rec["replications"]),
                master_seed=int(rec["master_seed"]),
            ))
    return rows
