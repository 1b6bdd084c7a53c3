"""Probability kernels of the relay-selection model.

Reward distributions on [0, r_max], initial count priors on {1..K}, and the
conditional order-statistic machinery for uniform wake-up times on (0, T).
Everything here is immutable after construction and safe to share across
threads; sampling takes an explicit seed or Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, erfinv, gammaln

__all__ = [
    "RewardDistribution",
    "UniformReward",
    "ProgressReward",
    "PenalizedProgressReward",
    "CompositeProgressRateReward",
    "TruncatedGaussianReward",
    "TabulatedReward",
    "InitialBelief",
    "WakeModel",
    "Episode",
    "EpisodeBatch",
    "forwarding_area",
    "order_stat_cond_pdf",
    "expected_next_wake",
    "episode_rng",
    "sample_episode",
    "sample_episode_batch",
    "scenario_preset",
    "PRESET_NAMES",
]

_FINE_GRID = 4001  # default resolution for tabulated cdf/inverse-cdf tables


def forwarding_area(d: float, r_c: float) -> float:
    """Area of the forwarding region: points within r_c of the sender and
    strictly closer than d to the sink (lens of two circles, centers d apart).
    """
    if not 0.0 < r_c < d:
        raise ValueError(f"need 0 < r_c < d, got r_c={r_c}, d={d}")
    # standard two-circle intersection with radii r_c and d, center distance d
    t1 = r_c * r_c * math.acos(r_c / (2.0 * d))
    t2 = d * d * math.acos(1.0 - r_c * r_c / (2.0 * d * d))
    t3 = 0.5 * r_c * math.sqrt(4.0 * d * d - r_c * r_c)
    return t1 + t2 - t3


class RewardDistribution:
    """Common interface for the per-relay reward law.

    Subclasses provide pdf/cdf/sample on the support [0, support]; the pdf
    integrates to one and the cdf is nondecreasing with cdf(0)=0,
    cdf(support)=1.
    """

    kind = "abstract"
    support: float

    def pdf(self, r):
        raise NotImplementedError

    def cdf(self, r):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        g = np.linspace(0.0, self.support, _FINE_GRID)
        return float(np.trapezoid(1.0 - self.cdf(g), g))

    def content_key(self) -> str:
        """Stable identity string, used for threshold-cache keys."""
        raise NotImplementedError

    def _check_support(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < -1e-12) or np.any(r > self.support + 1e-12):
            raise ValueError(
                f"reward value outside support [0, {self.support}]"
            )
        return np.clip(r, 0.0, self.support)


class UniformReward(RewardDistribution):
    """Rewards uniform on [0, high]."""

    kind = "uniform"

    def __init__(self, high: float = 1.0):
        if high <= 0:
            raise ValueError("high must be positive")
        self.support = float(high)

    def pdf(self, r):
        r = self._check_support(r)
        return np.full_like(r, 1.0 / self.support)

    def cdf(self, r):
        r = self._check_support(r)
        return r / self.support

    def sample(self, rng, size):
        return rng.random(size) * self.support

    def content_key(self):
        return f"uniform({self.support!r})"


class _TableMixin:
    """Shared cdf-table plumbing: inverse-cdf sampling and cdf lookup."""

    _grid: np.ndarray
    _cdf: np.ndarray

    def cdf(self, r):
        r = self._check_support(r)
        return np.interp(r, self._grid, self._cdf)

    def sample(self, rng, size):
        return np.interp(rng.random(size), self._cdf, self._grid)

    def _freeze_tables(self, grid, cdf):
        cdf = np.clip(cdf, 0.0, None)
        cdf /= cdf[-1]
        cdf[0] = 0.0
        cdf[-1] = 1.0
        self._grid = grid
        self._cdf = cdf
        for a in (self._grid, self._cdf):
            a.setflags(write=False)


class ProgressReward(_TableMixin, RewardDistribution):
    """Progress made toward the sink by a relay placed uniformly in the
    forwarding region; sender at distance d from the sink, radio range r_c.

    Density on [0, r_c]:
        f(r) = 2 (d-r) arccos((d^2 + (d-r)^2 - r_c^2) / (2 d (d-r))) / area.
    """

    kind = "progress-geometric"

    def __init__(self, d: float = 10.0, r_c: float = 1.0, table_points: int = _FINE_GRID):
        if not 0.0 < r_c < d:
            raise ValueError(f"need 0 < r_c < d, got r_c={r_c}, d={d}")
        self.d = float(d)
        self.r_c = float(r_c)
        self.support = float(r_c)
        self.area = forwarding_area(self.d, self.r_c)
        grid = np.linspace(0.0, self.r_c, table_points)
        dens = self._raw_pdf(grid)
        cdf = np.concatenate(
            ([0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid)))
        )
        self._freeze_tables(grid, cdf)

    def _raw_pdf(self, r):
        r = np.asarray(r, dtype=float)
        back = self.d - r
        arg = (self.d**2 + back**2 - self.r_c**2) / (2.0 * self.d * back)
        return 2.0 * back * np.arccos(np.clip(arg, -1.0, 1.0)) / self.area

    def pdf(self, r):
        return self._raw_pdf(self._check_support(r))

    def content_key(self):
        return f"progress({self.d!r},{self.r_c!r})"


class PenalizedProgressReward(_TableMixin, RewardDistribution):
    """Progress reward penalizing both short and long hops.

    R = -a1 * Z * log(Z / a2) where Z is the geometric progress; the reward
    peaks at Z = a2/e and a1 normalizes that peak to 1.  Nonmonotone in Z, so
    the cdf is assembled from the two monotone branches around the peak.
    """

    kind = "progress-penalized"

    def __init__(self, d: float = 10.0, r_c: float = 1.0, a2: float | None = None):
        self.base = ProgressReward(d, r_c)
        self.a2 = float(a2) if a2 is not None else 0.4 * math.e
        z_peak = self.a2 / math.e
        if not 0.0 < z_peak < r_c:
            raise ValueError("reward peak must fall inside the progress support")
        self.a1 = 1.0 / z_peak
        self.z_peak = z_peak
        self.support = 1.0
        grid = np.linspace(0.0, 1.0, _FINE_GRID)
        cdf = np.array([self._cdf_scalar(r) for r in grid])
        self._freeze_tables(grid, cdf)
        pdf = np.gradient(self._cdf, grid)
        pdf = np.clip(pdf, 0.0, None)
        pdf /= np.trapezoid(pdf, grid)
        self._pdf = pdf
        self._pdf.setflags(write=False)

    def _transform(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = -self.a1 * z[pos] * np.log(z[pos] / self.a2)
        return out

    def _cdf_scalar(self, r: float) -> float:
        # {z: g(z) <= r} = [0, z1] plus [z2, r_c] once g(r_c) <= r
        if r >= 1.0:
            return 1.0
        z1 = _bisect_increasing(lambda z: float(self._transform(z)), r, 0.0, self.z_peak)
        total = float(self.base.cdf(z1))
        r_edge = float(self._transform(np.array([self.base.r_c]))[0])
        if r >= r_edge:
            z2 = _bisect_decreasing(
                lambda z: float(self._transform(z)), r, self.z_peak, self.base.r_c
            )
            total += 1.0 - float(self.base.cdf(z2))
        return min(total, 1.0)

    def pdf(self, r):
        r = self._check_support(r)
        return np.interp(r, self._grid, self._pdf)

    def sample(self, rng, size):
        return self._transform(self.base.sample(rng, size))

    def content_key(self):
        return f"penalized({self.base.d!r},{self.base.r_c!r},{self.a2!r})"


class CompositeProgressRateReward(_TableMixin, RewardDistribution):
    """Weighted mix of geometric progress and a discrete link rate.

    R = c1*Z + c2*H with H in {0.2,...,1.0}; conditionally on Z=z,
    P(H=h) is proportional to h*exp(-rate*z*h), so longer hops see worse
    rates.  The cdf/pdf tables are built once from 10^6 seeded samples; the
    episode sampler draws (Z, H) exactly.
    """

    kind = "progress-plus-rate"

    _RATE_LEVELS = np.array([0.2, 0.4, 0.6, 0.8, 1.0])
    _TABLE_SEED = 0x5EED_E2  # fixed so identical configs give identical tables
    _TABLE_SAMPLES = 1_000_000

    def __init__(self, d: float = 10.0, r_c: float = 1.0, c1: float = 0.5,
                 c2: float = 0.5, rate: float = 10.0):
        self.base = ProgressReward(d, r_c)
        self.c1, self.c2, self.rate = float(c1), float(c2), float(rate)
        self.support = self.c1 * r_c + self.c2 * float(self._RATE_LEVELS[-1])
        rng = np.random.Generator(np.random.Philox(key=self._TABLE_SEED))
        draws = self.sample(rng, self._TABLE_SAMPLES)
        grid = np.linspace(0.0, self.support, _FINE_GRID)
        cdf = np.searchsorted(np.sort(draws), grid, side="right") / draws.size
        self._freeze_tables(grid, cdf)
        hist, edges = np.histogram(draws, bins=200, range=(0.0, self.support), density=True)
        centers = 0.5 * (edges[1:] + edges[:-1])
        pdf = np.interp(grid, centers, hist, left=hist[0], right=hist[-1])
        pdf /= np.trapezoid(pdf, grid)
        self._pdf = pdf
        self._pdf.setflags(write=False)

    def _rate_weights(self, z):
        w = self._RATE_LEVELS[None, :] * np.exp(
            -self.rate * np.asarray(z)[:, None] * self._RATE_LEVELS[None, :]
        )
        return w / w.sum(axis=1, keepdims=True)

    def pdf(self, r):
        r = self._check_support(r)
        return np.interp(r, self._grid, self._pdf)

    def sample(self, rng, size):
        z = self.base.sample(rng, size)
        cw = np.cumsum(self._rate_weights(z), axis=1)
        idx = (rng.random(size)[:, None] > cw[:, :-1]).sum(axis=1)
        return self.c1 * z + self.c2 * self._RATE_LEVELS[idx]

    def content_key(self):
        return (
            f"progress-rate({self.base.d!r},{self.base.r_c!r},"
            f"{self.c1!r},{self.c2!r},{self.rate!r})"
        )


class TruncatedGaussianReward(RewardDistribution):
    """Gaussian(mean, var) truncated to [low, high]."""

    kind = "truncated-gaussian"

    def __init__(self, mean: float = 0.5, var: float = 1.0,
                 low: float = 0.0, high: float = 1.0):
        if var <= 0 or high <= low:
            raise ValueError("need var > 0 and high > low")
        self.mu = float(mean)
        self.sigma = math.sqrt(var)
        self.low = float(low)
        self.high = float(high)
        self.support = float(high)
        self._phi_lo = self._std_cdf((low - self.mu) / self.sigma)
        self._phi_hi = self._std_cdf((high - self.mu) / self.sigma)
        self._mass = self._phi_hi - self._phi_lo

    @staticmethod
    def _std_cdf(x):
        return 0.5 * (1.0 + erf(np.asarray(x) / math.sqrt(2.0)))

    def pdf(self, r):
        r = self._check_support(r)
        z = (r - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi) * self._mass)

    def cdf(self, r):
        r = self._check_support(r)
        return (self._std_cdf((r - self.mu) / self.sigma) - self._phi_lo) / self._mass

    def sample(self, rng, size):
        u = self._phi_lo + rng.random(size) * self._mass
        return self.mu + self.sigma * math.sqrt(2.0) * erfinv(2.0 * u - 1.0)

    def content_key(self):
        return f"truncnorm({self.mu!r},{self.sigma**2!r},{self.low!r},{self.high!r})"


class TabulatedReward(_TableMixin, RewardDistribution):
    """Custom distribution given as (grid, pdf values); trapezoid-normalized."""

    kind = "custom-tabulated"

    def __init__(self, grid, pdf_values):
        grid = np.asarray(grid, dtype=float)
        pdf = np.asarray(pdf_values, dtype=float)
        if grid.ndim != 1 or grid.shape != pdf.shape or grid.size < 2:
            raise ValueError("grid and pdf values must be matching 1-D arrays")
        if grid[0] != 0.0 or np.any(np.diff(grid) <= 0) or np.any(pdf < 0):
            raise ValueError("grid must increase from 0 and pdf must be nonnegative")
        self.support = float(grid[-1])
        mass = np.trapezoid(pdf, grid)
        if mass <= 0:
            raise ValueError("pdf mass must be positive")
        pdf = pdf / mass
        cdf = np.concatenate(
            ([0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid)))
        )
        self._freeze_tables(grid.copy(), cdf)
        self._pdf = pdf
        self._pdf.setflags(write=False)

    def pdf(self, r):
        r = self._check_support(r)
        return np.interp(r, self._grid, self._pdf)

    def content_key(self):
        h = hash((tuple(np.round(self._grid, 12)), tuple(np.round(self._pdf, 12))))
        return f"tabulated({self.support!r},{h})"


def _bisect_increasing(fn, target, lo, hi, iters=80):
    """Root of fn(x)=target for fn increasing on [lo, hi]; clamps at the ends."""
    if fn(hi) <= target:
        return hi
    if fn(lo) >= target:
        return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _bisect_decreasing(fn, target, lo, hi, iters=80):
    return _bisect_increasing(lambda x: -fn(x), -target, lo, hi, iters)


@dataclass(frozen=True)
class WakeModel:
    """Wake-up timing: relays wake once, iid uniform on (0, T)."""

    T: float = 1.0

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("cycle duration T must be positive")


class InitialBelief:
    """Prior pmf on the number of relays, supported on {1,...,K}."""

    def __init__(self, kind: str, K: int, pmf: np.ndarray, params: tuple = ()):
        if K < 1:
            raise ValueError("K must be >= 1")
        pmf = np.asarray(pmf, dtype=float)
        if pmf.shape != (K,):
            raise ValueError(f"pmf must have length K={K}")
        if np.any(pmf < 0):
            raise ValueError("pmf entries must be nonnegative")
        total = pmf.sum()
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            pmf = pmf / total
        if abs(pmf.sum() - 1.0) > 1e-12:
            pmf = pmf / pmf.sum()
        self.kind = kind
        self.K = int(K)
        self.pmf = pmf
        self.pmf.setflags(write=False)
        self.params = params
        self._cdf = np.cumsum(pmf)

    @classmethod
    def truncated_poisson(cls, lam: float, K: int) -> "InitialBelief":
        n = np.arange(1, K + 1)
        logp = n * math.log(lam) - gammaln(n + 1)
        p = np.exp(logp - logp.max())
        return cls("truncated-poisson", K, p / p.sum(), (lam,))

    @classmethod
    def truncated_binomial(cls, prob: float, K: int) -> "InitialBelief":
        if not 0.0 < prob < 1.0:
            raise ValueError("success probability must lie in (0, 1)")
        n = np.arange(1, K + 1)
        logp = (
            gammaln(K + 1) - gammaln(n + 1) - gammaln(K - n + 1)
            + n * math.log(prob) + (K - n) * math.log1p(-prob)
        )
        p = np.exp(logp - logp.max())
        return cls("binomial-truncated", K, p / p.sum(), (prob,))

    @classmethod
    def uniform_counts(cls, K: int) -> "InitialBelief":
        return cls("uniform", K, np.full(K, 1.0 / K))

    @classmethod
    def point_mass(cls, n: int, K: int) -> "InitialBelief":
        if not 1 <= n <= K:
            raise ValueError(f"point mass must satisfy 1 <= n <= K, got n={n}")
        p = np.zeros(K)
        p[n - 1] = 1.0
        return cls("point-mass", K, p, (n,))

    @classmethod
    def custom(cls, pmf) -> "InitialBelief":
        pmf = np.asarray(pmf, dtype=float)
        return cls("custom", pmf.size, pmf)

    def mean(self) -> float:
        return float(np.arange(1, self.K + 1) @ self.pmf)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        idx = np.minimum(idx, self.K - 1)
        return int(idx) + 1 if size is None else (idx + 1).astype(np.int32)

    def content_key(self) -> str:
        if self.kind == "custom":
            return f"custom({tuple(np.round(self.pmf, 14))})"
        return f"{self.kind}({self.params!r},K={self.K})"


def order_stat_cond_pdf(model: WakeModel, u: float, w: float, n: int, k: int) -> float:
    """Density of the wait until the next wake-up, given k of n relays seen
    and the k-th woke at w:  (n-k) (T-w-u)^(n-k-1) / (T-w)^(n-k).

    Depends on (n, k) only through n-k and on w only through T-w.
    """
    T = model.T
    if w < 0 or w >= T:
        raise ValueError(f"need 0 <= w < T, got w={w}")
    if not 0 <= k < n:
        raise ValueError(f"need 0 <= k < n, got k={k}, n={n}")
    if u < 0 or u >= T - w:
        raise ValueError(f"need 0 <= u < T-w, got u={u}")
    m = n - k
    return m * (T - w - u) ** (m - 1) / (T - w) ** m


def expected_next_wake(model: WakeModel, w: float, n: int, k: int) -> float:
    """Mean wait for the next wake-up: (T-w)/(n-k+1), or T-w once k = n
    (the residual wait to the deadline when no relay remains).
    """
    T = model.T
    if w < 0 or w >= T:
        raise ValueError(f"need 0 <= w < T, got w={w}")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if k == n:
        return T - w
    return (T - w) / (n - k + 1)


@dataclass(frozen=True)
class Episode:
    """One sampled hop: relay count, sorted wake times, matching rewards."""

    count: int
    wake_times: np.ndarray
    rewards: np.ndarray


@dataclass
class EpisodeBatch:
    """Episodes packed flat for the replay kernels (counts/offsets/values)."""

    counts: np.ndarray   # int32 (E,)
    offsets: np.ndarray  # int64 (E+1,)
    wakes: np.ndarray    # float64, concatenated sorted wake times
    rewards: np.ndarray  # float64, matching rewards
    T: float
    r_max: float
    master_seed: int

    def __len__(self):
        return self.counts.size

    def episode(self, i: int) -> Episode:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return Episode(int(self.counts[i]), self.wakes[lo:hi], self.rewards[lo:hi])


def episode_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-derived per-episode generator (Philox): independent streams,
    reproducible for any (master_seed, index) without sequential draws.
    """
    return np.random.Generator(
        np.random.Philox(key=master_seed, counter=[0, 0, 0, index])
    )


def _strict_sorted_uniform(rng: np.random.Generator, n: int, T: float) -> np.ndarray:
    w = np.sort(rng.random(n) * T)
    # ties and endpoint hits have probability ~0; redraw to keep the strict
    # ordering the continuous model assumes
    while w.size and (w[0] <= 0.0 or w[-1] >= T or np.any(np.diff(w) <= 0.0)):
        w = np.sort(rng.random(n) * T)
    return w


def sample_episode(model: WakeModel, dist: RewardDistribution,
                   belief: InitialBelief, seed: int, index: int = 0) -> Episode:
    """Draw one episode: N from the prior, N sorted uniform wake times on
    (0, T), and N iid rewards.  Deterministic in (seed, index).
    """
    rng = episode_rng(seed, index)
    n = belief.sample(rng)
    wakes = _strict_sorted_uniform(rng, n, model.T)
    rewards = dist.sample(rng, n)
    return Episode(n, wakes, rewards)


def sample_episode_batch(model: WakeModel, dist: RewardDistribution,
                         belief: InitialBelief, master_seed: int,
                         count: int) -> EpisodeBatch:
    """Sample `count` episodes with per-episode counter-derived seeds and
    pack them for the replay kernels.
    """
    counts = np.empty(count, dtype=np.int32)
    wakes_parts = []
    reward_parts = []
    for i in range(count):
        ep = sample_episode(model, dist, belief, master_seed, i)
        counts[i] = ep.count
        wakes_parts.append(ep.wake_times)
        reward_parts.append(ep.rewards)
    offsets = np.zeros(count + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return EpisodeBatch(
        counts=counts,
        offsets=offsets,
        wakes=np.concatenate(wakes_parts) if wakes_parts else np.empty(0),
        rewards=np.concatenate(reward_parts) if reward_parts else np.empty(0),
        T=model.T,
        r_max=dist.support,
        master_seed=master_seed,
    )


PRESET_NAMES = (
    "progress10",
    "example1",
    "example2",
    "example3",
    "example4",
    "uniform01",
)


def scenario_preset(name: str, K: int | None = None):
    """Named scenario bundles: (reward distribution, initial belief, T).

    `uniform01` and `truncnorm(m,v)` fix only the reward law and pair it with
    the default truncated-Poisson(10) prior (K=50 unless overridden).
    """
    name = name.strip()
    if name == "progress10":
        kk = K or 50
        return ProgressReward(10.0, 1.0), InitialBelief.truncated_poisson(10.0, kk), 1.0
    if name == "example1":
        kk = K or 40
        return PenalizedProgressReward(10.0, 1.0), InitialBelief.truncated_poisson(5.0, kk), 1.0
    if name == "example2":
        kk = K or 30
        return CompositeProgressRateReward(10.0, 1.0), InitialBelief.truncated_binomial(0.5, kk), 1.0
    if name == "example3":
        kk = K or 20
        return UniformReward(1.0), InitialBelief.truncated_binomial(0.5, kk), 1.0
    if name == "example4":
        kk = K or 15
        return TruncatedGaussianReward(0.5, 1.0), InitialBelief.uniform_counts(kk), 1.0
    if name == "uniform01":
        kk = K or 50
        return UniformReward(1.0), InitialBelief.truncated_poisson(10.0, kk), 1.0
    if name.startswith("truncnorm(") and name.endswith(")"):
        inner = name[len("truncnorm("):-1]
        mean_s, var_s = inner.split(",")
        kk = K or 50
        return (
            TruncatedGaussianReward(float(mean_s), float(var_s)),
            InitialBelief.truncated_poisson(10.0, kk),
            1.0,
        )
    raise ValueError(
        f"unknown preset {name!r}; valid: {', '.join(PRESET_NAMES)} or truncnorm(mean,var)"
    )
