"""Belief engine: posterior pmfs on the remaining relay count and the Bayes
update driven by observed inter-wake times.

A belief at stage k lives on {k,...,K}; observing the (k+1)-th wake-up after
a wait u reweights each count hypothesis n by the conditional order-statistic
density (n-k)(T-w-u)^(n-k-1)/(T-w)^(n-k) and drops the n=k hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import InitialBelief, WakeModel

__all__ = [
    "BeliefState",
    "HopObservation",
    "InvalidTransitionError",
    "belief_update",
    "first_wake_update",
    "advance_observation",
    "simplex_corner",
]


class InvalidTransitionError(RuntimeError):
    """Raised when a wake-up is observed that no surviving hypothesis allows."""


@dataclass(frozen=True)
class BeliefState:
    """Pmf over the number of relays n in {stage,...,K} after `stage` wake-ups."""

    stage: int
    mass: np.ndarray
    K: int

    def __post_init__(self):
        if not 1 <= self.stage <= self.K:
            raise ValueError(f"stage must lie in [1, K], got {self.stage}")
        m = np.asarray(self.mass, dtype=float)
        if m.shape != (self.K - self.stage + 1,):
            raise ValueError(
                f"mass must have length K-stage+1={self.K - self.stage + 1}"
            )
        if np.any(m < -1e-15):
            raise ValueError("belief mass must be nonnegative")
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValueError("belief mass must sum to one")
        m = np.clip(m, 0.0, None)
        m = m / m.sum()
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    def prob(self, n: int) -> float:
        """P(N = n) under this belief."""
        if n < self.stage or n > self.K:
            return 0.0
        return float(self.mass[n - self.stage])

    def mean_count(self) -> float:
        return float(np.arange(self.stage, self.K + 1) @ self.mass)

    def tail(self) -> np.ndarray:
        """Mass on n > stage, indexed by remaining count l = n - stage."""
        return self.mass[1:]


@dataclass(frozen=True)
class HopObservation:
    """Observable part of the state: stage index, wake time, best reward."""

    stage: int
    w: float
    b: float


def _bayes_step(log_prior: np.ndarray, counts: np.ndarray, w: float, u: float,
                stage_from: int, T: float) -> np.ndarray:
    """Log-space reweighting of count hypotheses by the wait density."""
    remain = T - w
    m = counts - stage_from  # relays still unseen under each hypothesis
    with np.errstate(divide="ignore"):
        loglik = (
            np.log(m.astype(float))
            + (m - 1) * np.log(max(remain - u, 0.0))
            - m * np.log(remain)
        )
    logpost = log_prior + loglik
    peak = logpost.max()
    if not np.isfinite(peak):
        raise InvalidTransitionError(
            "no hypothesis with positive mass admits another wake-up"
        )
    post = np.exp(logpost - peak)
    return post / post.sum()


def belief_update(p: BeliefState, model: WakeModel, w: float, u: float) -> BeliefState:
    """Bayes transition to stage k+1 after waiting u past the k-th wake at w.

    The posterior on n in {k+1,...,K} is proportional to
    p(n) * (n-k)(T-w-u)^(n-k-1)/(T-w)^(n-k); the n=k hypothesis is ruled out
    by the arrival itself.
    """
    k = p.stage
    if k >= p.K:
        raise InvalidTransitionError("no stage beyond K")
    T = model.T
    if not 0 <= w < T:
        raise ValueError(f"need 0 <= w < T, got w={w}")
    if not 0 < u < T - w:
        raise ValueError(f"need 0 < u < T-w, got u={u}")
    upper = p.mass[1:]
    if upper.sum() <= 0.0:
        raise InvalidTransitionError(
            f"belief has all mass on n={k}; no relay can wake at stage {k + 1}"
        )
    counts = np.arange(k + 1, p.K + 1)
    with np.errstate(divide="ignore"):
        log_prior = np.log(upper)
    post = _bayes_step(log_prior, counts, w, u, k, T)
    return BeliefState(stage=k + 1, mass=post, K=p.K)


def first_wake_update(prior: InitialBelief, model: WakeModel, w1: float) -> BeliefState:
    """Stage-1 belief from the pre-arrival prior after the first wake at w1.

    Same Bayes rule with the decision clock starting at 0: hypothesis n is
    reweighted by n(T-w1)^(n-1)/T^n.  No hypothesis is eliminated since the
    relay set is nonempty by assumption.
    """
    T = model.T
    if not 0 < w1 < T:
        raise ValueError(f"need 0 < w1 < T, got {w1}")
    counts = np.arange(1, prior.K + 1)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior.pmf)
    post = _bayes_step(log_prior, counts, 0.0, w1, 0, T)
    return BeliefState(stage=1, mass=post, K=prior.K)


def advance_observation(obs: HopObservation, u: float, r: float,
                        model: WakeModel) -> HopObservation:
    """Next observation after waiting u and seeing reward r: the clock adds u
    and the best reward updates.  A wait overshooting the cycle end is the
    no-more-relays case: clamp to T and force the phantom reward to zero.
    """
    if u < 0:
        raise ValueError("wait must be nonnegative")
    w_next = obs.w + u
    if w_next >= model.T:
        return HopObservation(stage=obs.stage + 1, w=model.T, b=obs.b)
    return HopObservation(stage=obs.stage + 1, w=w_next, b=max(obs.b, r))


def simplex_corner(k: int, n: int, K: int) -> BeliefState:
    """Point-mass belief on n at stage k (a corner of the stage-k simplex)."""
    if n < k:
        raise ValueError(f"corner needs n >= k, got n={n}, k={k}")
    if n > K:
        raise ValueError(f"corner needs n <= K, got n={n}, K={K}")
    mass = np.zeros(K - k + 1)
    mass[n - k] = 1.0
    return BeliefState(stage=k, mass=mass, K=K)
