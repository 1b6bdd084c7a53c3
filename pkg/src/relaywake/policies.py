"""The seven stop/continue policies evaluated by the simulators.

Solver-backed kinds (comdp, a-comdp, inner, outer) consult the stage
threshold tables; a-simpl compares the running best against a single alpha;
ff and mf are the grab-first and wait-for-all baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .belief import BeliefState, HopObservation
from .bounds import in_inner_bound, in_outer_bound
from .thresholds import ThresholdGrid

__all__ = [
    "POLICY_KINDS",
    "PolicySpec",
    "DecisionContext",
    "decide",
    "forced_terminal",
    "strict_ceiling",
    "assumed_count",
]

POLICY_KINDS = ("comdp", "inner", "outer", "a-comdp", "a-simpl", "ff", "mf")

STOP = "stop"
CONTINUE = "continue"


def strict_ceiling(x: float) -> int:
    """Smallest integer strictly greater than x (so 10.0 -> 11)."""
    return int(math.floor(x)) + 1


def assumed_count(mean: float, K: int, strict: bool = True) -> int:
    """The stand-in relay count for the averaged policies: the (strictly
    greater, by default) integer ceiling of the prior mean, capped at K."""
    n = strict_ceiling(mean) if strict else int(math.ceil(mean))
    return max(1, min(n, K))


@dataclass(frozen=True)
class PolicySpec:
    """Policy identity plus the parameters its kind needs: eta for the
    solver-backed kinds, alpha for a-simpl, n_bar for the averaged kinds."""

    kind: str
    eta: float | None = None
    alpha: float | None = None
    n_bar: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind in ("comdp", "inner", "outer", "a-comdp") and self.eta is None:
            raise ValueError(f"policy {self.kind!r} needs eta")
        if self.kind == "a-simpl" and self.alpha is None:
            raise ValueError("a-simpl needs alpha")
        if self.kind in ("a-comdp", "a-simpl") and self.n_bar is None:
            raise ValueError(f"policy {self.kind!r} needs n_bar")


@dataclass
class DecisionContext:
    """What a policy may look at when a relay wakes: the observation, the
    belief (bound policies), and the true count (comdp and mf only)."""

    obs: HopObservation
    belief: BeliefState | None = None
    known_n: int | None = None


def forced_terminal(obs: HopObservation) -> str:
    """At the end of the cycle every policy hands the packet to the best
    relay seen; waiting longer only adds delay at the same reward."""
    return STOP


def decide(policy: PolicySpec, ctx: DecisionContext,
           thresholds: ThresholdGrid | None = None) -> str:
    """One stop/continue decision.  `thresholds` must carry the tables solved
    at policy.eta for the solver-backed kinds."""
    obs = ctx.obs
    k, w, b = obs.stage, obs.w, obs.b
    kind = policy.kind

    if kind == "ff":
        return STOP
    if kind == "a-simpl":
        return STOP if b >= policy.alpha else CONTINUE
    if kind == "mf":
        if ctx.known_n is None:
            raise ValueError("mf needs the true relay count")
        return STOP if k >= ctx.known_n else CONTINUE

    if thresholds is None:
        raise ValueError(f"policy {kind!r} needs solved threshold tables")
    if kind == "comdp":
        if ctx.known_n is None:
            raise ValueError("comdp needs the true relay count")
        return STOP if thresholds.should_stop_known(ctx.known_n - k, w, b) else CONTINUE
    if kind == "a-comdp":
        remaining = policy.n_bar - k
        if remaining < 0:
            raise ValueError("a-comdp consulted beyond its assumed horizon")
        return STOP if thresholds.should_stop_known(remaining, w, b) else CONTINUE

    # belief-based bound policies
    if ctx.belief is None:
        raise ValueError(f"policy {kind!r} needs a belief state")
    p = ctx.belief
    if p.stage != k:
        raise ValueError("belief and observation stages disagree")
    if p.stage == p.K:
        return STOP  # every relay accounted for
    edges = thresholds.edge_thresholds(k, w, b)
    member = in_inner_bound(p, edges) if kind == "inner" else in_outer_bound(p, edges)
    return STOP if member else CONTINUE
