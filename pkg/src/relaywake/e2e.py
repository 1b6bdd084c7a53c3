"""End-to-end multihop forwarding over a random network of periodically
waking nodes, with a slotted beacon protocol at every hop.

A packet holder beacons in slots of length t_I; a forwarding-set neighbor
answers in the slot its periodic wake-up falls in, contention inside a slot
going to the largest progress.  The threshold policies accept the first
responder clearing the hop's alpha and otherwise keep the best responder
awake; handing the packet over costs t_D.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ProgressReward, forwarding_area
from .policies import strict_ceiling
from .simplified import SimplifiedSpec, alpha_for_target_reward

__all__ = [
    "NetworkInstance",
    "ProtocolTiming",
    "E2EOutcome",
    "E2E_POLICIES",
    "generate_network",
    "run_transfer",
    "tradeoff_curve",
    "write_e2e_csv",
]

E2E_POLICIES = ("ff", "mf", "sf", "sf-hat")

E2E_CSV_FIELDS = (
    "policy", "gamma", "mean_total_delay", "se_delay", "mean_hop_count",
    "se_hops", "transfers", "topology_seed",
)


@dataclass(frozen=True)
class ProtocolTiming:
    """Beacon slot and packet transmission durations (same unit as T)."""

    t_beacon: float = 0.005
    t_data: float = 0.030

    def __post_init__(self):
        if not 0.0 < self.t_beacon < self.t_data:
            raise ValueError("need 0 < t_beacon < t_data")


@dataclass
class NetworkInstance:
    """A fixed node placement with the source at the origin and the sink at
    the far corner; every node (and the source) can reach someone strictly
    closer to the sink."""

    positions: np.ndarray        # (M+2, 2); row 0 = source, row -1 = sink
    L: float
    density: float
    r_c: float
    T: float
    seed: int
    phases: np.ndarray           # default per-node wake offsets in [0, T)
    fwd_sets: list[np.ndarray] = field(repr=False)
    sink_dist: np.ndarray = field(repr=False)

    SOURCE = 0

    @property
    def sink(self) -> int:
        return self.positions.shape[0] - 1

    def node_count(self) -> int:
        return self.positions.shape[0] - 2

    def progress_of(self, holder: int, nxt: int) -> float:
        return float(self.sink_dist[holder] - self.sink_dist[nxt])


def _forwarding_sets(positions, sink_dist, r_c):
    """Candidate next hops per node: within radio range and strictly closer
    to the sink (the sink itself included once in range)."""
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    closer = sink_dist[None, :] < sink_dist[:, None]
    reach = dist <= r_c
    np.fill_diagonal(reach, False)
    member = reach & closer
    return [np.flatnonzero(member[i]) for i in range(positions.shape[0])]


def generate_network(L: float, density: float, r_c: float, seed: int,
                     T: float = 1.0, max_attempts: int = 10_000) -> NetworkInstance:
    """Poisson(density*L^2) nodes uniform on [0,L]^2; placements are redrawn
    whole until every node and the source have a nonempty forwarding set."""
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        m = int(rng.poisson(density * L * L))
        if m == 0:
            continue
        nodes = rng.uniform(0.0, L, size=(m, 2))
        positions = np.vstack([[0.0, 0.0], nodes, [L, L]])
        sink_dist = np.hypot(positions[:, 0] - L, positions[:, 1] - L)
        fwd = _forwarding_sets(positions, sink_dist, r_c)
        if all(f.size > 0 for f in fwd[:-1]):
            phases = rng.uniform(0.0, T, size=positions.shape[0])
            return NetworkInstance(
                positions=positions, L=L, density=density, r_c=r_c, T=T,
                seed=seed, phases=phases, fwd_sets=fwd, sink_dist=sink_dist,
            )
    raise RuntimeError(
        f"no admissible placement in {max_attempts} draws; "
        "raise the node density or the radio range"
    )


class _HopThresholds:
    """Per-node accept thresholds for the threshold policies, cached per
    (node, gamma): the node matches the simplified model's mean reward to
    gamma using either its exact forwarding-set size (sf) or the density
    estimate ceil(density x forwarding area) (sf-hat)."""

    def __init__(self, net: NetworkInstance):
        self.net = net
        self._dists: dict[int, ProgressReward] = {}
        self._alphas: dict[tuple[str, int, float], float] = {}

    def _hop_dist(self, node: int) -> ProgressReward:
        if node not in self._dists:
            d = float(self.net.sink_dist[node])
            self._dists[node] = ProgressReward(d, self.net.r_c)
        return self._dists[node]

    def _count(self, policy: str, node: int) -> int:
        net = self.net
        if policy == "sf":
            n = net.fwd_sets[node].size
        else:
            area = forwarding_area(float(net.sink_dist[node]), net.r_c)
            n = strict_ceiling(net.density * area)
        return max(1, int(n))

    def alpha(self, policy: str, node: int, gamma: float) -> float:
        key = (policy, node, gamma)
        if key not in self._alphas:
            spec = SimplifiedSpec(self._count(policy, node), self.net.T, 1.0,
                                  self._hop_dist(node))
            self._alphas[key] = alpha_for_target_reward(
                spec, min(gamma, spec.dist.support)
            )
        return self._alphas[key]


def _hop_candidates(net, holder, phases, now, t_beacon):
    """Slot-resolved responders: per beacon slot the best-progress waker;
    returns (slots, nodes, progresses, last_wake_slot) ordered by slot."""
    fwd = net.fwd_sets[holder]
    offs = phases[fwd]
    wait = (offs - now) % net.T
    wait[wait >= net.T] = 0.0  # float modulo can land on T itself
    slots = np.floor(wait / t_beacon).astype(np.int64) + 1
    prog = net.sink_dist[holder] - net.sink_dist[fwd]
    order = np.lexsort((-prog, slots))
    slots, fwd, prog = slots[order], fwd[order], prog[order]
    keep = np.ones(slots.size, dtype=bool)
    keep[1:] = slots[1:] != slots[:-1]
    return slots[keep], fwd[keep], prog[keep], int(slots[-1])


def run_transfer(net: NetworkInstance, timing: ProtocolTiming, policy: str,
                 gamma: float, seed: int,
                 thresholds: _HopThresholds | None = None):
    """Carry one packet from the source to the sink; wake phases are drawn
    fresh from `seed`.  Returns (total_delay, hop_count, path)."""
    if policy not in E2E_POLICIES:
        raise ValueError(f"unknown end-to-end policy {policy!r}")
    if policy in ("sf", "sf-hat") and not 0.0 <= gamma <= net.r_c:
        raise ValueError(f"gamma must lie in [0, r_c], got {gamma}")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, net.T, size=net.positions.shape[0])
    if thresholds is None:
        thresholds = _HopThresholds(net)
    horizon_slots = int(math.floor(net.T / timing.t_beacon))

    now = 0.0
    holder = net.SOURCE
    hops = 0
    path = [holder]
    max_hops = net.positions.shape[0]
    while holder != net.sink:
        if hops >= max_hops:
            raise AssertionError("routing exceeded the node count")
        if net.sink_dist[holder] <= net.r_c:
            # the always-awake sink answers the first beacon
            now += timing.t_beacon + timing.t_data
            holder = net.sink
        else:
            slots, nodes, prog, last_slot = _hop_candidates(
                net, holder, phases, now, timing.t_beacon
            )
            if policy == "ff":
                accept_at = 0
            elif policy == "mf":
                accept_at = None
            else:
                alpha = thresholds.alpha(policy, holder, gamma)
                hits = np.flatnonzero(prog >= alpha)
                accept_at = int(hits[0]) if hits.size else None
            if accept_at is not None:
                wait_slots = int(slots[accept_at])
                chosen = int(nodes[accept_at])
            else:
                # fall back to the best responder kept awake: at the last
                # wake-up when the count is known, at the full horizon when
                # it is only estimated
                best = int(np.argmax(prog))
                chosen = int(nodes[best])
                wait_slots = last_slot if policy in ("mf", "sf") else horizon_slots
            now += wait_slots * timing.t_beacon + timing.t_data
            holder = chosen
        hops += 1
        path.append(holder)
        if net.sink_dist[path[-2]] - net.sink_dist[path[-1]] <= 0.0:
            raise AssertionError("hop made no progress toward the sink")
    return now, hops, path


@dataclass(frozen=True)
class E2EOutcome:
    policy: str
    gamma: float
    mean_total_delay: float
    se_delay: float
    mean_hop_count: float
    se_hops: float
    transfers: int
    topology_seed: int


def _summarize(policy, gamma, delays, hops, net) -> E2EOutcome:
    n = delays.size
    return E2EOutcome(
        policy=policy,
        gamma=float(gamma),
        mean_total_delay=float(delays.mean()),
        se_delay=float(delays.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        mean_hop_count=float(hops.mean()),
        se_hops=float(hops.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        transfers=n,
        topology_seed=net.seed,
    )


def tradeoff_curve(net: NetworkInstance, timing: ProtocolTiming,
                   gammas, transfers: int, seed: int) -> list[E2EOutcome]:
    """Mean delay and hop count per (policy, gamma) over a fixed topology,
    averaging over wake phases redrawn per transfer; transfer seeds are
    shared across policies and gammas for paired comparisons.

    ff and mf ignore gamma and contribute one row each.
    """
    if transfers < 1:
        raise ValueError("transfers must be >= 1")
    gammas = [float(g) for g in gammas]
    thresholds = _HopThresholds(net)
    rows: list[E2EOutcome] = []
    jobs = [("ff", 0.0), ("mf", 0.0)]
    jobs += [(p, g) for g in gammas for p in ("sf", "sf-hat")]
    for policy, gamma in jobs:
        delays = np.empty(transfers)
        hops = np.empty(transfers)
        for t in range(transfers):
            d, h, _ = run_transfer(net, timing, policy, gamma,
                                   seed=seed * 1_000_003 + t,
                                   thresholds=thresholds)
            delays[t] = d
            hops[t] = h
        rows.append(_summarize(policy, gamma, delays, hops, net))
    return rows


def write_e2e_csv(rows: list[E2EOutcome], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(E2E_CSV_FIELDS)
        for r in rows:
            writer.writerow([
                r.policy, repr(r.gamma), repr(r.mean_total_delay),
                repr(r.se_delay), repr(r.mean_hop_count), repr(r.se_hops),
                r.transfers, r.topology_seed,
            ])
