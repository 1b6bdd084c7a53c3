"""Inner and outer bounds on the optimum stopping set, plus a brute-force
exact solver for tiny relay bounds (K <= 3) used as an oracle.

At stage k the optimum stopping set is a convex subset of the belief simplex
on {k,...,K}.  The bound geometry lives on the edges leaving the all-seen
corner: with edge thresholds delta_l, the inner bound is the hull
{p : sum_l p(k+l)/delta_l <= 1} and the outer bound is the slab
{p : p(k) >= 1 - max_l delta_l}.
"""

from __future__ import annotations

import numpy as np

from .belief import BeliefState
from .model import RewardDistribution, WakeModel
from .thresholds import reward_quadrature_weights

__all__ = [
    "inner_hull_sum",
    "in_inner_bound",
    "in_outer_bound",
    "ExactOracle",
    "solve_exact_oracle",
]


def inner_hull_sum(tail_mass: np.ndarray, edges: np.ndarray) -> float:
    """sum_l p(k+l)/delta_l; +inf edges (stop along the whole edge)
    contribute nothing."""
    tail_mass = np.asarray(tail_mass, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if tail_mass.shape != edges.shape:
        raise ValueError("tail mass and edge thresholds must align")
    finite = np.isfinite(edges)
    return float((tail_mass[finite] / edges[finite]).sum())


def in_inner_bound(p: BeliefState, edges: np.ndarray) -> bool:
    """Membership in the inner bound (hull of the all-seen corner and the
    per-edge thresholds); boundary points count as members."""
    return inner_hull_sum(p.tail(), edges) <= 1.0


def in_outer_bound(p: BeliefState, edges: np.ndarray) -> bool:
    """Membership in the outer bound: enough mass on the all-seen corner.
    An edge threshold at or above one swallows the whole simplex."""
    edges = np.asarray(edges, dtype=float)
    if edges.size != p.K - p.stage:
        raise ValueError("edge thresholds must have length K - stage")
    d_max = edges.max()
    if not np.isfinite(d_max) or d_max >= 1.0:
        return True
    return float(p.mass[0]) >= 1.0 - d_max


def _reward_combine(vals: np.ndarray, wr: np.ndarray, csum: np.ndarray) -> np.ndarray:
    """E_r[vals[..., max(j, q)]] along the last axis for every index j."""
    gw = vals * wr
    suffix = np.zeros(vals.shape[:-1] + (vals.shape[-1] + 1,))
    suffix[..., :-1] = np.cumsum(gw[..., ::-1], axis=-1)[..., ::-1]
    return vals * csum + suffix[..., 1:]


class ExactOracle:
    """Brute-force backward induction of the stopping problem on a belief
    mesh, independent of the threshold solver.  Query `stop1` for the exact
    stop/continue decision at stage-1 mesh beliefs, and `margin1` for the
    continue-minus-stop cost gap the decision is based on.
    """

    def __init__(self, K, eta, w_grid, b_grid, mesh, c1, stage2=None):
        self.K = K
        self.eta = eta
        self.w_grid = w_grid
        self.b_grid = b_grid
        self.mesh = mesh          # (n_mesh, K): stage-1 beliefs over counts 1..K
        self.c1 = c1              # (n_mesh, nw, nb): continuing cost at stage 1
        stop_cost = -eta * b_grid[None, None, :]
        self.J1 = np.minimum(stop_cost, c1)
        self.stop1 = stop_cost <= c1
        if stage2 is not None:
            self.q_mesh, self.c2 = stage2
            self.J2 = np.minimum(stop_cost, self.c2)
            self.stop2 = stop_cost <= self.c2

    def margin1(self, i_mesh, i_w, i_b) -> float:
        """c1 - (-eta b): nonnegative exactly when stopping is optimal."""
        return float(
            self.c1[i_mesh, i_w, i_b] + self.eta * self.b_grid[i_b]
        )


def solve_exact_oracle(K: int, dist: RewardDistribution, model: WakeModel,
                       eta: float, w_points: int = 21, b_points: int = 21,
                       mesh_points: int = 51) -> ExactOracle:
    """Direct evaluation of the stage costs and cost-to-go on a belief mesh.

    Refuses K > 3: the mesh over higher-dimensional simplices blows up, and
    the oracle only exists to cross-check small cases.
    """
    if K > 3:
        raise ValueError("exact oracle is limited to K <= 3")
    if K < 2:
        raise ValueError("nothing to decide with K < 2")
    if mesh_points > 51 or mesh_points < 3:
        raise ValueError("mesh_points must lie in [3, 51]")
    T = model.T
    w_grid = np.linspace(0.0, T, w_points)
    b_grid = np.linspace(0.0, dist.support, b_points)
    wr = reward_quadrature_weights(dist, b_grid)
    csum = np.cumsum(wr)
    nu = w_points
    s = np.linspace(0.0, 1.0, nu)
    tw = np.ones(nu)
    tw[0] = tw[-1] = 0.5
    wu_one = tw / tw.sum()                      # one relay remaining: uniform wait
    wu_two = tw * 2.0 * (1.0 - s)
    wu_two = wu_two / wu_two.sum()              # two remaining: density prop. to 1-s

    remain = T - w_grid                          # (nw,)
    stop_like = T - w_grid[:, None] - eta * b_grid[None, :]   # T - w - eta b

    # mean reward of the running max after one more draw, per (w-independent) b
    emax = _reward_combine(b_grid.copy(), wr, csum)           # (nb,)
    mean_wait_one = remain * float(wu_one @ s)                # (nw,)
    # value of continuing with exactly one relay left and stopping after it
    last_leg = mean_wait_one[:, None] - eta * emax[None, :]   # (nw, nb)

    if K == 2:
        q = np.linspace(0.0, 1.0, mesh_points)
        mesh = np.stack([1.0 - q, q], axis=1)
        c1 = (
            mesh[:, 0][:, None, None] * stop_like[None, :, :]
            + mesh[:, 1][:, None, None] * last_leg[None, :, :]
        )
        return ExactOracle(K, eta, w_grid, b_grid, mesh, c1)

    # K == 3
    q = np.linspace(0.0, 1.0, mesh_points)
    c2 = (
        (1.0 - q)[:, None, None] * stop_like[None, :, :]
        + q[:, None, None] * last_leg[None, :, :]
    )
    J2 = np.minimum(-eta * b_grid[None, None, :], c2)         # (mq, nw, nb)

    # stage-1 mesh: lattice over (p2, p3) with p1 the remainder
    steps = mesh_points - 1
    pairs = [
        (i / steps, j / steps)
        for i in range(mesh_points)
        for j in range(mesh_points - i)
    ]
    p2 = np.array([a for a, _ in pairs])
    p3 = np.array([b for _, b in pairs])
    mesh = np.stack([1.0 - p2 - p3, p2, p3], axis=1)
    n_mesh = mesh.shape[0]

    # posterior weight on three-left after seeing the second wake at fraction
    # s of the remaining time: likelihood ratio f(.|n=3)/f(.|n=2) = 2(1-s)
    ratio = 2.0 * (1.0 - s)
    with np.errstate(invalid="ignore", divide="ignore"):
        q3_post = p3[None, :] * ratio[:, None] / (
            p2[None, :] + p3[None, :] * ratio[:, None]
        )                                                     # (nu, n_mesh)
    q3_post = np.nan_to_num(q3_post, nan=0.0)

    dw = w_grid[1] - w_grid[0]
    acc2 = np.zeros((n_mesh, w_points, b_points))
    acc3 = np.zeros_like(acc2)
    for iw in range(w_points):
        u_here = remain[iw] * s
        x = w_grid[iw] + u_here
        f = np.clip(x / dw, 0.0, w_points - 1.0)
        i0 = np.minimum(f.astype(int), w_points - 2)
        aw = f - i0
        for iu in range(nu):
            j2w = J2[:, i0[iu], :] * (1.0 - aw[iu]) + J2[:, i0[iu] + 1, :] * aw[iu]
            qp = q3_post[iu]                                  # (n_mesh,)
            fq = np.clip(qp * steps, 0.0, steps)
            iq = np.minimum(fq.astype(int), mesh_points - 2)
            aq = fq - iq
            v = j2w[iq, :] * (1.0 - aq)[:, None] + j2w[iq + 1, :] * aq[:, None]
            future = _reward_combine(v, wr, csum)             # (n_mesh, nb)
            acc2[:, iw, :] += wu_one[iu] * (u_here[iu] + future)
            acc3[:, iw, :] += wu_two[iu] * (u_here[iu] + future)

    c1 = (
        mesh[:, 0][:, None, None] * stop_like[None, :, :]
        + mesh[:, 1][:, None, None] * acc2
        + mesh[:, 2][:, None, None] * acc3
    )
    return ExactOracle(K, eta, w_grid, b_grid, mesh, c1, stage2=(q, c2))
