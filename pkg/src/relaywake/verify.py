"""Self-contained property suites behind the `verify` subcommand.

Each check re-derives an internal guarantee from scratch (random draws,
independent oracles, brute-force recursions) and reports a pass/fail count;
none of them needs external reference numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import BeliefState, belief_update, simplex_corner
from .bounds import in_inner_bound, in_outer_bound, solve_exact_oracle
from .model import (
    ProgressReward,
    TruncatedGaussianReward,
    UniformReward,
    WakeModel,
    order_stat_cond_pdf,
    scenario_preset,
)
from .simplified import SimplifiedSpec, solve_alpha, stage_value_maps
from .thresholds import SolverGrid, load_or_solve

__all__ = ["CheckResult", "run_all", "CHECKS"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    checked: int
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{mark}] {self.name}: {self.checked} checks{extra}"


def check_threshold_lower_bound(cache_dir=None, backend=None) -> CheckResult:
    """(a) -eta*phi_l(w,b) <= T - w - eta*b at every grid node for the
    production preset, across the eta range."""
    dist, belief, T = scenario_preset("progress10")
    model = WakeModel(T)
    grid = SolverGrid(100, 100)
    worst = np.inf
    count = 0
    for eta in (0.1, 1.0, 10.0, 1000.0):
        tg, _ = load_or_solve(cache_dir, grid, dist, model, eta, belief.K, backend)
        w = tg.w_grid[:, None]
        b = tg.b_grid[None, :]
        slack = tg.tables[1:] - (b - (T - w) / eta)[None, :, :]
        worst = min(worst, float(slack.min()))
        count += slack.size
    return CheckResult("threshold lower bound", worst >= -1e-12, count,
                       f"min slack {worst:.2e}")


def check_inner_implies_outer(samples=10_000, seed=0) -> CheckResult:
    """(b) inner membership implies outer membership on random beliefs and
    edge thresholds."""
    rng = np.random.default_rng(seed)
    bad = 0
    members = 0
    for _ in range(samples):
        m = int(rng.integers(1, 12))
        mass = rng.dirichlet(np.ones(m + 1))
        edges = rng.uniform(0.02, 2.5, size=m)
        edges[rng.random(m) < 0.05] = np.inf
        p = BeliefState(stage=1, mass=mass, K=m + 1)
        if in_inner_bound(p, edges):
            members += 1
            if not in_outer_bound(p, edges):
                bad += 1
    return CheckResult("inner implies outer", bad == 0, samples,
                       f"{members} inner members, {bad} violations")


def check_inner_convexity(samples=10_000, seed=1) -> CheckResult:
    """(c) convex combinations of inner members stay inside."""
    rng = np.random.default_rng(seed)
    bad = 0
    done = 0
    while done < samples:
        m = int(rng.integers(1, 12))
        edges = rng.uniform(0.05, 2.5, size=m)
        a = rng.dirichlet(np.ones(m + 1))
        b = rng.dirichlet(np.ones(m + 1))
        pa = BeliefState(stage=1, mass=a, K=m + 1)
        pb = BeliefState(stage=1, mass=b, K=m + 1)
        if in_inner_bound(pa, edges) and in_inner_bound(pb, edges):
            lam = float(rng.random())
            mix = BeliefState(stage=1, mass=lam * a + (1 - lam) * b, K=m + 1)
            bad += not in_inner_bound(mix, edges)
            done += 1
    return CheckResult("inner membership convex", bad == 0, samples,
                       f"{bad} violations")


def check_known_count_oracle(cache_dir=None, backend=None) -> CheckResult:
    """(d) the K=2 brute-force cost-to-go equals min{-eta b, -eta phi_1}
    within the grid-interpolation tolerance 1e-3*eta*r_max."""
    dist = UniformReward(1.0)
    model = WakeModel(1.0)
    worst_rel = 0.0
    count = 0
    for eta in (1.0, 5.0):
        tg, _ = load_or_solve(cache_dir, SolverGrid(100, 100), dist, model,
                              eta, 2, backend)
        oracle = solve_exact_oracle(2, dist, model, eta, w_points=20,
                                    b_points=20, mesh_points=11)
        i_pt = int(np.argmax(oracle.mesh[:, 1]))
        tol = 1e-3 * eta * dist.support
        for iw in range(oracle.w_grid.size - 1):
            for ib in range(oracle.b_grid.size):
                w, b = oracle.w_grid[iw], oracle.b_grid[ib]
                expect = min(-eta * b, -eta * tg.value(1, w, b))
                err = abs(oracle.J1[i_pt, iw, ib] - expect)
                worst_rel = max(worst_rel, err / tol)
                count += 1
    return CheckResult("known-count oracle (K=2)", worst_rel <= 1.0, count,
                       f"worst error {worst_rel:.2f}x tolerance")


def check_oracle_nesting(cache_dir=None, backend=None) -> CheckResult:
    """(e) on the K=3 oracle mesh: inner members stop, decisive stops lie in
    the outer bound (undecided band: 1e-3*eta*r_max around the boundary)."""
    dist = UniformReward(1.0)
    model = WakeModel(1.0)
    eta = 1.0
    tg, _ = load_or_solve(cache_dir, SolverGrid(100, 100), dist, model, eta,
                          3, backend)
    oracle = solve_exact_oracle(3, dist, model, eta, w_points=21, b_points=21,
                                mesh_points=51)
    tol = 1e-3 * eta * dist.support
    bad = 0
    count = 0
    for iw in range(oracle.w_grid.size - 1):
        w = oracle.w_grid[iw]
        for ib in range(oracle.b_grid.size):
            b = oracle.b_grid[ib]
            edges = tg.edge_thresholds(1, w, b)
            margins = oracle.c1[:, iw, ib] + eta * b
            for im in range(oracle.mesh.shape[0]):
                p = BeliefState(stage=1, mass=oracle.mesh[im], K=3)
                inner = in_inner_bound(p, edges)
                if inner and margins[im] < -tol:
                    bad += 1
                if margins[im] >= tol and not in_outer_bound(p, edges):
                    bad += 1
                count += 1
    return CheckResult("oracle nesting (K=3)", bad == 0, count,
                       f"{bad} violations")


def check_stage_value_ordering() -> CheckResult:
    """(f) stage value maps increase with relays to go and collapse onto the
    one-step map above alpha."""
    bad = 0
    count = 0
    for dist in (UniformReward(1.0), ProgressReward(10.0, 1.0)):
        spec = SimplifiedSpec(10, 1.0, 1.0, dist)
        alpha = solve_alpha(spec)
        grid, maps = stage_value_maps(spec, levels=6)
        above = grid >= alpha + 1e-9
        for lo, hi in zip(maps[:-1], maps[1:]):
            bad += int(np.any(hi < lo - 1e-12))
            bad += int(not np.allclose(hi[above], maps[0][above], atol=1e-12))
            count += lo.size
    return CheckResult("stage value ordering", bad == 0, count,
                       f"{bad} violations")


def check_density_normalization() -> CheckResult:
    """(g) every preset reward density integrates to one within 1e-6, and
    conditional wake densities normalize."""
    from scipy import integrate

    worst = 0.0
    count = 0
    presets = ["progress10", "example1", "example2", "example3", "example4"]
    for name in presets:
        dist, _, _ = scenario_preset(name)
        if dist.kind in ("uniform", "progress-geometric", "truncated-gaussian"):
            mass, _ = integrate.quad(
                lambda r: float(dist.pdf(np.array([r]))[0]), 0, dist.support,
                limit=200,
            )
        else:
            g = np.linspace(0, dist.support, 200_001)
            mass = float(np.trapezoid(dist.pdf(g), g))
        worst = max(worst, abs(mass - 1.0))
        count += 1
    dist = TruncatedGaussianReward(0.5, 1.0)
    mass, _ = integrate.quad(lambda r: float(dist.pdf(np.array([r]))[0]), 0, 1)
    worst = max(worst, abs(mass - 1.0))
    count += 1
    model = WakeModel(1.0)
    rng = np.random.default_rng(3)
    for _ in range(25):
        w = float(rng.uniform(0, 0.9))
        n = int(rng.integers(1, 40))
        k = int(rng.integers(0, n))
        mass, _ = integrate.quad(
            lambda u: order_stat_cond_pdf(model, u, w, n, k),
            0, (model.T - w) * (1 - 1e-12), limit=200,
        )
        worst = max(worst, abs(mass - 1.0))
        count += 1
    return CheckResult("density normalization", worst <= 1e-6, count,
                       f"worst deviation {worst:.2e}")


def check_belief_updates(samples=1000, seed=4) -> CheckResult:
    """Posterior normalization and point-mass closure under the Bayes step."""
    rng = np.random.default_rng(seed)
    model = WakeModel(1.0)
    bad = 0
    for _ in range(samples):
        K = int(rng.integers(2, 30))
        k = int(rng.integers(1, K))
        mass = rng.dirichlet(np.ones(K - k + 1))
        p = BeliefState(stage=k, mass=mass, K=K)
        w = float(rng.uniform(0, 0.9))
        u = float(rng.uniform(1e-9, 1.0 - w) * 0.999)
        if p.mass[1:].sum() <= 0:
            continue
        q = belief_update(p, model, w, u)
        bad += abs(q.mass.sum() - 1.0) > 1e-12
    corner = simplex_corner(1, 5, 9)
    q = belief_update(corner, model, 0.1, 0.2)
    bad += q.prob(5) != 1.0
    return CheckResult("belief updates", bad == 0, samples + 1,
                       f"{bad} violations")


CHECKS = {
    "threshold-lower-bound": check_threshold_lower_bound,
    "inner-implies-outer": check_inner_implies_outer,
    "inner-convexity": check_inner_convexity,
    "known-count-oracle": check_known_count_oracle,
    "oracle-nesting": check_oracle_nesting,
    "stage-value-ordering": check_stage_value_ordering,
    "density-normalization": check_density_normalization,
    "belief-updates": check_belief_updates,
}


def run_all(cache_dir=None, backend=None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        if name in ("threshold-lower-bound", "known-count-oracle", "oracle-nesting"):
            results.append(fn(cache_dir=cache_dir, backend=backend))
        else:
            results.append(fn())
    return results
