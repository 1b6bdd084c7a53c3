"""Tests for the one-hop simulator: reference replay vs. kernels, sweep
invariants with common random numbers, and gamma matching."""

import numpy as np
import pytest

from relaywake import kernels
from relaywake.model import (
    InitialBelief,
    ProgressReward,
    UniformReward,
    WakeModel,
    sample_episode_batch,
)
from relaywake.onehop import (
    OneHopConfig,
    SimOutcome,
    match_gamma,
    read_outcomes_csv,
    replay_batch,
    run_episode,
    sweep,
    write_outcomes_csv,
)
from relaywake.policies import PolicySpec
from relaywake.simplified import SimplifiedSpec, solve_alpha
from relaywake.thresholds import SolverGrid, solve_thresholds

MODEL = WakeModel(1.0)
DIST = UniformReward(1.0)
BELIEF = InitialBelief.truncated_poisson(5.0, 12)


@pytest.fixture(scope="module")
def tg():
    return solve_thresholds(SolverGrid(80, 80), DIST, MODEL, eta=2.0, K=BELIEF.K)


@pytest.fixture(scope="module")
def batch():
    return sample_episode_batch(MODEL, DIST, BELIEF, master_seed=99, count=400)


def spec_for(kind, tg):
    n_bar = 6  # strict ceiling of the prior mean (~5.03)
    if kind in ("comdp", "inner", "outer"):
        return PolicySpec(kind, eta=tg.eta)
    if kind == "a-comdp":
        return PolicySpec(kind, eta=tg.eta, n_bar=n_bar)
    if kind == "a-simpl":
        alpha = solve_alpha(SimplifiedSpec(n_bar, MODEL.T, tg.eta, DIST))
        return PolicySpec(kind, alpha=alpha, n_bar=n_bar)
    return PolicySpec(kind)


ALL_KINDS = ("comdp", "inner", "outer", "a-comdp", "a-simpl", "ff", "mf")


class TestReplayAgreement:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_kernel_matches_reference(self, kind, tg, batch):
        # dual route: the readable belief-engine walk must agree with the
        # packed kernel replay on every episode
        spec = spec_for(kind, tg)
        use_tg = tg if kind in ("comdp", "inner", "outer", "a-comdp") else None
        delays, rewards = replay_batch(spec, batch, BELIEF, use_tg)
        for i in range(len(batch)):
            d_ref, r_ref = run_episode(MODEL, DIST, BELIEF, spec,
                                       batch.episode(i), use_tg)
            assert delays[i] == pytest.approx(d_ref, abs=1e-10), (kind, i)
            assert rewards[i] == pytest.approx(r_ref, abs=1e-10), (kind, i)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_backends_agree(self, kind, tg, batch):
        if kernels.BACKEND != "compiled":
            pytest.skip("compiled backend unavailable")
        spec = spec_for(kind, tg)
        use_tg = tg if kind in ("comdp", "inner", "outer", "a-comdp") else None
        d_c, r_c = replay_batch(spec, batch, BELIEF, use_tg, backend="compiled")
        d_p, r_p = replay_batch(spec, batch, BELIEF, use_tg, backend="python")
        assert np.allclose(d_c, d_p, atol=1e-12)
        assert np.allclose(r_c, r_p, atol=1e-12)


class TestEpisodeDefinitions:
    def test_ff_takes_first(self, tg, batch):
        d, r = replay_batch(PolicySpec("ff"), batch, BELIEF)
        first = batch.offsets[:-1]
        assert np.allclose(d, batch.wakes[first])
        assert np.allclose(r, batch.rewards[first])

    def test_mf_takes_last_and_best(self, tg, batch):
        d, r = replay_batch(PolicySpec("mf"), batch, BELIEF)
        for i in range(len(batch)):
            ep = batch.episode(i)
            assert d[i] == pytest.approx(ep.wake_times[-1])
            assert r[i] == pytest.approx(ep.rewards.max())

    def test_comdp_single_relay_stops_immediately(self, tg):
        one = InitialBelief.point_mass(1, BELIEF.K)
        b1 = sample_episode_batch(MODEL, DIST, one, master_seed=3, count=50)
        d, r = replay_batch(PolicySpec("comdp", eta=tg.eta), b1, one, tg)
        assert np.allclose(d, b1.wakes)
        assert np.allclose(r, b1.rewards)

    def test_pointwise_bounds(self, tg, batch):
        d_ff, _ = replay_batch(PolicySpec("ff"), batch, BELIEF)
        d_mf, r_mf = replay_batch(PolicySpec("mf"), batch, BELIEF)
        for kind in ("comdp", "inner", "outer", "a-comdp", "a-simpl"):
            spec = spec_for(kind, tg)
            use_tg = tg if kind != "a-simpl" else None
            d, r = replay_batch(spec, batch, BELIEF, use_tg)
            assert np.all(d > 0) and np.all(d <= MODEL.T + 1e-12)
            assert np.all(d_ff <= d + 1e-12)
            assert np.all(r <= r_mf + 1e-12)


@pytest.fixture(scope="module")
def small_sweep():
    cfg = OneHopConfig(
        model=MODEL, dist=ProgressReward(10.0, 1.0),
        belief=InitialBelief.truncated_poisson(5.0, 15),
        policies=("comdp", "a-simpl", "ff"),
        etas=np.array([0.5, 2.0, 8.0]),
        replications=4000, master_seed=11,
    )
    return sweep(cfg, grid=SolverGrid(60, 60))


class TestSweep:
    @pytest.fixture
    def result(self, small_sweep):
        return small_sweep

    def test_row_coverage(self, result):
        assert len(result.rows) == 9
        assert {r.policy for r in result.rows} == {"comdp", "a-simpl", "ff"}

    def test_ff_ignores_eta(self, result):
        ff = [r for r in result.rows if r.policy == "ff"]
        assert len({(r.mean_delay, r.mean_reward) for r in ff}) == 1

    def test_delay_monotone_in_eta(self, result):
        comdp = sorted((r for r in result.rows if r.policy == "comdp"),
                       key=lambda r: r.eta)
        for lo, hi in zip(comdp[:-1], comdp[1:]):
            slack = 2 * np.hypot(lo.se_delay, hi.se_delay)
            assert lo.mean_delay <= hi.mean_delay + slack

    def test_outcome_ranges(self, result):
        for r in result.rows:
            assert 0 <= r.mean_delay <= MODEL.T
            assert 0 <= r.mean_reward <= 1.0

    def test_deterministic(self):
        cfg = OneHopConfig(
            model=MODEL, dist=DIST, belief=BELIEF,
            policies=("ff", "mf"), etas=np.array([1.0]),
            replications=500, master_seed=42,
        )
        a = sweep(cfg)
        b = sweep(cfg)
        assert [r.mean_delay for r in a.rows] == [r.mean_delay for r in b.rows]

    def test_threads_do_not_change_results(self, tg, batch):
        cfg = OneHopConfig(
            model=MODEL, dist=DIST, belief=BELIEF,
            policies=("inner",), etas=np.array([2.0]),
            replications=600, master_seed=5,
        )
        one = sweep(cfg, grid=SolverGrid(40, 40), threads=1)
        four = sweep(cfg, grid=SolverGrid(40, 40), threads=4)
        assert one.rows[0] == four.rows[0]


class TestMatchGamma:
    def rows(self):
        mk = lambda eta, rew: SimOutcome("comdp", eta, 0.3, 0.001, rew, 0.001, 10, 1)
        return [mk(0.5, 0.79), mk(1.0, 0.8003), mk(2.0, 0.81)]

    def test_nearest(self):
        assert match_gamma(self.rows(), "comdp", 0.8).eta == 1.0

    def test_boundary(self):
        assert match_gamma(self.rows(), "comdp", 0.99).eta == 2.0

    def test_tie_prefers_smaller_eta(self):
        rows = self.rows() + [SimOutcome("comdp", 4.0, 0.3, 0.001, 0.7997, 0.001, 10, 1)]
        assert match_gamma(rows, "comdp", 0.8).eta == 1.0

    def test_missing_policy(self):
        with pytest.raises(ValueError):
            match_gamma(self.rows(), "inner", 0.8)


class TestCsvRoundtrip:
    def test_roundtrip(self, tmp_path):
        rows = [
            SimOutcome("ff", 0.1, 0.123456789012345, 0.001, 0.5, 0.002, 100, 7),
            SimOutcome("inner", 1000.0, 0.9, 0.0001, 0.82, 0.0003, 100, 7),
        ]
        path = str(tmp_path / "rows.csv")
        write_outcomes_csv(rows, path)
        assert read_outcomes_csv(path) == rows
        with open(path) as fh:
            assert fh.readline().strip() == (
                "policy,eta,mean_delay,se_delay,mean_reward,se_reward,"
                "replications,master_seed"
            )
