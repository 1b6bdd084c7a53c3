"""Tests for the probability kernels: reward laws, priors, wake-time order
statistics, and episode sampling."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from relaywake.model import (
    CompositeProgressRateReward,
    InitialBelief,
    PenalizedProgressReward,
    ProgressReward,
    TabulatedReward,
    TruncatedGaussianReward,
    UniformReward,
    WakeModel,
    episode_rng,
    expected_next_wake,
    forwarding_area,
    order_stat_cond_pdf,
    sample_episode,
    sample_episode_batch,
    scenario_preset,
)


def _lens_rejection(d, r_c, n, seed):
    """Monte-Carlo oracle: uniform points in the disc of radius r_c around the
    sender at (0,0), accepted when closer than d to the sink at (d,0).
    Returns (acceptance fraction, progress samples of accepted points)."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-r_c, r_c, size=(n, 2))
    in_disc = (pts**2).sum(axis=1) <= r_c**2
    pts = pts[in_disc]
    d_sink = np.hypot(pts[:, 0] - d, pts[:, 1])
    accepted = d_sink < d
    frac = accepted.sum() / in_disc.sum()
    return frac, d - d_sink[accepted]


class TestForwardingArea:
    def test_matches_rejection_estimate(self):
        # oracle: pi r_c^2 times the acceptance fraction of the disc sampler
        frac, _ = _lens_rejection(10.0, 1.0, 4_000_000, seed=7)
        mc_area = math.pi * 1.0**2 * frac
        assert forwarding_area(10.0, 1.0) == pytest.approx(mc_area, rel=0.005)

    def test_degenerate_lens_vanishes(self):
        assert forwarding_area(10.0, 1e-6) < 1e-11

    def test_subset_of_disc(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            d = rng.uniform(0.5, 50.0)
            r_c = rng.uniform(0.01, 0.99) * d
            a = forwarding_area(d, r_c)
            assert 0.0 < a < math.pi * r_c**2

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            forwarding_area(1.0, 1.0)
        with pytest.raises(ValueError):
            forwarding_area(1.0, 2.0)


class TestProgressReward:
    def test_uniform_density_value(self):
        assert UniformReward(1.0).pdf(0.3) == pytest.approx(1.0)

    def test_support_edge_is_zero(self):
        dist = ProgressReward(10.0, 1.0)
        assert dist.pdf(1.0) == pytest.approx(0.0, abs=1e-12)

    def test_density_matches_rejection_histogram(self):
        # oracle: histogram of progress for uniform points in the lens,
        # compared bin-for-bin against the integrated density
        _, progress = _lens_rejection(10.0, 1.0, 6_000_000, seed=11)
        dist = ProgressReward(10.0, 1.0)
        hist, edges = np.histogram(progress, bins=20, range=(0.0, 1.0), density=True)
        bin_avg = np.diff(dist.cdf(edges)) / np.diff(edges)
        assert np.allclose(hist, bin_avg, rtol=0.02)
        # spot value at r=0.5 against the same oracle, bin centered at 0.5
        in_band = (progress >= 0.475) & (progress < 0.525)
        density_at_half = in_band.sum() / progress.size / 0.05
        assert dist.pdf(0.5) == pytest.approx(density_at_half, rel=0.02)

    def test_rejects_out_of_support(self):
        dist = ProgressReward(10.0, 1.0)
        with pytest.raises(ValueError):
            dist.pdf(1.5)


ALL_DISTS = [
    UniformReward(1.0),
    ProgressReward(10.0, 1.0),
    PenalizedProgressReward(10.0, 1.0),
    CompositeProgressRateReward(10.0, 1.0),
    TruncatedGaussianReward(0.5, 1.0),
    TabulatedReward(np.linspace(0, 1, 101), np.linspace(0, 2, 101)),
]


class TestDistributionContracts:
    @pytest.mark.parametrize("dist", ALL_DISTS, ids=lambda d: d.kind)
    def test_pdf_normalizes(self, dist):
        if dist.kind in ("uniform", "progress-geometric", "truncated-gaussian"):
            mass, _ = integrate.quad(
                lambda r: float(dist.pdf(np.array([r]))[0]), 0.0, dist.support,
                limit=200,
            )
        else:
            g = np.linspace(0.0, dist.support, 200_001)
            mass = np.trapezoid(dist.pdf(g), g)
        assert mass == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("dist", ALL_DISTS, ids=lambda d: d.kind)
    def test_cdf_shape(self, dist):
        g = np.linspace(0.0, dist.support, 2001)
        c = dist.cdf(g)
        assert c[0] == pytest.approx(0.0, abs=1e-9)
        assert c[-1] == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.diff(c) >= -1e-12)

    @pytest.mark.parametrize("dist", ALL_DISTS, ids=lambda d: d.kind)
    def test_samples_match_cdf(self, dist):
        rng = np.random.default_rng(5)
        draws = dist.sample(rng, 100_000)
        assert np.all(draws >= 0.0) and np.all(draws <= dist.support + 1e-12)
        grid = np.sort(draws)
        emp = np.arange(1, draws.size + 1) / draws.size
        ks = np.max(np.abs(emp - dist.cdf(grid)))
        assert ks < 0.01


class TestInitialBelief:
    def test_truncated_poisson_excludes_zero(self):
        bel = InitialBelief.truncated_poisson(10.0, 50)
        assert bel.pmf.size == 50
        assert bel.pmf.sum() == pytest.approx(1.0, abs=1e-12)
        # renormalizing away the n=0 atom pushes the mean just above 10
        assert bel.mean() == pytest.approx(10.0 / (1 - math.exp(-10)), abs=1e-4)

    def test_binomial_mean(self):
        bel = InitialBelief.truncated_binomial(0.5, 20)
        assert bel.mean() == pytest.approx(10.0 / (1 - 0.5**20), abs=1e-9)

    def test_point_mass(self):
        bel = InitialBelief.point_mass(7, 10)
        assert bel.pmf[6] == 1.0
        rng = np.random.default_rng(0)
        assert set(bel.sample(rng, 100)) == {7}

    def test_sampling_distribution(self):
        bel = InitialBelief.truncated_poisson(10.0, 50)
        rng = np.random.default_rng(1)
        draws = bel.sample(rng, 200_000)
        freq = np.bincount(draws, minlength=51)[1:] / draws.size
        assert np.abs(freq - bel.pmf).max() < 0.004


class TestOrderStatistics:
    def test_single_relay_is_uniform(self):
        m = WakeModel(T=1.0)
        assert order_stat_cond_pdf(m, 0.1, 0.5, 3, 2) == pytest.approx(2.0)

    def test_hand_value(self):
        # (n-k)(T-w-u)^(n-k-1)/(T-w)^(n-k) = 2 * 0.75 / 1 = 1.5
        m = WakeModel(T=1.0)
        assert order_stat_cond_pdf(m, 0.25, 0.0, 2, 0) == pytest.approx(1.5)

    def test_normalizes(self):
        m = WakeModel(T=1.0)
        rng = np.random.default_rng(2)
        for _ in range(20):
            w = rng.uniform(0, 0.9)
            n = rng.integers(1, 30)
            k = rng.integers(0, n)
            mass, _ = integrate.quad(
                lambda u: order_stat_cond_pdf(m, u, w, n, k), 0, (1 - w) * (1 - 1e-12)
            )
            assert mass == pytest.approx(1.0, abs=1e-7)

    def test_depends_only_on_gap_and_remaining_time(self):
        m = WakeModel(T=1.0)
        a = order_stat_cond_pdf(m, 0.2, 0.3, 9, 4)
        b = order_stat_cond_pdf(m, 0.2, 0.3, 25, 20)
        assert a == pytest.approx(b)

    def test_domain_errors(self):
        m = WakeModel(T=1.0)
        with pytest.raises(ValueError):
            order_stat_cond_pdf(m, 0.1, 1.0, 3, 1)
        with pytest.raises(ValueError):
            order_stat_cond_pdf(m, 0.8, 0.5, 3, 1)

    def test_expected_next_wake(self):
        m = WakeModel(T=1.0)
        assert expected_next_wake(m, 0.0, 1, 0) == pytest.approx(0.5)
        assert expected_next_wake(m, 0.2, 5, 1) == pytest.approx(0.16)
        # residual wait convention once every relay has been seen
        assert expected_next_wake(m, 0.3, 4, 4) == pytest.approx(0.7)


class TestEpisodeSampling:
    def test_deterministic_per_seed(self):
        m, dist = WakeModel(1.0), UniformReward(1.0)
        bel = InitialBelief.truncated_poisson(10.0, 50)
        a = sample_episode(m, dist, bel, seed=42, index=3)
        b = sample_episode(m, dist, bel, seed=42, index=3)
        assert a.count == b.count
        assert np.array_equal(a.wake_times, b.wake_times)
        assert np.array_equal(a.rewards, b.rewards)
        c = sample_episode(m, dist, bel, seed=42, index=4)
        assert a.count != c.count or not np.array_equal(a.wake_times, c.wake_times)

    def test_support_bounds(self):
        m, dist = WakeModel(2.0), ProgressReward(10.0, 1.0)
        bel = InitialBelief.truncated_poisson(8.0, 30)
        for i in range(200):
            ep = sample_episode(m, dist, bel, seed=9, index=i)
            assert ep.count == ep.wake_times.size == ep.rewards.size
            assert np.all(ep.wake_times > 0) and np.all(ep.wake_times < 2.0)
            assert np.all(np.diff(ep.wake_times) > 0)
            assert np.all((ep.rewards >= 0) & (ep.rewards <= 1.0))

    def test_first_wake_mean_for_fixed_count(self):
        # order-statistics oracle: E[W_1 | N=n] = T/(n+1)
        n = 4
        m, dist = WakeModel(1.0), UniformReward(1.0)
        bel = InitialBelief.point_mass(n, 10)
        batch = sample_episode_batch(m, dist, bel, master_seed=5, count=100_000)
        first = batch.wakes[batch.offsets[:-1]]
        se = first.std() / math.sqrt(first.size)
        assert abs(first.mean() - 1.0 / (n + 1)) < 3 * se

    def test_order_statistic_density_chi2(self):
        # k-th order statistic of n uniforms: chi-square against the closed form
        n, k, T = 4, 2, 1.0
        m, dist = WakeModel(T), UniformReward(1.0)
        bel = InitialBelief.point_mass(n, 8)
        batch = sample_episode_batch(m, dist, bel, master_seed=17, count=40_000)
        kth = batch.wakes[batch.offsets[:-1] + (k - 1)]
        edges = np.linspace(0, T, 21)
        observed, _ = np.histogram(kth, bins=edges)

        def pdf(u):
            c = math.factorial(n) / (math.factorial(k - 1) * math.factorial(n - k))
            return c * u ** (k - 1) * (T - u) ** (n - k) / T**n

        expected = np.array([
            integrate.quad(pdf, lo, hi)[0] for lo, hi in zip(edges[:-1], edges[1:])
        ]) * kth.size
        _, p_value = stats.chisquare(observed, expected)
        assert p_value > 0.001

    def test_batch_matches_single(self):
        m, dist = WakeModel(1.0), UniformReward(1.0)
        bel = InitialBelief.truncated_poisson(6.0, 20)
        batch = sample_episode_batch(m, dist, bel, master_seed=123, count=50)
        for i in (0, 7, 49):
            single = sample_episode(m, dist, bel, seed=123, index=i)
            packed = batch.episode(i)
            assert packed.count == single.count
            assert np.array_equal(packed.wake_times, single.wake_times)


class TestPresets:
    @pytest.mark.parametrize(
        "name", ["progress10", "example1", "example2", "example3", "example4",
                 "uniform01", "truncnorm(0.5,1)"]
    )
    def test_presets_build(self, name):
        dist, belief, T = scenario_preset(name)
        assert T == 1.0
        assert belief.pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert dist.support <= 1.0 + 1e-12

    def test_progress10_shape(self):
        dist, belief, _ = scenario_preset("progress10")
        assert belief.K == 50
        assert belief.kind == "truncated-poisson"
        assert dist.kind == "progress-geometric"

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            scenario_preset("nope")

    def test_rng_streams_are_independent(self):
        a = episode_rng(1, 0).random(4)
        b = episode_rng(1, 1).random(4)
        assert not np.allclose(a, b)
