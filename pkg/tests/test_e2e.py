"""Tests for the end-to-end multihop simulator."""

import math

import numpy as np
import pytest

from relaywake.e2e import (
    E2EOutcome,
    NetworkInstance,
    ProtocolTiming,
    generate_network,
    run_transfer,
    tradeoff_curve,
    write_e2e_csv,
)

TIMING = ProtocolTiming(t_beacon=0.005, t_data=0.030)


@pytest.fixture(scope="module")
def net():
    return generate_network(L=6.0, density=5.0, r_c=1.0, seed=2024)


class TestNetworkGeneration:
    def test_every_node_has_forwarders(self, net):
        for i in range(net.positions.shape[0] - 1):
            assert net.fwd_sets[i].size > 0
            # members are in range and strictly closer to the sink
            for j in net.fwd_sets[i]:
                gap = np.hypot(*(net.positions[i] - net.positions[j]))
                assert gap <= net.r_c + 1e-12
                assert net.sink_dist[j] < net.sink_dist[i]

    def test_endpoints(self, net):
        assert np.allclose(net.positions[0], [0.0, 0.0])
        assert np.allclose(net.positions[-1], [net.L, net.L])
        assert net.sink_dist[-1] == 0.0

    def test_deterministic(self):
        a = generate_network(L=5.0, density=5.0, r_c=1.0, seed=7)
        b = generate_network(L=5.0, density=5.0, r_c=1.0, seed=7)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.phases, b.phases)

    def test_single_hop_when_range_covers_square(self):
        net = generate_network(L=1.0, density=8.0, r_c=1.5, seed=3)
        delay, hops, path = run_transfer(net, TIMING, "ff", 0.0, seed=1)
        assert hops == 1 and path == [0, net.sink]

    def test_impossible_density_raises(self):
        with pytest.raises(RuntimeError):
            generate_network(L=30.0, density=0.002, r_c=1.0, seed=0,
                             max_attempts=20)


class TestRunTransfer:
    def test_reaches_sink_with_positive_progress(self, net):
        for policy, gamma in [("ff", 0.0), ("mf", 0.0), ("sf", 0.4), ("sf-hat", 0.4)]:
            delay, hops, path = run_transfer(net, TIMING, policy, gamma, seed=5)
            assert path[0] == 0 and path[-1] == net.sink
            assert hops == len(path) - 1
            d = net.sink_dist[path]
            assert np.all(np.diff(d) < 0)
            assert hops >= math.ceil(net.sink_dist[0] / net.r_c)
            assert delay > 0

    def test_slotted_delay_structure(self, net):
        # total delay decomposes into whole beacon slots plus one data slot
        # per hop
        delay, hops, _ = run_transfer(net, TIMING, "ff", 0.0, seed=11)
        residue = delay - hops * TIMING.t_data
        slots = residue / TIMING.t_beacon
        assert slots == pytest.approx(round(slots), abs=1e-6)

    def test_ff_hop_wait_bounded_by_cycle(self, net):
        delay, hops, _ = run_transfer(net, TIMING, "ff", 0.0, seed=13)
        assert delay <= hops * (net.T + TIMING.t_data) + 1e-9

    def test_sf_zero_gamma_equals_ff(self, net):
        for s in range(30):
            a = run_transfer(net, TIMING, "ff", 0.0, seed=s)
            b = run_transfer(net, TIMING, "sf", 0.0, seed=s)
            assert a == b

    def test_mf_beats_ff_on_hops_paired(self, net):
        diffs = []
        for s in range(500):
            _, h_ff, _ = run_transfer(net, TIMING, "ff", 0.0, seed=s)
            _, h_mf, _ = run_transfer(net, TIMING, "mf", 0.0, seed=s)
            diffs.append(h_ff - h_mf)
        assert np.mean(diffs) > 0

    def test_deterministic(self, net):
        a = run_transfer(net, TIMING, "sf-hat", 0.5, seed=123)
        b = run_transfer(net, TIMING, "sf-hat", 0.5, seed=123)
        assert a == b

    def test_rejects_bad_inputs(self, net):
        with pytest.raises(ValueError):
            run_transfer(net, TIMING, "nope", 0.0, seed=1)
        with pytest.raises(ValueError):
            run_transfer(net, TIMING, "sf", 5.0, seed=1)


@pytest.fixture(scope="module")
def curve_rows(net):
    return tradeoff_curve(net, TIMING, gammas=[0.2, 0.5, 0.8],
                          transfers=400, seed=31)


class TestTradeoffCurve:
    @pytest.fixture
    def rows(self, curve_rows):
        return curve_rows

    def test_row_inventory(self, rows):
        kinds = [(r.policy, r.gamma) for r in rows]
        assert ("ff", 0.0) in kinds and ("mf", 0.0) in kinds
        assert sum(1 for p, _ in kinds if p == "sf") == 3
        assert sum(1 for p, _ in kinds if p == "sf-hat") == 3

    def test_monotone_tradeoff_for_sf(self, rows):
        sf = sorted((r for r in rows if r.policy == "sf"), key=lambda r: r.gamma)
        for lo, hi in zip(sf[:-1], sf[1:]):
            assert hi.mean_hop_count <= lo.mean_hop_count + 2 * np.hypot(lo.se_hops, hi.se_hops)
            assert hi.mean_total_delay >= lo.mean_total_delay - 2 * np.hypot(lo.se_delay, hi.se_delay)

    def test_ff_mf_bracket_sf(self, rows):
        ff = next(r for r in rows if r.policy == "ff")
        mf = next(r for r in rows if r.policy == "mf")
        for r in rows:
            if r.policy in ("sf", "sf-hat"):
                assert ff.mean_total_delay <= r.mean_total_delay + 1e-9
                assert mf.mean_hop_count <= r.mean_hop_count + 2 * np.hypot(mf.se_hops, r.se_hops)

    def test_geometric_hop_floor(self, rows, net):
        floor = math.ceil(net.sink_dist[0] / net.r_c)
        for r in rows:
            assert r.mean_hop_count >= floor

    def test_csv_output(self, rows, tmp_path):
        path = str(tmp_path / "curve.csv")
        write_e2e_csv(rows, path)
        with open(path) as fh:
            header = fh.readline().strip()
            n_lines = sum(1 for _ in fh)
        assert header == ("policy,gamma,mean_total_delay,se_delay,"
                          "mean_hop_count,se_hops,transfers,topology_seed")
        assert n_lines == len(rows)
