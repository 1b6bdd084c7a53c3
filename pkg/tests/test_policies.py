"""Tests for the policy layer: decision contracts per kind."""

import numpy as np
import pytest

from relaywake.belief import BeliefState, HopObservation
from relaywake.model import UniformReward, WakeModel
from relaywake.policies import (
    CONTINUE,
    STOP,
    DecisionContext,
    PolicySpec,
    assumed_count,
    decide,
    forced_terminal,
    strict_ceiling,
)
from relaywake.thresholds import SolverGrid, solve_thresholds

MODEL = WakeModel(1.0)


@pytest.fixture(scope="module")
def tg():
    return solve_thresholds(SolverGrid(60, 60), UniformReward(1.0), MODEL, eta=1.0, K=6)


def ctx(stage, w, b, belief=None, known_n=None):
    return DecisionContext(
        obs=HopObservation(stage=stage, w=w, b=b), belief=belief, known_n=known_n
    )


class TestSpecValidation:
    def test_strict_ceiling(self):
        assert strict_ceiling(10.0) == 11
        assert strict_ceiling(10.2) == 11
        assert assumed_count(10.0, 50) == 11
        assert assumed_count(10.0, 50, strict=False) == 10
        assert assumed_count(49.5, 50) == 50  # capped at the bound

    def test_missing_params_rejected(self):
        with pytest.raises(ValueError):
            PolicySpec("comdp")
        with pytest.raises(ValueError):
            PolicySpec("a-simpl")
        with pytest.raises(ValueError):
            PolicySpec("bogus")


class TestDecisions:
    def test_ff_always_stops(self):
        assert decide(PolicySpec("ff"), ctx(1, 0.1, 0.0)) == STOP

    def test_a_simpl_threshold(self):
        spec = PolicySpec("a-simpl", alpha=0.4, n_bar=5)
        assert decide(spec, ctx(2, 0.3, 0.5)) == STOP
        assert decide(spec, ctx(2, 0.3, 0.39)) == CONTINUE
        zero = PolicySpec("a-simpl", alpha=0.0, n_bar=5)
        assert decide(zero, ctx(1, 0.1, 0.0)) == STOP

    def test_mf_waits_for_last(self):
        spec = PolicySpec("mf")
        assert decide(spec, ctx(2, 0.4, 0.9, known_n=3)) == CONTINUE
        assert decide(spec, ctx(3, 0.6, 0.2, known_n=3)) == STOP

    def test_comdp_needs_count_and_tables(self, tg):
        spec = PolicySpec("comdp", eta=1.0)
        with pytest.raises(ValueError):
            decide(spec, ctx(1, 0.1, 0.5))
        with pytest.raises(ValueError):
            decide(spec, ctx(1, 0.1, 0.5, known_n=3), None)
        # at the last known relay the stage threshold is zero: always stop
        assert decide(spec, ctx(3, 0.5, 0.0, known_n=3), tg) == STOP

    def test_comdp_follows_tables(self, tg):
        spec = PolicySpec("comdp", eta=1.0)
        phi = tg.value(2, 0.3, 0.5)
        expect = STOP if 0.5 >= phi else CONTINUE
        assert decide(spec, ctx(1, 0.3, 0.5, known_n=3), tg) == expect

    def test_bound_policies_need_belief(self, tg):
        with pytest.raises(ValueError):
            decide(PolicySpec("inner", eta=1.0), ctx(1, 0.2, 0.2), tg)

    def test_inner_stop_implies_outer_stop(self, tg):
        rng = np.random.default_rng(7)
        k_inner = k_outer = 0
        for _ in range(10_000):
            k = int(rng.integers(1, 6))
            mass = rng.dirichlet(np.ones(6 - k + 1))
            bel = BeliefState(stage=k, mass=mass, K=6)
            w = float(rng.uniform(0, 0.99))
            b = float(rng.random())
            c = ctx(k, w, b, belief=bel)
            inner = decide(PolicySpec("inner", eta=1.0), c, tg)
            outer = decide(PolicySpec("outer", eta=1.0), c, tg)
            if inner == STOP:
                assert outer == STOP
                k_inner += 1
            k_outer += outer == STOP
        assert k_inner > 100 and k_outer >= k_inner

    def test_forced_terminal(self):
        assert forced_terminal(HopObservation(stage=4, w=1.0, b=0.3)) == STOP

    def test_stage_k_equals_big_k_stops(self, tg):
        bel = BeliefState(stage=6, mass=np.array([1.0]), K=6)
        assert decide(PolicySpec("inner", eta=1.0), ctx(6, 0.9, 0.1, belief=bel), tg) == STOP
