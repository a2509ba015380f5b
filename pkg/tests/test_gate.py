import numpy as np
import pytest

from seacache import (
    CacheGate,
    Decision,
    delta_for_target_ratio,
    gate_step,
    refresh_heatmap,
    simulate_gate,
    verify_accumulation_brackets,
)
from seacache.gate import trace_timesteps


class TestGateStep:
    def test_ties_reuse(self):
        # 0.25 sums are float-exact, so the tie at 0.75 is unambiguous
        gate = CacheGate(delta=0.75)
        decisions = [gate_step(gate, 0.25) for _ in range(4)]
        assert decisions == [Decision.REUSE, Decision.REUSE, Decision.REUSE, Decision.REFRESH]
        assert gate.accumulator == 0.0

    def test_float_accumulation_semantics(self):
        # 0.1 + 0.1 + 0.1 lands just above 0.3 in binary, so the third step
        # already crosses; the gate runs on accumulated doubles, not exact
        # rationals
        gate = CacheGate(delta=0.3)
        decisions = [gate_step(gate, 0.1) for _ in range(4)]
        assert decisions == [Decision.REUSE, Decision.REUSE, Decision.REFRESH, Decision.REUSE]

    def test_invalid_distance(self):
        gate = CacheGate(delta=1.0)
        with pytest.raises(ValueError):
            gate_step(gate, -0.1)
        with pytest.raises(ValueError):
            gate_step(gate, float("nan"))
        with pytest.raises(ValueError):
            gate_step(gate, float("inf"))

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            CacheGate(delta=0.0)

    def test_accumulator_bounded_between_refreshes(self):
        rng = np.random.default_rng(0)
        gate = CacheGate(delta=0.5)
        for d in rng.uniform(0, 0.3, size=200):
            decision = gate_step(gate, d)
            if decision is Decision.REUSE:
                assert gate.accumulator <= gate.delta
            else:
                assert gate.accumulator == 0.0


class TestSimulateGate:
    def test_all_zero_distances(self):
        trace = simulate_gate(np.zeros(11), delta=0.5, force_first=True)
        assert len(trace) == 12
        assert trace.decisions[0] is Decision.REFRESH
        assert trace.refresh_count == 1
        assert trace.refresh_ratio == 1 / 12

    def test_enumerated_third_step_pattern(self):
        # delta 0.3 with constant 0.1 distances: forced first refresh, then
        # one refresh every 3 transitions
        trace = simulate_gate(np.full(11, 0.1), delta=0.3, force_first=True)
        assert trace.refresh_count == 4
        assert list(trace.refresh_positions()) == [0, 3, 6, 9]
        assert trace.refresh_ratio == 4 / 12

    def test_huge_delta_keeps_only_forced_refresh(self):
        rng = np.random.default_rng(1)
        trace = simulate_gate(rng.uniform(0, 1, 49), delta=1e18, force_first=True)
        assert trace.refresh_count == 1

    def test_no_force_first(self):
        trace = simulate_gate([0.4, 0.4, 0.4], delta=0.5, force_first=False)
        assert len(trace) == 3
        assert [d is Decision.REFRESH for d in trace.decisions] == [False, True, False]

    def test_monotone_in_delta(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            d = rng.uniform(0, 0.4, size=40)
            grid = np.linspace(1e-6, d.sum(), 10)
            ratios = [simulate_gate(d, x).refresh_ratio for x in grid]
            assert all(a >= b for a, b in zip(ratios, ratios[1:]))

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        d = rng.uniform(0, 1, size=30)
        t1 = simulate_gate(d, 0.7)
        t2 = simulate_gate(d, 0.7)
        assert t1.decisions == t2.decisions
        assert t1.accumulator_after.tobytes() == t2.accumulator_after.tobytes()

    def test_bracketing_on_random_traces(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            d = rng.uniform(0, 0.3, size=30)
            delta = rng.uniform(0.05, 1.0)
            trace = simulate_gate(d, delta)
            verify_accumulation_brackets(d, delta, trace)


class TestDeltaForTargetRatio:
    def test_constant_series_exact_target(self):
        d = np.full(11, 0.1)
        res = delta_for_target_ratio(d, target_ratio=1 / 3)
        assert res.exact
        assert res.achieved_ratio == 4 / 12
        assert 0.2 < res.delta <= 0.3
        assert simulate_gate(d, res.delta).refresh_ratio == 4 / 12

    def test_target_one_needs_delta_below_min_distance(self):
        d = np.array([0.3, 0.1, 0.2, 0.4])
        res = delta_for_target_ratio(d, target_ratio=1.0)
        assert res.achieved_ratio == 1.0
        assert res.delta < d.min()

    def test_minimum_ratio(self):
        d = np.full(11, 0.1)
        res = delta_for_target_ratio(d, target_ratio=1 / 12)
        assert res.achieved_ratio == 1 / 12
        assert simulate_gate(d, res.delta).refresh_count == 1

    def test_unattainable_target_flags_inexact(self):
        # two widely separated distances admit few plateaus; aim between them
        d = np.array([1.0, 1.0, 1.0, 1.0])
        res = delta_for_target_ratio(d, target_ratio=0.77)
        assert not res.exact
        assert res.achieved_ratio == simulate_gate(d, res.delta).refresh_ratio

    def test_below_floor_rejected(self):
        with pytest.raises(ValueError):
            delta_for_target_ratio(np.full(4, 0.1), target_ratio=0.05)
        with pytest.raises(ValueError):
            delta_for_target_ratio(np.full(4, 0.1), target_ratio=0.0)

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            delta_for_target_ratio(np.array([]), target_ratio=0.5)

    def test_achieved_matches_resimulation(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            d = rng.uniform(0.01, 0.4, size=25)
            target = rng.uniform(1 / 26, 1.0)
            res = delta_for_target_ratio(d, target)
            assert simulate_gate(d, res.delta).refresh_ratio == res.achieved_ratio


def test_refresh_heatmap():
    t1 = simulate_gate([0.6, 0.0, 0.6], delta=0.5)
    t2 = simulate_gate([0.0, 0.0, 0.0], delta=0.5)
    heat = refresh_heatmap([t1, t2])
    assert heat.tolist() == [1.0, 0.5, 0.0, 0.5]


def test_trace_timesteps_with_and_without_series():
    from seacache import DistanceSeries, MetricKind

    d = DistanceSeries(values=np.array([0.1, 0.2]), kind=MetricKind.raw(), t=np.array([7, 6]))
    trace = simulate_gate(d, delta=0.5)
    assert trace_timesteps(trace, d).tolist() == [8, 7, 6]
    bare = simulate_gate(np.array([0.1, 0.2]), delta=0.5, force_first=False)
    assert trace_timesteps(bare).tolist() == [2, 1]
