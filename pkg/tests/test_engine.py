"""Event queue ordering, cancellation, channel pool, PRNG, and workloads."""

import math

import pytest

from prepaidsim.engine import (
    ChannelPool,
    EmptyAccountUniverse,
    EventQueue,
    NoChannelAvailable,
    RandomWorkload,
    SchedulingInPast,
    SEED_ZERO_REMAP,
    ScriptedCall,
    WorkloadMode,
    WorkloadSpec,
    Xorshift64Star,
    generate_workload,
)


class TestEventQueue:
    def test_event_at_current_clock_precedes_later_events(self):
        q = EventQueue()
        q.run_until(10)
        order = []
        q.schedule(11, lambda: order.append("later"))
        q.schedule(10, lambda: order.append("now"))
        q.run_until(20)
        assert order == ["now", "later"]

    def test_same_fire_time_delivers_in_schedule_order(self):
        q = EventQueue()
        order = []
        for tag in ("a", "b", "c"):
            q.schedule(5, lambda t=tag: order.append(t))
        q.run_until(5)
        assert order == ["a", "b", "c"]

    def test_scheduling_in_past_raises(self):
        q = EventQueue()
        q.run_until(10)
        with pytest.raises(SchedulingInPast):
            q.schedule(5, lambda: None)

    def test_empty_queue_advances_clock(self):
        q = EventQueue()
        assert q.run_until(100) == 0
        assert q.clock == 100

    def test_run_until_stops_at_end_time(self):
        q = EventQueue()
        for t in (1, 2, 3):
            q.schedule(t, lambda: None)
        assert q.run_until(2) == 2
        assert q.run_until(3) == 1

    def test_cascading_schedule_counts_both_events(self):
        q = EventQueue()
        fired = []

        def first():
            fired.append(1)
            q.schedule(2, lambda: fired.append(2))

        q.schedule(1, first)
        assert q.run_until(5) == 2
        assert fired == [1, 2]

    def test_cancelled_timer_never_fires(self):
        q = EventQueue()
        fired = []
        handle = q.schedule(5, lambda: fired.append("no"))
        q.schedule(3, lambda: fired.append("yes"))
        handle.cancel()
        assert q.run_until(10) == 1
        assert fired == ["yes"]


class TestChannelPool:
    def test_capacity_enforced(self):
        pool = ChannelPool(2)
        pool.allocate()
        pool.allocate()
        with pytest.raises(NoChannelAvailable):
            pool.allocate()

    def test_release_returns_capacity(self):
        pool = ChannelPool(1)
        handle = pool.allocate()
        pool.release(handle)
        pool.allocate()
        assert pool.in_use == 1
        assert pool.peak_in_use == 1
        assert pool.total_allocated == 2

    def test_double_release_rejected(self):
        pool = ChannelPool(1)
        handle = pool.allocate()
        pool.release(handle)
        with pytest.raises(ValueError):
            pool.release(handle)

    def test_unlimited_pool_tracks_peak(self):
        pool = ChannelPool(None)
        handles = [pool.allocate() for _ in range(50)]
        for h in handles:
            pool.release(h)
        assert pool.in_use == 0
        assert pool.peak_in_use == 50


class TestXorshift64Star:
    def reference_next(self, x: int) -> tuple[int, int]:
        """Inline restatement of the documented recurrence."""
        mask = (1 << 64) - 1
        x ^= x >> 12
        x ^= (x << 25) & mask
        x ^= x >> 27
        return x, (x * 2685821657736338717) & mask

    # First outputs of the documented recurrence, computed once and frozen.
    GOLDEN_SEED1 = [5180492295206395165, 12380297144915551517, 13389498078930870103,
                    5599127315341312413, 1036278371763004928]
    GOLDEN_SEED2_FIRST = 10360984590412790330

    def test_seed1_reference_sequence(self):
        rng = Xorshift64Star(1)
        assert [rng.next_u64() for _ in range(5)] == self.GOLDEN_SEED1
        state, out = 1, None
        outs = []
        for _ in range(5):
            state, out = self.reference_next(state)
            outs.append(out)
        assert outs == self.GOLDEN_SEED1

    def test_same_seed_same_sequence(self):
        a, b = Xorshift64Star(42), Xorshift64Star(42)
        assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]

    def test_different_seeds_differ(self):
        assert Xorshift64Star(1).next_u64() != Xorshift64Star(2).next_u64()
        assert Xorshift64Star(2).next_u64() == self.GOLDEN_SEED2_FIRST

    def test_seed_zero_remapped(self):
        rng = Xorshift64Star(0)
        assert rng.state == SEED_ZERO_REMAP
        assert rng.next_u64() == Xorshift64Star(SEED_ZERO_REMAP).next_u64()

    def test_unit_draws_stay_in_half_open_interval(self):
        rng = Xorshift64Star(7)
        for _ in range(1000):
            u = rng.next_unit()
            assert 0.0 < u <= 1.0
            math.log(u)  # must never blow up


class TestWorkloads:
    def test_scripted_returned_verbatim(self):
        calls = [ScriptedCall(0, "a", "b", 10), ScriptedCall(5, "b", "a", 20)]
        spec = WorkloadSpec(WorkloadMode.SCRIPTED, scripted_calls=calls)
        assert generate_workload(spec, 100) == calls

    def test_random_is_deterministic(self):
        spec = WorkloadSpec(
            WorkloadMode.RANDOM,
            random=RandomWorkload(42, 0.05, 120.0, ("a", "b", "c")))
        first = generate_workload(spec, 5000)
        second = generate_workload(spec, 5000)
        assert first == second
        assert first, "expected some arrivals"

    def test_random_call_count_within_3_sigma(self):
        # rate 0.1/s over 10000 s: Poisson(1000), sigma ~ 31.6
        spec = WorkloadSpec(
            WorkloadMode.RANDOM,
            random=RandomWorkload(42, 0.1, 60.0, ("a", "b")))
        count = len(generate_workload(spec, 10000))
        assert abs(count - 1000) <= 3 * math.sqrt(1000)

    def test_random_respects_horizon_and_universe(self):
        spec = WorkloadSpec(
            WorkloadMode.RANDOM,
            random=RandomWorkload(7, 0.02, 60.0, ("a", "b")))
        for call in generate_workload(spec, 2000):
            assert 0 <= call.start_time <= 2000
            assert call.caller in ("a", "b")
            assert call.callee in ("a", "b")
            assert call.callee != call.caller
            assert call.duration >= 0

    def test_empty_universe_rejected(self):
        spec = WorkloadSpec(WorkloadMode.RANDOM,
                            random=RandomWorkload(1, 0.1, 60.0, ()))
        with pytest.raises(EmptyAccountUniverse):
            generate_workload(spec, 100)
