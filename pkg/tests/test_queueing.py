import numpy as np
import pytest

from aoisim.oracles import PacketListQueue
from aoisim.queueing import (ArrivalProcess, QueueState, apply_arrival,
                             apply_transmission, arrival_drops, slot_step)

U = 3


class TestArrivalCases:
    def test_empty_buffer_stores_arrival(self):
        # empty buffer, arrival, any drop flag
        for flag in (0, 1):
            out = apply_arrival(QueueState(), True, flag, U)
            assert out == QueueState(3, 0, 0, None, 0)

    def test_one_batch_keep_queues_behind(self):
        state = QueueState(2, 0, 4, None, 0)
        out = apply_arrival(state, True, 1, U)
        assert out == QueueState(2, 3, 4, 0, 0)

    def test_two_batches_promote_on_drop(self):
        state = QueueState(2, 3, 7, 2, 0)
        out = apply_arrival(state, False, 0, U)
        assert out == QueueState(3, 0, 2, None, 0)

    def test_one_batch_drop_replaces(self):
        state = QueueState(2, 0, 4, None, 5)
        out = apply_arrival(state, True, 0, U)
        assert out == QueueState(3, 0, 0, None, 5)

    def test_two_batches_arrival_replaces_later(self):
        state = QueueState(1, 2, 6, 3, 2)
        keep = apply_arrival(state, True, 1, U)
        assert keep == QueueState(1, 3, 6, 0, 2)
        drop = apply_arrival(state, True, 0, U)
        assert drop == QueueState(3, 0, 0, None, 2)

    def test_no_arrival_keep_is_identity(self):
        state = QueueState(2, 1, 5, 1, 3)
        assert apply_arrival(state, False, 1, U) == state

    def test_invalid_state_rejected(self):
        with pytest.raises(ValueError):
            apply_arrival(QueueState(0, 2, None, 1, 0), False, 1, U)
        with pytest.raises(ValueError):
            apply_arrival(QueueState(1, 0, None, None, 0), False, 1, U)


class TestTransmissionCases:
    def test_partial_earlier_batch(self):
        out = apply_transmission(QueueState(3, 2, 5, 1, 9), 2)
        assert out == QueueState(1, 2, 6, 2, 10)

    def test_earlier_done_later_partial(self):
        out = apply_transmission(QueueState(3, 2, 5, 1, 9), 4)
        assert out == QueueState(1, 0, 2, None, 6)

    def test_both_batches_delivered(self):
        out = apply_transmission(QueueState(3, 2, 5, 1, 9), 5)
        assert out == QueueState(0, 0, None, None, 2)

    def test_single_batch_completion_uses_own_age(self):
        out = apply_transmission(QueueState(2, 0, 4, None, 9), 2)
        assert out == QueueState(0, 0, None, None, 5)

    def test_empty_buffer_ages(self):
        out = apply_transmission(QueueState(), 7)
        assert out == QueueState(0, 0, None, None, 1)

    def test_negative_capacity_rejected(self):
        with pytest.raises(ValueError):
            apply_transmission(QueueState(), -1)


class TestSlotStep:
    def test_idle_slot(self):
        state, events = slot_step(QueueState(), False, 0, 0, U)
        assert state == QueueState(0, 0, None, None, 1)
        assert (events.batches_dropped, events.batches_completed,
                events.packets_sent) == (0, 0, 0)

    def test_same_slot_completion(self):
        # empty buffer, fresh batch delivered whole within its arrival slot
        state, events = slot_step(QueueState(), True, 1, U, U)
        assert state == QueueState(0, 0, None, None, 1)
        assert events.batches_completed == 1
        assert events.packets_sent == U

    def test_full_buffer_arrival_drop_counts_two(self):
        state = QueueState(3, 3, 5, 2, 4)
        _, events = slot_step(state, True, 0, 0, U)
        assert events.batches_dropped == 2

    def test_replacement_only_counts_one(self):
        state = QueueState(3, 3, 5, 2, 4)
        _, events = slot_step(state, True, 1, 0, U)
        assert events.batches_dropped == 1

    def test_drop_counting_matrix(self):
        one = QueueState(2, 0, 1, None, 0)
        two = QueueState(2, 1, 3, 0, 0)
        assert arrival_drops(QueueState(), True, 0) == 0
        assert arrival_drops(one, True, 0) == 1
        assert arrival_drops(one, True, 1) == 0
        assert arrival_drops(one, False, 0) == 0
        assert arrival_drops(two, False, 0) == 1
        assert arrival_drops(two, False, 1) == 0


class TestArrivalProcess:
    def test_valid(self):
        ap = ArrivalProcess(batch_size=3, arrival_prob=0.8)
        assert ap.batch_size == 3

    def test_invalid(self):
        with pytest.raises(ValueError):
            ArrivalProcess(batch_size=0)
        with pytest.raises(ValueError):
            ArrivalProcess(arrival_prob=1.5)


def all_inputs(u):
    return [(arrived, flag, y)
            for arrived in (False, True)
            for flag in (0, 1)
            for y in range(2 * u + 2)]


class TestOracleEquivalence:
    def test_exhaustive_walk(self):
        inputs = all_inputs(U)
        frontier = {QueueState(): (QueueState(), PacketListQueue())}
        seen = {QueueState()}
        for _ in range(6):
            nxt = {}
            for impl, oracle in frontier.values():
                for arrived, flag, y in inputs:
                    new_impl, _ = slot_step(impl, arrived, flag, y, U)
                    new_oracle = oracle.clone()
                    new_oracle.step(arrived, flag, y, U)
                    new_impl.check(U)
                    assert new_oracle.state() == new_impl
                    if new_impl not in seen:
                        seen.add(new_impl)
                        nxt[new_impl] = (new_impl, new_oracle)
            frontier = nxt
        assert len(seen) >= 150  # depth-6 closure from the empty buffer

    def test_random_long_runs_agree(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            impl = QueueState()
            oracle = PacketListQueue()
            for _ in range(200):
                arrived = bool(rng.random() < 0.6)
                flag = int(rng.integers(0, 2))
                y = int(rng.integers(0, 2 * U + 2))
                impl, _ = slot_step(impl, arrived, flag, y, U)
                oracle.step(arrived, flag, y, U)
                assert oracle.state() == impl


class TestInvariantProperties:
    def test_aoi_recursion(self):
        # aoi either grows by one or resets to (completed batch age + 1)
        rng = np.random.default_rng(4)
        for _ in range(30):
            state = QueueState()
            for _ in range(150):
                arrived = bool(rng.random() < 0.7)
                flag = int(rng.integers(0, 2))
                y = int(rng.integers(0, 2 * U + 2))
                after_arrival = apply_arrival(state, arrived, flag, U)
                nxt = apply_transmission(after_arrival, y)
                allowed = {state.aoi_rx + 1}
                if after_arrival.q1 > 0 and y >= after_arrival.q1:
                    allowed.add(after_arrival.age1 + 1)
                    if after_arrival.q2 > 0 and y >= after_arrival.packets_buffered():
                        allowed.add(after_arrival.age2 + 1)
                assert nxt.aoi_rx in allowed
                state = nxt

    def test_monotone_service_bounds(self):
        # arrivals add at most u packets; service removes exactly min(y, buffered)
        rng = np.random.default_rng(8)
        for _ in range(30):
            state = QueueState()
            for _ in range(150):
                arrived = bool(rng.random() < 0.7)
                flag = int(rng.integers(0, 2))
                y = int(rng.integers(0, 2 * U + 2))
                after_arrival = apply_arrival(state, arrived, flag, U)
                assert after_arrival.packets_buffered() \
                    <= state.packets_buffered() + U
                nxt = apply_transmission(after_arrival, y)
                served = after_arrival.packets_buffered() - nxt.packets_buffered()
                assert served == min(y, after_arrival.packets_buffered())
                state = nxt
