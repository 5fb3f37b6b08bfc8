"""Two-batch status buffer: arrivals with replacement/dropping, FCFS service, receiver AoI.

A status sample is a batch of ``u`` packets and is useful only once all of
them are delivered. The buffer holds at most two batches: the earlier one
(``q1``/``age1``) being served and a later one (``q2``/``age2``) waiting.
Batch ages use ``None`` for "no batch here" so arithmetic on an absent age
fails loudly instead of silently wrapping a sentinel number.

``drop_flag`` is the keep/drop decision for the earlier batch: 1 keeps it,
0 drops it in favour of newer data. It is ignored while the buffer is empty
(proactive dropping of nothing) and, with no arrival, while only one batch
is buffered.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "QueueState",
    "ArrivalProcess",
    "SlotEvents",
    "apply_arrival",
    "arrival_drops",
    "apply_transmission",
    "service_summary",
    "slot_step",
]


@dataclass(frozen=True)
class QueueState:
    """Buffer occupancy, transmitter-side batch ages, and receiver AoI (slots)."""

    q1: int = 0
    q2: int = 0
    age1: int | None = None
    age2: int | None = None
    aoi_rx: int = 0

    def packets_buffered(self) -> int:
        return self.q1 + self.q2

    def check(self, u: int | None = None) -> "QueueState":
        """Raise ValueError if the state violates the buffer invariants."""
        if self.q1 < 0 or self.q2 < 0 or self.aoi_rx < 0:
            raise ValueError(f"negative field in {self}")
        if self.q2 > 0 and self.q1 == 0:
            raise ValueError("later batch present without an earlier one")
        if (self.q1 == 0) != (self.age1 is None):
            raise ValueError("age1 must be set exactly when batch 1 is present")
        if (self.q2 == 0) != (self.age2 is None):
            raise ValueError("age2 must be set exactly when batch 2 is present")
        if u is not None and (self.q1 > u or self.q2 > u):
            raise ValueError(f"batch larger than u={u}: {self}")
        return self


@dataclass(frozen=True)
class ArrivalProcess:
    """Bernoulli batch arrivals: one batch of ``batch_size`` packets per hit."""

    batch_size: int = 3
    arrival_prob: float = 0.8

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ValueError("arrival_prob must lie in [0, 1]")


@dataclass(frozen=True)
class SlotEvents:
    """Bookkeeping for one slot of one link."""

    batches_dropped: int = 0
    batches_completed: int = 0
    packets_sent: int = 0


def apply_arrival(state: QueueState, arrived: bool, drop_flag: int,
                  u: int) -> QueueState:
    """Arrival-phase transition at the start of a slot.

    Empty buffer: an arriving batch is stored as the earlier batch with age 0.
    One batch: an arrival either replaces it (drop_flag=0) or queues behind it.
    Two batches: an arrival always replaces the later batch; drop_flag then
    decides whether the earlier batch survives. With no arrival, drop_flag=0
    promotes the later batch.
    """
    state.check(u)
    if state.q1 == 0:  # empty buffer; dropping is prohibited
        if arrived:
            return QueueState(u, 0, 0, None, state.aoi_rx)
        return state
    if state.q2 == 0:  # exactly one buffered batch
        if not arrived:
            return state
        if drop_flag:
            return QueueState(state.q1, u, state.age1, 0, state.aoi_rx)
        return QueueState(u, 0, 0, None, state.aoi_rx)
    # two buffered batches
    if arrived:
        if drop_flag:
            return QueueState(state.q1, u, state.age1, 0, state.aoi_rx)
        return QueueState(u, 0, 0, None, state.aoi_rx)
    if drop_flag:
        return state
    return QueueState(state.q2, 0, state.age2, None, state.aoi_rx)


def arrival_drops(state: QueueState, arrived: bool, drop_flag: int) -> int:
    """Batches displaced by the arrival-phase transition (each counts once)."""
    if state.q1 == 0:
        return 0
    if state.q2 == 0:
        return 1 if (arrived and not drop_flag) else 0
    if arrived:
        return 1 if drop_flag else 2  # replaced batch 2, plus batch 1 if dropped
    return 0 if drop_flag else 1


def apply_transmission(state: QueueState, y: int) -> QueueState:
    """Service-phase transition given ``y`` deliverable packets (FCFS).

    The earlier batch drains first; leftover capacity goes to the later one,
    which is then promoted. Surviving batch ages advance by one slot. The
    receiver AoI resets to (completed batch age + 1) when a batch finishes,
    taking the fresher batch if both finish, and grows by one otherwise.
    """
    if y < 0:
        raise ValueError("y must be non-negative")
    if state.q1 == 0:  # nothing to serve; staleness grows
        return QueueState(0, 0, None, None, state.aoi_rx + 1)
    total = state.q1 + state.q2
    if y < state.q1:  # partial service of the earlier batch
        age2 = None if state.age2 is None else state.age2 + 1
        return QueueState(state.q1 - y, state.q2, state.age1 + 1, age2,
                          state.aoi_rx + 1)
    if y < total:  # earlier batch completes, later batch partially served
        return QueueState(total - y, 0, state.age2 + 1, None, state.age1 + 1)
    # everything buffered is delivered
    fresh_age = state.age2 if state.q2 > 0 else state.age1
    return QueueState(0, 0, None, None, fresh_age + 1)


def service_summary(state: QueueState, y: int) -> tuple[int, int]:
    """(packets sent, batches completed) for serving ``state`` with ``y``."""
    sent = min(y, state.packets_buffered())
    completed = 0
    if state.q1 > 0 and y >= state.q1:
        completed += 1
        if state.q2 > 0 and y >= state.q1 + state.q2:
            completed += 1
    return sent, completed


def slot_step(state: QueueState, arrived: bool, drop_flag: int, y: int,
              u: int) -> tuple[QueueState, SlotEvents]:
    """Full slot: arrival phase, then service phase, with event counts."""
    dropped = arrival_drops(state, arrived, drop_flag)
    after_arrival = apply_arrival(state, arrived, drop_flag, u)
    sent, completed = service_summary(after_arrival, y)
    nxt = apply_transmission(after_arrival, y)
    return nxt, SlotEvents(dropped, completed, sent)
