"""Relay buffer state and the per-slot dynamics of the six transmission modes.

The relay keeps one queue per direction: ``q1`` holds data received from
user 1 (waiting for delivery to user 2) and ``q2`` holds data received from
user 2.  Modes 1-3 only admit data, modes 4-6 only deliver it, and delivered
amounts are truncated by the queue content at the start of the slot.
"""

from __future__ import annotations

from dataclasses import dataclass

from .channel import CapacitySet

__all__ = [
    "MODE_UPLINK_1",
    "MODE_UPLINK_2",
    "MODE_UPLINK_BOTH",
    "MODE_DOWNLINK_1",
    "MODE_DOWNLINK_2",
    "MODE_DOWNLINK_BOTH",
    "BufferState",
    "SlotOutcome",
    "apply_mode",
]

MODE_UPLINK_1 = 1      # user 1 -> relay
MODE_UPLINK_2 = 2      # user 2 -> relay
MODE_UPLINK_BOTH = 3   # both users -> relay, multiple access
MODE_DOWNLINK_1 = 4    # relay -> user 1
MODE_DOWNLINK_2 = 5    # relay -> user 2
MODE_DOWNLINK_BOTH = 6  # relay -> both users, broadcast

_ALL_MODES = (1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class BufferState:
    """Queue backlogs at the relay, in bits per channel use."""

    q1: float = 0.0
    q2: float = 0.0

    def __post_init__(self):
        if not (self.q1 >= 0.0 and self.q2 >= 0.0):
            raise ValueError(f"queue backlogs must be nonnegative, got {self!r}")


@dataclass(frozen=True)
class SlotOutcome:
    """Rates realized in one slot.

    ``r1r``/``r2r`` are admitted into the relay queues, ``rr1``/``rr2`` are
    delivered to user 1 and user 2 respectively.
    """

    mode: int
    r1r: float = 0.0
    r2r: float = 0.0
    rr1: float = 0.0
    rr2: float = 0.0
    t_used: float = 0.0


def apply_mode(state: BufferState, mode: int, caps: CapacitySet,
               t: float = 0.0) -> tuple[BufferState, SlotOutcome]:
    """Advance the relay queues by one slot under the given mode.

    Parameters
    ----------
    state : BufferState
        Queues at the start of the slot.
    mode : int
        One of the six mode constants.
    caps : CapacitySet
        This slot's link capacities.
    t : float
        Multiple-access time share, only used by mode 3.

    Returns
    -------
    (BufferState, SlotOutcome)
        Queues at the end of the slot and the realized rates.
    """
    if mode not in _ALL_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    q1, q2 = state.q1, state.q2
    if mode == MODE_UPLINK_1:
        r1r = caps.c1r
        return BufferState(q1 + r1r, q2), SlotOutcome(mode, r1r=r1r)
    if mode == MODE_UPLINK_2:
        r2r = caps.c2r
        return BufferState(q1, q2 + r2r), SlotOutcome(mode, r2r=r2r)
    if mode == MODE_UPLINK_BOTH:
        r1r = caps.c12r(t)
        r2r = caps.c21r(t)
        return BufferState(q1 + r1r, q2 + r2r), SlotOutcome(mode, r1r=r1r, r2r=r2r,
                                                            t_used=t)
    if mode == MODE_DOWNLINK_1:
        rr1 = min(caps.cr1, q2)
        return BufferState(q1, q2 - rr1), SlotOutcome(mode, rr1=rr1)
    if mode == MODE_DOWNLINK_2:
        rr2 = min(caps.cr2, q1)
        return BufferState(q1 - rr2, q2), SlotOutcome(mode, rr2=rr2)
    # broadcast: both deliveries are limited by the queues at slot start
    rr1 = min(caps.cr1, q2)
    rr2 = min(caps.cr2, q1)
    return BufferState(q1 - rr2, q2 - rr1), SlotOutcome(mode, rr1=rr1, rr2=rr2)
