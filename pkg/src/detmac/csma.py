"""Slotted CSMA/CA for the contention access period.

Time inside CAP slots is divided into backoff periods, three per beacon-order-
zero slot.  An attempt draws a random backoff, counts it down (pausing outside
CAP), then senses the channel for `cw` consecutive periods; any busy period
burns one of the bounded retries.  The whole point of this module is to be the
measured baseline: even when it succeeds, nothing bounds how long it takes,
and after `max_backoffs` busy rounds it gives up entirely.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

PERIODS_PER_BASE_SLOT = 3

SUCCESS = "success"
CHANNEL_ACCESS_FAILURE = "channel_access_failure"


@dataclass(frozen=True)
class CsmaParams:
    min_be: int = 3
    max_be: int = 5
    max_backoffs: int = 4
    cw: int = 2
    frame_periods: int = 3   # airtime of one frame, in backoff periods
    ack_periods: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.min_be <= self.max_be <= 8:
            raise ValueError("need 0 <= min_be <= max_be <= 8")
        if self.max_backoffs < 0 or self.cw < 1:
            raise ValueError("bad retry parameters")
        if self.frame_periods < 1 or self.ack_periods < 1:
            raise ValueError("airtime must be at least one period")


def periods_per_slot(bo: int) -> int:
    return PERIODS_PER_BASE_SLOT << bo


class CsmaAttempt:
    """One pending transmission, stepped once per backoff period by the engine.

    States: counting down backoff, sensing (cw periods must all be idle),
    deferred to the next CAP region, done, or failed.  The backoff countdown
    runs regardless of channel state; only the sensing phase reacts to it.
    """

    def __init__(self, node: int, frame: object, dst: int, params: CsmaParams,
                 rng: random.Random, with_ack: bool = False) -> None:
        self.node = node
        self.frame = frame
        self.dst = dst
        self.params = params
        self.rng = rng
        self.with_ack = with_ack
        self.nb = 0
        self.be = params.min_be
        self.backoff_left = rng.randrange(1 << self.be)
        self.cw_left = 0
        self.state = "backoff"

    def airtime(self) -> int:
        extra = self.params.ack_periods if self.with_ack else 0
        return self.params.frame_periods + extra

    def new_region(self) -> None:
        """A fresh CAP region begins; deferred attempts resume sensing."""
        if self.state == "deferred":
            self.state = "backoff"
            self.backoff_left = 0

    def _fail_round(self) -> str | None:
        self.nb += 1
        self.be = min(self.be + 1, self.params.max_be)
        if self.nb > self.params.max_backoffs:
            self.state = "failed"
            return CHANNEL_ACCESS_FAILURE
        self.backoff_left = self.rng.randrange(1 << self.be)
        self.state = "backoff"
        return None

    def step(self, busy: bool, periods_left: int) -> str | None:
        """Advance one backoff period.

        `periods_left` counts this period and the rest of the current CAP
        region.  Returns "transmit" when the frame should start on the next
        period, CHANNEL_ACCESS_FAILURE when the attempt dies, else None.
        """
        if self.state not in ("backoff", "cca"):
            return None
        if self.state == "backoff":
            if self.backoff_left > 0:
                self.backoff_left -= 1
                return None
            self.state = "cca"
            self.cw_left = self.params.cw
        if busy:
            return self._fail_round()
        self.cw_left -= 1
        if self.cw_left > 0:
            return None
        if periods_left - 1 < self.airtime():
            # frame (and ack, if any) cannot finish before the region ends
            self.state = "deferred"
            return None
        self.state = "granted"
        return "transmit"


def csma_transmit(node: int, frame: object, params: CsmaParams,
                  rng: random.Random, busy=None, region_periods: int | None = None,
                  with_ack: bool = False, max_periods: int = 100_000) -> tuple[str, int | None]:
    """Run one attempt to completion against a channel-occupancy trace.

    `busy(period)` says whether the medium is occupied in a given backoff
    period (default: always idle).  `region_periods`, if set, splits time into
    CAP regions of that many periods, exercising the defer-and-resume path.
    Returns (SUCCESS, start_period) or (CHANNEL_ACCESS_FAILURE, None).
    """
    if busy is None:
        busy = lambda period: False
    attempt = CsmaAttempt(node, frame, 0, params, rng, with_ack)
    for period in range(max_periods):
        if region_periods is not None:
            offset = period % region_periods
            if offset == 0:
                attempt.new_region()
            left = region_periods - offset
        else:
            left = max_periods - period
        if attempt.state == "deferred":
            continue
        got = attempt.step(busy(period), left)
        if got == "transmit":
            return SUCCESS, period + 1
        if got == CHANNEL_ACCESS_FAILURE:
            return CHANNEL_ACCESS_FAILURE, None
    raise RuntimeError("attempt did not resolve; busy trace never cleared")
