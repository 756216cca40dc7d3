"""Received-power bookkeeping and capture-effect arbitration.

A receiver presented with overlapping frames locks onto the earliest one and
decodes it only if its power advantage over every competitor clears the
capture margin.  Simultaneous starts are the interesting case: the frame the
receiver synchronizes on first (lowest transmitter id on exact ties) gets a
small bias credit, modelling the asymmetry of real synchronization hardware.
Raising every power by the same amount changes nothing; only differences
matter.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

DEFAULT_CAPTURE_MARGIN_DB = 10.0


@dataclass(frozen=True)
class Reception:
    """One frame as it arrives at one receiver within one contest."""

    tx: int
    power_dbm: float
    start: int = 0          # relative start (backoff periods); ties are real
    frame: object = None


@dataclass
class RadioEnvironment:
    """Static pairwise received powers plus the capture parameters.

    `power_dbm` maps (tx, rx) to received power; missing pairs are out of
    range.  `default_dbm` (if set) fills every unlisted pair, which keeps
    small scenario files small.  Loss is either "ideal" or "lossy" with a
    per-frame error rate applied to otherwise-decodable frames.
    """

    power_dbm: dict[tuple[int, int], float] = field(default_factory=dict)
    default_dbm: float | None = None
    capture_margin_db: float = DEFAULT_CAPTURE_MARGIN_DB
    sync_offset_bias_db: float = 0.0
    loss: str = "ideal"
    error_rate: float = 0.0
    noise_sigma_db: float = 0.0

    def __post_init__(self) -> None:
        if self.loss not in ("ideal", "lossy"):
            raise ValueError(f"unknown loss model {self.loss!r}")
        if not 0.0 <= self.error_rate < 1.0:
            raise ValueError(f"error rate {self.error_rate} outside [0, 1)")
        if self.capture_margin_db < 0:
            raise ValueError("capture margin must be non-negative")

    def rx_power(self, tx: int, rx: int) -> float | None:
        """Received power of tx at rx in dBm, or None when out of range."""
        if tx == rx:
            return None
        got = self.power_dbm.get((tx, rx))
        if got is None:
            got = self.default_dbm
        return got

    def in_range(self, tx: int, rx: int) -> bool:
        return self.rx_power(tx, rx) is not None

    def measure_power(self, rx: int, tx: int,
                      rng: random.Random | None = None) -> float | None:
        """One power measurement at rx, with optional gaussian meter noise.

        Returns None when tx is silent to rx (out of range): no signal, no
        measurement.
        """
        p = self.rx_power(tx, rx)
        if p is None:
            return None
        if self.noise_sigma_db > 0.0 and rng is not None:
            p += rng.gauss(0.0, self.noise_sigma_db)
        return p

    def _drop(self, rng: random.Random | None) -> bool:
        if self.loss == "ideal" or self.error_rate == 0.0:
            return False
        if rng is None:
            raise ValueError("lossy model needs an rng")
        return rng.random() < self.error_rate


def resolve_slot(receptions: list[Reception], env: RadioEnvironment,
                 rng: random.Random | None = None) -> Reception | None:
    """Decide which of several overlapping frames (if any) a receiver decodes.

    The receiver locks onto the earliest-starting frame, ties broken toward
    the stronger one.  The sync-favored frame, which is the earliest by
    (start, tx id), gets `sync_offset_bias_db` added to its effective power.
    The locked frame is decoded only if its effective power beats every other
    frame's by at least the capture margin; otherwise everything is lost.
    A lone frame always decodes (subject to the loss model).
    """
    if not receptions:
        return None
    if len(receptions) == 1:
        only = receptions[0]
        return None if env._drop(rng) else only

    favored = min(receptions, key=lambda r: (r.start, r.tx))

    def effective(r: Reception) -> float:
        return r.power_dbm + (env.sync_offset_bias_db if r is favored else 0.0)

    locked = min(receptions, key=lambda r: (r.start, -effective(r), r.tx))
    rest = max(effective(r) for r in receptions if r is not locked)
    if effective(locked) - rest < env.capture_margin_db:
        return None
    return None if env._drop(rng) else locked
