"""Frames and per-role protocol machines.

The supercoordinator beacons at slot 0 of every superframe; coordinators
beacon in their own GBS slot and relay everything upward.  Requests ride
beacons (piggybacked), grants come back in the next superbeacon, and
association responses ride the parent's next beacon.  Joining devices use a
pre-allocated deterministic slot (PDS) when they hold one and fall back to
CSMA/CA contention otherwise; the two paths share one observable state
machine so traces can be compared.

Machines never touch the event loop directly: the engine calls `on_wake` /
`on_frame` and exposes scheduling primitives through a context object.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from .core import Kind, SlotAssignment, Topology, SLOTS_PER_SUPERFRAME
from .radio import RadioEnvironment
from .scheduler import CaptureEvidence, GrantDecision, GtsRequest

log = logging.getLogger(__name__)

PDS_MODE = "pds"
CSMA_MODE = "csma"


# -- frames ------------------------------------------------------------------


@dataclass(frozen=True)
class GrantRecord:
    """One scheduler decision as relayed over the air."""

    requester: int
    granted: bool
    assignment: SlotAssignment | None = None
    denial: str | None = None
    detail: str = ""


@dataclass(frozen=True)
class Beacon:
    """A coordinator (or supercoordinator) beacon.

    `slot_map` announces all 16 slots: ("cap",), ("idle",) or
    ("reserved", owner, kind).  Only the superbeacon carries the GBS
    directory and the hypercycle phase.
    """

    sender: int
    superframe: int
    slot_map: tuple[tuple, ...]
    piggyback: tuple[GtsRequest, ...] = ()
    grants: tuple[GrantRecord, ...] = ()
    assoc_acks: tuple[int, ...] = ()
    gbs_directory: tuple[tuple[int, int], ...] | None = None
    hypercycle_phase: int | None = None

    def well_formed(self) -> bool:
        return len(self.slot_map) == SLOTS_PER_SUPERFRAME and self.superframe >= 0


@dataclass(frozen=True)
class AssociationRequest:
    sender: int
    parent: int
    via: str  # PDS_MODE | CSMA_MODE


@dataclass(frozen=True)
class GtsRequestFrame:
    request: GtsRequest


@dataclass(frozen=True)
class DataFrame:
    sender: int
    dst: int
    seq: int


def build_slot_map(table, superframe: int) -> tuple[tuple, ...]:
    """Per-slot announcement for one superframe, straight from the table."""
    out = []
    for slot in range(SLOTS_PER_SUPERFRAME):
        active = table.active_at(slot, superframe)
        if not active:
            out.append(("idle",))
        elif any(a.kind is Kind.CAP for a in active):
            out.append(("cap",))
        else:
            a = min(active, key=lambda x: (x.owner if x.owner is not None else -1))
            out.append(("reserved", a.owner, a.kind.value))
    return tuple(out)


# -- association state ---------------------------------------------------------

OFF = "off"
WAIT_BEACON = "wait_beacon"
WAIT_PDS = "wait_pds"
CONTENDING = "contending"
REQ_SENT = "req_sent"
AWAIT_ACK = "await_ack"
ASSOCIATED = "associated"

_LEGAL = {
    OFF: {WAIT_BEACON},
    WAIT_BEACON: {WAIT_PDS, CONTENDING},
    WAIT_PDS: {REQ_SENT},
    REQ_SENT: {ASSOCIATED, WAIT_PDS},
    CONTENDING: {AWAIT_ACK, CONTENDING, ASSOCIATED},
    AWAIT_ACK: {ASSOCIATED, CONTENDING},
    ASSOCIATED: set(),
}


@dataclass
class AssociationState:
    """Observable join progress of one device, with its full transition trace."""

    node: int
    phase: str = OFF
    mode: str | None = None
    power_on_tick: int | None = None
    associated_tick: int | None = None
    transitions: list[tuple[int, str]] = field(default_factory=list)

    def to(self, tick: int, phase: str) -> None:
        assert phase in _LEGAL[self.phase], \
            f"illegal association transition {self.phase} -> {phase}"
        self.phase = phase
        self.transitions.append((tick, phase))

    def latency_ticks(self) -> int:
        assert self.power_on_tick is not None and self.associated_tick is not None
        return self.associated_tick - self.power_on_tick


# -- machines ------------------------------------------------------------------


class NodeMachine:
    def __init__(self, node: int, parent: int | None) -> None:
        self.node = node
        self.parent = parent
        self.powered = True
        self.assoc = AssociationState(node)

    def on_wake(self, ctx, tag) -> None:  # pragma: no cover - overridden
        raise NotImplementedError

    def on_frame(self, ctx, frame, sender: int) -> None:
        pass


class SupercoordinatorMachine(NodeMachine):
    """Slot-0 beacon source and the single grant authority."""

    def __init__(self, node: int) -> None:
        super().__init__(node, None)
        self.pending: list[tuple[int, int, GtsRequest]] = []  # (arrival sf, order, req)
        self.assoc_acks: list[int] = []
        self._order = 0

    def on_wake(self, ctx, tag) -> None:
        sf = ctx.superframe
        due = [p for p in self.pending if p[0] < sf]
        self.pending = [p for p in self.pending if p[0] >= sf]
        due.sort(key=lambda p: (-p[2].priority, p[2].requester, p[1]))
        grants = []
        for _, _, req in due:
            decision = ctx.scheduler.allocate(req)
            ctx.count("grants" if decision.granted else "denials")
            grants.append(GrantRecord(
                req.requester, decision.granted, decision.assignment,
                decision.denial.value if decision.denial else None,
                decision.detail))
        acks = tuple(sorted(set(self.assoc_acks)))
        self.assoc_acks.clear()
        beacon = Beacon(
            sender=self.node,
            superframe=sf,
            slot_map=build_slot_map(ctx.table, sf),
            grants=tuple(grants),
            assoc_acks=acks,
            gbs_directory=tuple(
                (a.owner, a.slot) for a in ctx.table.assignments
                if a.kind is Kind.GBS),
            hypercycle_phase=sf % (1 << ctx.table.nmax),
        )
        ctx.count("superbeacons")
        ctx.send_reserved(self.node, beacon, None, ctx.superbeacon_assignment)
        ctx.wake_at_slot(sf + 1, 0, self.node, "beacon")

    def on_frame(self, ctx, frame, sender: int) -> None:
        if isinstance(frame, Beacon) and frame.well_formed():
            for req in frame.piggyback:
                self.pending.append((ctx.superframe, self._order, req))
                self._order += 1
        elif isinstance(frame, AssociationRequest) and frame.parent == self.node:
            self.assoc_acks.append(frame.sender)
            ctx.scheduler.associated.add(frame.sender)
            ctx.count("assoc_requests")
        elif isinstance(frame, GtsRequestFrame):
            self.pending.append((ctx.superframe, self._order, frame.request))
            self._order += 1
        elif isinstance(frame, DataFrame):
            pass
        else:
            ctx.count("malformed_dropped")
            log.debug("supercoordinator dropped malformed frame %r", frame)


class CoordinatorMachine(NodeMachine):
    """GBS beacon source for one star; relays requests up and grants down."""

    DESYNC_AFTER = 2  # missed superbeacons before the beacon goes quiet

    def __init__(self, node: int, parent: int, gbs_slot: int,
                 joins: bool) -> None:
        super().__init__(node, parent)
        self.gbs_slot = gbs_slot
        self.pending: list[tuple[int, int, GtsRequest]] = []
        self.assoc_acks: list[int] = []
        self.grant_cache: list[GrantRecord] = []
        self.last_superbeacon_sf = -1
        self.resume_sf = 0
        self.joining = joins
        self.pds: SlotAssignment | None = None
        self._order = 0
        if joins:
            self.powered = False
        else:
            self.assoc.phase = ASSOCIATED
            self.assoc.mode = PDS_MODE

    # association path (only when joining)

    def on_wake(self, ctx, tag) -> None:
        if tag == "power_on":
            self.powered = True
            self.assoc.power_on_tick = ctx.slot_start_tick
            self.assoc.to(ctx.slot_start_tick, WAIT_BEACON)
            return
        if tag == "pds":
            if self.assoc.phase is not ASSOCIATED and self.assoc.phase == WAIT_PDS:
                assert self.pds is not None
                ctx.send_reserved(self.node, AssociationRequest(
                    self.node, self.parent, PDS_MODE), self.parent, self.pds)
                self.assoc.to(ctx.slot_start_tick, REQ_SENT)
            return
        if tag == "beacon":
            self._emit_beacon(ctx)

    def _emit_beacon(self, ctx) -> None:
        sf = ctx.superframe
        if not self.powered or self.assoc.phase != ASSOCIATED or sf < self.resume_sf:
            ctx.wake_at_slot(sf + 1, self.gbs_slot, self.node, "beacon")
            return
        if sf - self.last_superbeacon_sf >= self.DESYNC_AFTER:
            ctx.count("desyncs")
            log.debug("coordinator %d desynced at sf %d", self.node, sf)
            ctx.wake_at_slot(sf + 1, self.gbs_slot, self.node, "beacon")
            return
        due = [p for p in self.pending if p[0] < sf]
        self.pending = [p for p in self.pending if p[0] >= sf]
        acks = tuple(sorted(set(self.assoc_acks)))
        self.assoc_acks.clear()
        beacon = Beacon(
            sender=self.node,
            superframe=sf,
            slot_map=build_slot_map(ctx.table, sf),
            piggyback=tuple(p[2] for p in due),
            grants=tuple(self.grant_cache),
            assoc_acks=acks,
        )
        self.grant_cache = []
        ctx.count("beacons")
        ctx.send_reserved(self.node, beacon, None, ctx.gbs_assignment(self.node))
        ctx.wake_at_slot(sf + 1, self.gbs_slot, self.node, "beacon")

    def on_frame(self, ctx, frame, sender: int) -> None:
        if isinstance(frame, Beacon) and sender == self.parent:
            resync = (self.last_superbeacon_sf >= 0 and
                      frame.superframe - self.last_superbeacon_sf >= self.DESYNC_AFTER)
            self.last_superbeacon_sf = frame.superframe
            if resync:
                # observe one full superframe before beaconing again
                self.resume_sf = frame.superframe + 1
            mine = [g for g in frame.grants
                    if ctx.topology.star_of(g.requester) == self.node
                    or g.requester == self.node]
            self.grant_cache.extend(mine)
            if self.node in frame.assoc_acks and self.assoc.phase == REQ_SENT:
                self._complete_association(ctx)
            elif self.assoc.phase == WAIT_BEACON:
                assert self.pds is not None, \
                    "joining coordinator must hold a pre-allocated slot"
                self.assoc.to(ctx.slot_end_tick, WAIT_PDS)
                ctx.wake_at_instance(self.pds, self.node, "pds")
        elif isinstance(frame, AssociationRequest) and frame.parent == self.node:
            self.assoc_acks.append(frame.sender)
            ctx.scheduler.associated.add(frame.sender)
            ctx.count("assoc_requests")
        elif isinstance(frame, GtsRequestFrame):
            self.pending.append((ctx.superframe, self._order, frame.request))
            self._order += 1

    def queue_own_request(self, ctx, req: GtsRequest) -> None:
        self.pending.append((ctx.superframe, self._order, req))
        self._order += 1

    def _complete_association(self, ctx) -> None:
        self.assoc.mode = PDS_MODE
        self.assoc.associated_tick = ctx.slot_end_tick
        self.assoc.to(ctx.slot_end_tick, ASSOCIATED)
        self.resume_sf = ctx.superframe + 1
        ctx.scheduler.associated.add(self.node)
        ctx.node_associated(self.node)


class LeafMachine(NodeMachine):
    """A star member: joins via PDS when it holds one, else contends in CAP."""

    def __init__(self, node: int, parent: int, joins: bool) -> None:
        super().__init__(node, parent)
        self.pds: SlotAssignment | None = None
        self.joining = joins
        self.request_tx_slot: int | None = None
        if joins:
            self.powered = False
        else:
            self.assoc.phase = ASSOCIATED
            self.assoc.mode = PDS_MODE

    def on_wake(self, ctx, tag) -> None:
        if tag == "power_on":
            self.powered = True
            self.assoc.power_on_tick = ctx.slot_start_tick
            self.assoc.to(ctx.slot_start_tick, WAIT_BEACON)
        elif tag == "pds" and self.assoc.phase == WAIT_PDS:
            assert self.pds is not None
            ctx.send_reserved(self.node, AssociationRequest(
                self.node, self.parent, PDS_MODE), self.parent, self.pds)
            self.assoc.to(ctx.slot_start_tick, REQ_SENT)

    def on_frame(self, ctx, frame, sender: int) -> None:
        if not isinstance(frame, Beacon) or sender != self.parent:
            return
        if self.node in frame.assoc_acks and self.assoc.phase in (REQ_SENT, AWAIT_ACK):
            self.assoc.mode = PDS_MODE if self.assoc.phase == REQ_SENT else CSMA_MODE
            self.assoc.associated_tick = ctx.slot_end_tick
            self.assoc.to(ctx.slot_end_tick, ASSOCIATED)
            ctx.node_associated(self.node)
            return
        if self.assoc.phase == WAIT_BEACON:
            if self.pds is not None:
                self.assoc.to(ctx.slot_end_tick, WAIT_PDS)
                ctx.wake_at_instance(self.pds, self.node, "pds")
            else:
                self.assoc.to(ctx.slot_end_tick, CONTENDING)
                ctx.enqueue_csma(self.node, AssociationRequest(
                    self.node, self.parent, CSMA_MODE), self.parent)
        elif self.assoc.phase == AWAIT_ACK and \
                self.request_tx_slot is not None and \
                ctx.slot_number > self.request_tx_slot:
            # the first beacon after our request carried no response: it was
            # lost on the air, contend again
            self.assoc.to(ctx.slot_end_tick, CONTENDING)
            ctx.enqueue_csma(self.node, AssociationRequest(
                self.node, self.parent, CSMA_MODE), self.parent)

    def on_csma_sent(self, ctx, slot_number: int) -> None:
        if self.assoc.phase == CONTENDING:
            self.request_tx_slot = slot_number
            self.assoc.to(ctx.slot_end_tick, AWAIT_ACK)

    def on_csma_failure(self, ctx) -> None:
        if self.assoc.phase == CONTENDING:
            self.assoc.to(ctx.slot_end_tick, CONTENDING)
            ctx.enqueue_csma(self.node, AssociationRequest(
                self.node, self.parent, CSMA_MODE), self.parent)


# -- SGTS negotiation ----------------------------------------------------------


@dataclass(frozen=True)
class SgtsNegotiation:
    ok: bool
    evidence: CaptureEvidence | None = None
    failing_side: str | None = None
    measured_delta_db: float | None = None
    detail: str = ""


def negotiate_sgts(env: RadioEnvironment, topology: Topology,
                   leaf_a: int, leaf_b: int, margin_db: float | None = None,
                   now_sf: int = 0,
                   rng: random.Random | None = None) -> SgtsNegotiation:
    """Have both parent coordinators test the mutual-capture condition.

    Coordinator A must receive its own leaf over the foreign one with at
    least the margin, and coordinator B symmetrically; only then is the pair
    safe to put in one slot.  A leaf that is entirely out of a coordinator's
    range counts as an infinite advantage for the local one.
    """
    coord_a = topology.star_of(leaf_a)
    coord_b = topology.star_of(leaf_b)
    if coord_a is None or coord_b is None:
        raise ValueError("SGTS negotiation needs two star members")
    if coord_a == coord_b:
        raise ValueError("SGTS partners must live in different stars")
    margin = env.capture_margin_db if margin_db is None else margin_db

    def advantage(coord: int, own: int, foreign: int) -> float:
        own_p = env.measure_power(coord, own, rng)
        if own_p is None:
            return float("-inf")
        foreign_p = env.measure_power(coord, foreign, rng)
        if foreign_p is None:
            return float("inf")
        return own_p - foreign_p

    delta_a = advantage(coord_a, leaf_a, leaf_b)
    delta_b = advantage(coord_b, leaf_b, leaf_a)
    for side, delta, coord in (("a", delta_a, coord_a), ("b", delta_b, coord_b)):
        if delta < margin:
            return SgtsNegotiation(
                False, None, side, delta,
                f"coordinator {coord} sees only {delta} dB advantage, "
                f"needs {margin} dB")
    return SgtsNegotiation(True, CaptureEvidence(
        leaf_a, leaf_b, delta_a, delta_b, margin, now_sf, now_sf))
