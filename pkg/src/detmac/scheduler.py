"""Centralized slot allocation: grants, pre-allocated slots, SGTS merging.

All reservation decisions are made in one place, against one schedule table,
so the network-wide no-conflict invariant can be enforced at grant time
instead of being discovered on the air.  Placement is deterministic: the same
table and the same request always produce the same decision.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

from .core import (
    DEFAULT_NMAX,
    SLOTS_PER_SUPERFRAME,
    Kind,
    ScheduleTable,
    SlotAssignment,
    Topology,
    check_level,
    conflict_check,
    coordinator_superframe_span,
    hypercycle_superframes,
    phases_overlap,
)

log = logging.getLogger(__name__)

FIRST_FIT = "first_fit"
SPREAD = "spread"
DEFAULT_CAPTURE_MARGIN_DB = 10.0
DEFAULT_EVIDENCE_WINDOW_SF = 4


class Denial(enum.Enum):
    FULL = "full"          # no conflict-free placement exists
    POLICY = "policy"      # placement exists but a policy rule refuses it


@dataclass(frozen=True)
class GtsRequest:
    """A reservation request as it arrives at the supercoordinator."""

    requester: int
    level: int = 0
    slot_count: int = 1
    priority: int = 0
    relayed_by: int | None = None


@dataclass(frozen=True)
class GrantDecision:
    granted: bool
    assignment: SlotAssignment | None = None
    assignments: tuple[SlotAssignment, ...] = ()
    denial: Denial | None = None
    detail: str = ""

    @staticmethod
    def grant(assignments: tuple[SlotAssignment, ...]) -> "GrantDecision":
        return GrantDecision(True, assignments[0], assignments)

    @staticmethod
    def deny(denial: Denial, detail: str) -> "GrantDecision":
        return GrantDecision(False, None, (), denial, detail)


@dataclass(frozen=True)
class CaptureEvidence:
    """Two-sided power-margin measurements backing an SGTS merge.

    Each side is the received-power advantage (own leaf minus foreign leaf,
    dB) observed at one coordinator, stamped with the superframe of the
    measurement.  The merge is only sound when both coordinators saw the
    advantage independently, against the same margin, recently.
    """

    leaf_a: int
    leaf_b: int
    delta_a_db: float
    delta_b_db: float
    margin_db: float
    measured_sf_a: int = 0
    measured_sf_b: int = 0


@dataclass
class UtilizationReport:
    """Instance-level accounting of one hypercycle plus PDS waste over a run."""

    counts: dict[str, int]
    wasted_pds: int
    window_superframes: int
    instances: list[tuple[int, int, str, str]]  # (sf phase, slot, category, owners)

    def total_instances(self) -> int:
        return sum(self.counts.values())


# Category precedence when spatial reuse puts several assignments on the same
# instance; one instance is counted once.
_CATEGORY_ORDER = ("superbeacon", "gbs", "sgts", "gts", "pds", "cap")


class Scheduler:
    """Grant authority bound to one schedule table and one topology."""

    def __init__(
        self,
        table: ScheduleTable,
        topology: Topology,
        policy: str = FIRST_FIT,
        grant_cap: int | None = None,
        capture_margin_db: float = DEFAULT_CAPTURE_MARGIN_DB,
        evidence_window_sf: int = DEFAULT_EVIDENCE_WINDOW_SF,
    ) -> None:
        if policy not in (FIRST_FIT, SPREAD):
            raise ValueError(f"unknown placement policy {policy!r}")
        self.table = table
        self.topology = topology
        self.policy = policy
        self.grant_cap = grant_cap
        self.capture_margin_db = capture_margin_db
        self.evidence_window_sf = evidence_window_sf
        self.associated: set[int] = set()

    # -- bootstrap ---------------------------------------------------------

    def place_gbs(self, coordinators: list[int] | None = None) -> list[SlotAssignment]:
        """Spread coordinator beacon slots evenly over the superframe.

        With C coordinators, coordinator i (1-based, in ascending node id)
        gets slot floor(16*i/(C+1)); for C <= 15 the slots are distinct and
        never slot 0.  Each coordinator's own superframe is the rotation of
        the global one starting at its beacon slot.
        """
        if coordinators is None:
            coordinators = self.topology.coordinators()
        count = len(coordinators)
        if count == 0:
            return []
        if count >= SLOTS_PER_SUPERFRAME:
            raise ValueError(f"cannot place {count} beacon slots in one superframe")
        placed = []
        for i, node in enumerate(sorted(coordinators), start=1):
            slot = SLOTS_PER_SUPERFRAME * i // (count + 1)
            coordinator_superframe_span(slot)  # refuses slot 0
            placed.append(self.table.add(
                SlotAssignment(Kind.GBS, slot, 0, 0, owner=node)))
        return placed

    # -- placement ---------------------------------------------------------

    def _blocked(self, slot: int, level: int, phase: int, owner: int) -> bool:
        for b in self.table.on_slot(slot):
            if b.kind is Kind.CAP:
                return True  # contention airtime is never granted away
            if not phases_overlap(level, phase, b.level, b.phase):
                continue
            if any(owner == v or self.topology.interferes(owner, v)
                   for v in b.owners()):
                return True
        return False

    def _fits(self, slot: int, req: GtsRequest) -> int | None:
        """First phase at which a slot_count window starting here is free."""
        if slot + req.slot_count > SLOTS_PER_SUPERFRAME:
            return None
        for phase in range(1 << req.level):
            if all(not self._blocked(s, req.level, phase, req.requester)
                   for s in range(slot, slot + req.slot_count)):
                return phase
        return None

    def _candidates(self, req: GtsRequest) -> list[tuple[int, int]]:
        out = []
        for slot in range(1, SLOTS_PER_SUPERFRAME):
            if slot + req.slot_count > SLOTS_PER_SUPERFRAME:
                break
            for phase in range(1 << req.level):
                if all(not self._blocked(s, req.level, phase, req.requester)
                       for s in range(slot, slot + req.slot_count)):
                    out.append((slot, phase))
        return out

    def _instants(self, slot: int, level: int, phase: int) -> list[int]:
        return [SLOTS_PER_SUPERFRAME * k + slot
                for k in range(hypercycle_superframes(self.table.nmax))
                if k % (1 << level) == phase]

    def _spread_key(self, slot: int, phase: int, level: int, existing: list[int]):
        length = SLOTS_PER_SUPERFRAME * hypercycle_superframes(self.table.nmax)
        spacing = length
        for x in self._instants(slot, level, phase):
            for y in existing:
                d = abs(x - y)
                spacing = min(spacing, d, length - d)
        return (-spacing, slot, phase)

    def _place(self, req: GtsRequest, kind: Kind) -> GrantDecision:
        if req.requester not in self.topology.roles:
            raise ValueError(f"unknown requester {req.requester}")
        check_level(req.level, self.table.nmax)
        if not 1 <= req.slot_count < SLOTS_PER_SUPERFRAME:
            raise ValueError(f"bad slot count {req.slot_count}")
        if self.grant_cap is not None:
            held = len(self.table.owned_by(req.requester))
            if held + req.slot_count > self.grant_cap:
                return GrantDecision.deny(
                    Denial.POLICY,
                    f"grant cap {self.grant_cap} reached for node {req.requester}")

        if self.policy == SPREAD:
            existing = []
            for a in self.table.owned_by(req.requester):
                existing.extend(self._instants(a.slot, a.level, a.phase))
            candidates = self._candidates(req)
            if not candidates:
                return GrantDecision.deny(
                    Denial.FULL, "no conflict-free slot window at this level")
            if existing:
                slot, phase = min(
                    candidates,
                    key=lambda c: self._spread_key(c[0], c[1], req.level, existing))
            else:
                slot, phase = candidates[0]
        else:
            found = None
            for slot in range(1, SLOTS_PER_SUPERFRAME):
                phase = self._fits(slot, req)
                if phase is not None:
                    found = (slot, phase)
                    break
            if found is None:
                return GrantDecision.deny(
                    Denial.FULL, "no conflict-free slot window at this level")
            slot, phase = found

        made = tuple(
            self.table.add(SlotAssignment(kind, s, req.level, phase,
                                          owner=req.requester))
            for s in range(slot, slot + req.slot_count))
        log.debug("granted %s to node %d: slot %d level %d phase %d x%d",
                  kind.value, req.requester, slot, req.level, phase, req.slot_count)
        return GrantDecision.grant(made)

    def allocate(self, req: GtsRequest) -> GrantDecision:
        """Grant a GTS, or explain why not.  Deterministic in (table, request)."""
        return self._place(req, Kind.GTS)

    def reserve_pds(self, owner: int, level: int, slot_count: int = 1) -> GrantDecision:
        """Pre-allocate a deterministic association slot for a future joiner."""
        if owner in self.associated:
            return GrantDecision.deny(
                Denial.POLICY, f"node {owner} is already associated")
        return self._place(GtsRequest(owner, level, slot_count), Kind.PDS)

    # -- SGTS --------------------------------------------------------------

    def merge_sgts(self, a: SlotAssignment, b: SlotAssignment,
                   evidence: CaptureEvidence, now_sf: int = 0) -> GrantDecision:
        """Fold two GTS from mutually-distant stars into one shared slot.

        Preconditions (violations raise): both assignments are GTS in the
        table, same level, owners in different stars.  Policy checks (denials):
        evidence must cover both owners, both sides must clear the configured
        margin, and both measurements must be fresh.  The survivor keeps the
        lexicographically smaller (slot, phase); the other slot is freed, so a
        successful merge strictly shrinks the number of occupied instances.
        """
        for x in (a, b):
            if x not in self.table.assignments:
                raise ValueError(f"assignment not in table: {x}")
            if x.kind is not Kind.GTS:
                raise ValueError(f"can only merge GTS assignments, got {x.kind.value}")
        if a.level != b.level:
            raise ValueError("SGTS partners must share a reservation level")
        if a.owner == b.owner:
            raise ValueError("SGTS needs two distinct owners")
        star_a = self.topology.star_of(a.owner)
        star_b = self.topology.star_of(b.owner)
        if star_a == star_b:
            raise ValueError("SGTS partners must live in different stars")

        pair = {evidence.leaf_a, evidence.leaf_b}
        if pair != {a.owner, b.owner}:
            return GrantDecision.deny(
                Denial.POLICY, "evidence does not cover this owner pair")
        if evidence.margin_db != self.capture_margin_db:
            return GrantDecision.deny(
                Denial.POLICY,
                f"evidence margin {evidence.margin_db} dB differs from "
                f"required {self.capture_margin_db} dB")
        for side, delta, sf in (("a", evidence.delta_a_db, evidence.measured_sf_a),
                                ("b", evidence.delta_b_db, evidence.measured_sf_b)):
            if delta < evidence.margin_db:
                return GrantDecision.deny(
                    Denial.POLICY,
                    f"side {side} advantage {delta} dB below margin "
                    f"{evidence.margin_db} dB")
            if now_sf - sf > self.evidence_window_sf:
                return GrantDecision.deny(
                    Denial.POLICY,
                    f"side {side} measurement stale ({now_sf - sf} superframes old)")

        keep, drop = sorted((a, b), key=lambda x: (x.slot, x.phase))
        merged = SlotAssignment(Kind.SGTS, keep.slot, keep.level, keep.phase,
                                owner=keep.owner, partner=drop.owner)
        trial = ScheduleTable(self.table.nmax, [
            x for x in self.table.assignments if x not in (a, b)] + [merged])
        if conflict_check(trial, self.topology.interferes):
            return GrantDecision.deny(
                Denial.FULL, "merged slot would conflict with an existing grant")
        self.table.remove(a)
        self.table.remove(b)
        self.table.add(merged)
        log.debug("merged SGTS: %d+%d on slot %d", merged.owner or -1,
                  merged.partner or -1, merged.slot)
        return GrantDecision.grant((merged,))

    # -- teardown ----------------------------------------------------------

    def release(self, a: SlotAssignment) -> None:
        self.table.remove(a)

    # -- accounting --------------------------------------------------------

    def utilization(self, frame_log: list[tuple[int, int, int]],
                    window_superframes: int) -> UtilizationReport:
        """Classify every hypercycle instance; count PDS instances that went unused.

        `frame_log` rows are (superframe, slot, sender) for reserved-slot
        transmissions.  Category counts cover exactly one hypercycle
        (16 * 2**nmax instances); PDS waste is counted over the full
        `window_superframes` window.
        """
        counts = {c: 0 for c in _CATEGORY_ORDER}
        counts["idle"] = 0
        instances: list[tuple[int, int, str, str]] = []
        for k in range(hypercycle_superframes(self.table.nmax)):
            for slot in range(SLOTS_PER_SUPERFRAME):
                active = self.table.active_at(slot, k)
                if not active:
                    counts["idle"] += 1
                    instances.append((k, slot, "idle", ""))
                    continue
                kinds = {a.kind.value for a in active}
                category = next(c for c in _CATEGORY_ORDER if c in kinds)
                owners = sorted({o for a in active for o in a.owners()})
                counts[category] += 1
                instances.append(
                    (k, slot, category, " ".join(map(str, owners))))

        used = {(sf, slot, sender) for sf, slot, sender in frame_log}
        wasted = 0
        for a in self.table.assignments:
            if a.kind is not Kind.PDS:
                continue
            for k in range(window_superframes):
                if a.occupies(k) and (k, a.slot, a.owner) not in used:
                    wasted += 1
        return UtilizationReport(counts, wasted, window_superframes, instances)
