"""Slot, superframe and reservation arithmetic for the deterministic MAC.

Time is organized in superframes of 16 equal slots.  Slot 0 of every
superframe carries the supercoordinator's beacon; each coordinator owns one
guaranteed beacon slot (GBS) and its own superframe is the rotation of the
global one starting there.  A reservation at level n holds its slot once
every 2**n superframes, so the whole schedule repeats after a hypercycle of
2**nmax superframes.  Everything in this module is integer arithmetic on
(slot, level, phase) triples; no simulation state lives here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

SLOTS_PER_SUPERFRAME = 16
SUPERBEACON_SLOT = 0
DEFAULT_NMAX = 3
MAX_BEACON_ORDER = 14
MAX_NETWORK_SIZE = 64


class Kind(enum.Enum):
    """What a reserved slot instance is for."""

    SUPERBEACON = "superbeacon"
    GBS = "gbs"
    GTS = "gts"
    PDS = "pds"
    SGTS = "sgts"
    CAP = "cap"


class Role(enum.Enum):
    SUPERCOORDINATOR = "supercoordinator"
    COORDINATOR = "coordinator"
    LEAF = "leaf"


def check_beacon_order(bo: int) -> int:
    if not 0 <= bo <= MAX_BEACON_ORDER:
        raise ValueError(f"beacon order {bo} outside [0, {MAX_BEACON_ORDER}]")
    return bo


def slot_ticks(bo: int) -> int:
    """Duration of one slot in ticks (1 tick = one slot at beacon order 0)."""
    return 1 << check_beacon_order(bo)


def superframe_ticks(bo: int) -> int:
    return SLOTS_PER_SUPERFRAME * slot_ticks(bo)


def check_level(level: int, nmax: int = DEFAULT_NMAX) -> int:
    if not 0 <= level <= nmax:
        raise ValueError(f"reservation level {level} outside [0, {nmax}]")
    return level


def hypercycle_superframes(nmax: int = DEFAULT_NMAX) -> int:
    return 1 << nmax


@dataclass(frozen=True)
class SlotAssignment:
    """One reserved slot: held every 2**level superframes, at the given phase.

    `owner` is the transmitting node; SGTS assignments carry a second owner in
    `partner`.  CAP markers have no owner: they flag contention-access slots so
    the allocator and the engine know that airtime is spoken for.
    """

    kind: Kind
    slot: int
    level: int = 0
    phase: int = 0
    owner: int | None = None
    partner: int | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.slot < SLOTS_PER_SUPERFRAME:
            raise ValueError(f"slot {self.slot} outside superframe")
        if self.level < 0:
            raise ValueError("negative reservation level")
        if not 0 <= self.phase < (1 << self.level):
            raise ValueError(
                f"phase {self.phase} not canonical for level {self.level}")
        if self.kind is Kind.SUPERBEACON:
            if self.slot != SUPERBEACON_SLOT or self.level != 0:
                raise ValueError("superbeacon is slot 0 at level 0")
        elif self.slot == SUPERBEACON_SLOT:
            raise ValueError("slot 0 is reserved for the superbeacon")
        if self.kind is Kind.CAP:
            if self.owner is not None or self.partner is not None:
                raise ValueError("CAP slots are not owned")
        elif self.owner is None:
            raise ValueError(f"{self.kind.value} assignment needs an owner")
        if self.kind is Kind.SGTS:
            if self.partner is None or self.partner == self.owner:
                raise ValueError("SGTS needs two distinct owners")
        elif self.partner is not None:
            raise ValueError("only SGTS assignments carry a partner")

    def owners(self) -> tuple[int, ...]:
        if self.owner is None:
            return ()
        if self.partner is None:
            return (self.owner,)
        return (self.owner, self.partner)

    def occupies(self, superframe: int) -> bool:
        """True when this assignment holds its slot in the given superframe."""
        return superframe % (1 << self.level) == self.phase


def phases_overlap(level_a: int, phase_a: int, level_b: int, phase_b: int) -> bool:
    """True when two (level, phase) reservations ever share a superframe.

    Instances lie on superframes k = phase (mod 2**level); the two arithmetic
    progressions intersect exactly when the phases agree modulo the coarser
    period.
    """
    n = min(level_a, level_b)
    return phase_a % (1 << n) == phase_b % (1 << n)


def coordinator_superframe_span(gbs_slot: int) -> list[int]:
    """Global slot numbers of a coordinator's superframe, in its local order.

    A coordinator whose beacon sits at slot i spans slots i, i+1, ... wrapping
    to i-1 mod 16.  Slot 0 is refused: that is the supercoordinator's beacon.
    """
    if not 0 < gbs_slot < SLOTS_PER_SUPERFRAME:
        raise ValueError(f"GBS slot {gbs_slot} invalid")
    return [(gbs_slot + j) % SLOTS_PER_SUPERFRAME for j in range(SLOTS_PER_SUPERFRAME)]


@dataclass
class Topology:
    """Star-of-stars membership plus the pairwise interference relation.

    `interference` is "full" (every pair in range, the default) or "explicit"
    (only the listed unordered pairs interfere).  Distinct stars placed out of
    range of each other are what make slot reuse and SGTS sharing possible.
    """

    roles: dict[int, Role] = field(default_factory=dict)
    parents: dict[int, int] = field(default_factory=dict)
    interference: str = "full"
    pairs: frozenset[frozenset[int]] = frozenset()

    def add(self, node: int, role: Role, parent: int | None = None) -> None:
        if node in self.roles:
            raise ValueError(f"duplicate node id {node}")
        self.roles[node] = role
        if parent is not None:
            self.parents[node] = parent

    def supercoordinator(self) -> int:
        scs = [n for n, r in self.roles.items() if r is Role.SUPERCOORDINATOR]
        if len(scs) != 1:
            raise ValueError(f"expected one supercoordinator, found {len(scs)}")
        return scs[0]

    def coordinators(self) -> list[int]:
        return sorted(n for n, r in self.roles.items() if r is Role.COORDINATOR)

    def leaves(self) -> list[int]:
        return sorted(n for n, r in self.roles.items() if r is Role.LEAF)

    def star_of(self, node: int) -> int | None:
        """Coordinator id of the star a node belongs to (None for the SC)."""
        role = self.roles[node]
        if role is Role.SUPERCOORDINATOR:
            return None
        if role is Role.COORDINATOR:
            return node
        return self.parents[node]

    def interferes(self, a: int, b: int) -> bool:
        if a == b:
            return True
        if self.interference == "full":
            return True
        return frozenset((a, b)) in self.pairs

    def validate(self) -> list[str]:
        problems: list[str] = []
        scs = sorted(n for n, r in self.roles.items() if r is Role.SUPERCOORDINATOR)
        if len(scs) != 1:
            problems.append(
                f"network needs exactly one supercoordinator, found {len(scs)}"
                + (f" (nodes {', '.join(map(str, scs))})" if scs else ""))
        if len(self.roles) > MAX_NETWORK_SIZE:
            problems.append(
                f"network size {len(self.roles)} exceeds cap {MAX_NETWORK_SIZE}")
        for node, role in sorted(self.roles.items()):
            parent = self.parents.get(node)
            if role is Role.SUPERCOORDINATOR:
                if parent is not None:
                    problems.append(f"supercoordinator {node} must not have a parent")
            elif parent is None:
                problems.append(f"{role.value} {node} has no parent")
            elif parent not in self.roles:
                problems.append(f"node {node} has unknown parent {parent}")
            elif role is Role.COORDINATOR and self.roles[parent] is not Role.SUPERCOORDINATOR:
                problems.append(f"coordinator {node} must attach to the supercoordinator")
            elif role is Role.LEAF and self.roles[parent] is not Role.COORDINATOR:
                problems.append(f"leaf {node} must attach to a coordinator")
        if self.interference not in ("full", "explicit"):
            problems.append(f"unknown interference mode {self.interference!r}")
        for pair in sorted(self.pairs, key=sorted):
            for n in sorted(pair):
                if n not in self.roles:
                    problems.append(f"interference pair names unknown node {n}")
        return problems


@dataclass
class ScheduleTable:
    """The set of slot assignments the supercoordinator has handed out."""

    nmax: int = DEFAULT_NMAX
    assignments: list[SlotAssignment] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 <= self.nmax <= 10:
            raise ValueError(f"nmax {self.nmax} outside [0, 10]")

    def add(self, a: SlotAssignment) -> SlotAssignment:
        check_level(a.level, self.nmax)
        if a.kind is Kind.SUPERBEACON and any(
                x.kind is Kind.SUPERBEACON for x in self.assignments):
            raise ValueError("duplicate superbeacon assignment")
        self.assignments.append(a)
        return a

    def remove(self, a: SlotAssignment) -> None:
        try:
            self.assignments.remove(a)
        except ValueError:
            raise ValueError(f"assignment not in table: {a}") from None

    def owned_by(self, node: int) -> list[SlotAssignment]:
        return [a for a in self.assignments if node in a.owners()]

    def on_slot(self, slot: int) -> list[SlotAssignment]:
        return [a for a in self.assignments if a.slot == slot]

    def active_at(self, slot: int, superframe: int) -> list[SlotAssignment]:
        return [a for a in self.assignments
                if a.slot == slot and a.occupies(superframe)]

    def cap_slots(self) -> list[int]:
        return sorted(a.slot for a in self.assignments if a.kind is Kind.CAP)

    def gbs_slot(self, coordinator: int) -> int | None:
        for a in self.assignments:
            if a.kind is Kind.GBS and a.owner == coordinator:
                return a.slot
        return None


def conflict_check(table: ScheduleTable, interferes) -> list[tuple[SlotAssignment, SlotAssignment]]:
    """All pairs of owned assignments that ever collide on the air.

    Two assignments conflict when they share a slot, their phase progressions
    intersect, and some owner of one interferes with some owner of the other
    (a node trivially interferes with itself).  CAP markers are skipped: they
    carry no transmitter of their own.  The phase test is pure arithmetic, so
    the check never enumerates the hypercycle.
    """
    owned = [a for a in table.assignments if a.owners()]
    conflicts: list[tuple[SlotAssignment, SlotAssignment]] = []
    for i, a in enumerate(owned):
        for b in owned[i + 1:]:
            if a.slot != b.slot:
                continue
            if not phases_overlap(a.level, a.phase, b.level, b.phase):
                continue
            if any(u == v or interferes(u, v)
                   for u in a.owners() for v in b.owners()):
                conflicts.append((a, b))
    return conflicts
