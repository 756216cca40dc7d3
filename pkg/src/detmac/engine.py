"""Slot-synchronous discrete-event simulation of the whole network.

One tick is one beacon-order-zero slot; a slot at beacon order `bo` lasts
2**bo ticks and frames are delivered at the end of the slot they occupy.
The loop only visits slots where something can happen (a wake, a scheduled
transmission, a contention region with pending attempts), so runs whose
traffic is sparse cost almost nothing regardless of duration.

Determinism is a hard guarantee: node wakes and frame deliveries are
processed in ascending node id, every random draw comes from a named stream
derived from the scenario seed, and no wall-clock value ever enters the
state.  Two runs of the same scenario with the same seed produce equal
metrics, byte for byte once rendered.
"""

from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass, field, replace

from .core import (
    DEFAULT_NMAX,
    SLOTS_PER_SUPERFRAME,
    SUPERBEACON_SLOT,
    Kind,
    Role,
    ScheduleTable,
    SlotAssignment,
    Topology,
    check_beacon_order,
    conflict_check,
    hypercycle_superframes,
    slot_ticks,
)
from .csma import CHANNEL_ACCESS_FAILURE, CsmaAttempt, CsmaParams, periods_per_slot
from .protocol import (
    AssociationRequest,
    Beacon,
    CoordinatorMachine,
    DataFrame,
    GtsRequestFrame,
    LeafMachine,
    SupercoordinatorMachine,
)
from .radio import RadioEnvironment, Reception, resolve_slot
from .scheduler import FIRST_FIT, GtsRequest, Scheduler, UtilizationReport

log = logging.getLogger(__name__)

UNIFORM = "uniform"


class ScenarioInvalid(ValueError):
    """The scenario fails validation; `issues` lists every violation."""

    def __init__(self, issues: list[str]) -> None:
        super().__init__("; ".join(issues))
        self.issues = issues


# -- scenario ------------------------------------------------------------------


@dataclass(frozen=True)
class NodeSpec:
    node: int
    role: Role
    parent: int | None = None


@dataclass(frozen=True)
class PdsSpec:
    node: int
    level: int = 0
    slot_count: int = 1


@dataclass(frozen=True)
class GtsSpec:
    node: int
    level: int = 0
    slot_count: int = 1


@dataclass(frozen=True)
class SgtsSpec:
    node_a: int
    node_b: int
    level: int = 0


@dataclass(frozen=True)
class FlowSpec:
    """Periodic data in the node's own reserved instances, or one-shot CAP data."""

    node: int
    period_sf: int = 1
    start_sf: int = 0
    via: str = "owned"  # "owned" | "cap"


@dataclass(frozen=True)
class RequestSpec:
    """A GTS request injected at a given superframe."""

    node: int
    at_sf: int
    level: int = 0
    slot_count: int = 1
    priority: int = 0


@dataclass(frozen=True)
class RadioSpec:
    default_dbm: float | None = -55.0
    entries: tuple[tuple[int, int, float], ...] = ()
    capture_margin_db: float = 10.0
    sync_offset_bias_db: float = 0.0
    loss: str = "ideal"
    error_rate: float = 0.0
    noise_sigma_db: float = 0.0


@dataclass
class Scenario:
    nodes: list[NodeSpec] = field(default_factory=list)
    interference: str = "full"
    pairs: list[tuple[int, int]] = field(default_factory=list)
    bo: int = 3
    nmax: int = DEFAULT_NMAX
    policy: str = FIRST_FIT
    grant_cap: int | None = None
    cap_slots: tuple[int, ...] = ()
    gbs: dict[int, int] | None = None  # None: place automatically
    pds: list[PdsSpec] = field(default_factory=list)
    gts: list[GtsSpec] = field(default_factory=list)
    sgts: list[SgtsSpec] = field(default_factory=list)
    flows: list[FlowSpec] = field(default_factory=list)
    requests: list[RequestSpec] = field(default_factory=list)
    power_on: dict[int, int | str] = field(default_factory=dict)
    radio: RadioSpec = field(default_factory=RadioSpec)
    csma: CsmaParams = field(default_factory=CsmaParams)
    seed: int = 0
    duration_sf: int = 8
    stop_when_associated: bool = False
    trace: bool = False
    evidence_window_sf: int = 4

    def topology(self) -> Topology:
        topo = Topology(interference=self.interference,
                        pairs=frozenset(frozenset(p) for p in self.pairs))
        for spec in self.nodes:
            if spec.node not in topo.roles:
                topo.add(spec.node, spec.role, spec.parent)
        return topo

    def validate(self) -> list[str]:
        issues: list[str] = []
        seen: set[int] = set()
        for spec in self.nodes:
            if spec.node in seen:
                issues.append(f"duplicate node id {spec.node}")
            seen.add(spec.node)
        topo = self.topology()
        issues.extend(topo.validate())
        try:
            check_beacon_order(self.bo)
        except ValueError as e:
            issues.append(str(e))
        if not 0 <= self.nmax <= 10:
            issues.append(f"nmax {self.nmax} outside [0, 10]")
        if self.duration_sf < 1:
            issues.append(f"duration {self.duration_sf} must be at least 1 superframe")
        for slot in self.cap_slots:
            if not 0 < slot < SLOTS_PER_SUPERFRAME:
                issues.append(f"CAP slot {slot} outside [1, 15]")
        if len(set(self.cap_slots)) != len(self.cap_slots):
            issues.append("duplicate CAP slot")
        gbs = self.gbs
        if gbs is None and not issues:
            try:
                count = len(topo.coordinators())
                gbs = {c: SLOTS_PER_SUPERFRAME * i // (count + 1)
                       for i, c in enumerate(sorted(topo.coordinators()), start=1)}
            except ValueError:
                gbs = {}
        if gbs:
            slots = list(gbs.values())
            if len(set(slots)) != len(slots):
                issues.append("coordinators share a beacon slot")
            for node, slot in sorted(gbs.items()):
                if node in seen and topo.roles.get(node) is not Role.COORDINATOR:
                    issues.append(f"GBS on non-coordinator node {node}")
                if not 0 < slot < SLOTS_PER_SUPERFRAME:
                    issues.append(f"beacon slot {slot} for node {node} outside [1, 15]")
                elif slot in self.cap_slots:
                    issues.append(f"slot {slot} is both CAP and a beacon slot")
        for spec in self.pds + self.gts:
            if spec.node not in seen:
                issues.append(f"reservation for unknown node {spec.node}")
            if not 0 <= spec.level <= self.nmax:
                issues.append(f"reservation level {spec.level} outside [0, {self.nmax}]")
        for spec in self.sgts:
            for n in (spec.node_a, spec.node_b):
                if n not in seen:
                    issues.append(f"shared slot for unknown node {n}")
            if spec.node_a in seen and spec.node_b in seen and not issues:
                if topo.star_of(spec.node_a) == topo.star_of(spec.node_b):
                    issues.append(
                        f"shared slot partners {spec.node_a} and {spec.node_b} "
                        "are in the same star")
        for flow in self.flows:
            if flow.node not in seen:
                issues.append(f"flow for unknown node {flow.node}")
            if flow.period_sf < 1:
                issues.append(f"flow period {flow.period_sf} must be at least 1")
            if flow.via not in ("owned", "cap"):
                issues.append(f"unknown flow path {flow.via!r}")
        for req in self.requests:
            if req.node not in seen:
                issues.append(f"request for unknown node {req.node}")
            if req.at_sf < 0:
                issues.append("request superframe must be non-negative")
        try:
            quantum = slot_ticks(self.bo)
        except ValueError:
            quantum = 1  # the beacon-order issue is already recorded above
        for node, when in sorted(self.power_on.items()):
            if node not in seen:
                issues.append(f"power-on for unknown node {node}")
            elif topo.roles.get(node) is Role.SUPERCOORDINATOR:
                issues.append("the supercoordinator cannot join its own network")
            if isinstance(when, str):
                if when != UNIFORM:
                    issues.append(f"bad power-on time {when!r}")
            elif when < 0 or when % quantum != 0:
                issues.append(
                    f"power-on tick {when} for node {node} must be a "
                    "non-negative slot boundary")
        if self.radio.loss not in ("ideal", "lossy"):
            issues.append(f"unknown loss model {self.radio.loss!r}")
        if self.radio.loss == "lossy" and not 0 < self.radio.error_rate < 1:
            issues.append("lossy model needs an error rate in (0, 1)")
        return issues


# -- metrics -------------------------------------------------------------------


@dataclass(frozen=True)
class LatencySample:
    node: int
    mode: str
    latency_ticks: int
    completed_tick: int

    @property
    def deterministic(self) -> bool:
        return self.mode == "pds"


_COUNTERS = (
    "transmitted", "delivered", "collided", "lost",
    "csma_failures", "superbeacons", "beacons",
    "assoc_requests", "grants", "denials",
    "malformed_dropped", "desyncs",
)


@dataclass
class MetricsBundle:
    seed: int
    bo: int
    nmax: int
    duration_sf: int
    latencies: list[LatencySample] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=lambda: {c: 0 for c in _COUNTERS})
    utilization: UtilizationReport | None = None
    frame_log: list[tuple[int, int, int]] = field(default_factory=list)
    decode_counts: dict[tuple[int, int, int], int] = field(default_factory=dict)
    tx_counts: dict[tuple[int, int], int] = field(default_factory=dict)
    assoc_traces: dict[int, list[tuple[int, str]]] = field(default_factory=dict)
    assoc_modes: dict[int, str] = field(default_factory=dict)
    trace: list[str] = field(default_factory=list)

    def conservation(self) -> tuple[int, int]:
        c = self.counters
        return c["transmitted"], c["delivered"] + c["collided"] + c["lost"]


def latency_histogram(samples: list[int], bin_ticks: int) -> list[tuple[int, int, int, float]]:
    """Bin latencies into (lo, hi, count, proportion) rows; empty in, empty out."""
    if bin_ticks <= 0:
        raise ValueError("bin width must be positive")
    if not samples:
        return []
    lo_bin = min(samples) // bin_ticks
    hi_bin = max(samples) // bin_ticks
    counts = [0] * (hi_bin - lo_bin + 1)
    for s in samples:
        counts[s // bin_ticks - lo_bin] += 1
    total = len(samples)
    return [((lo_bin + i) * bin_ticks, (lo_bin + i + 1) * bin_ticks, c, c / total)
            for i, c in enumerate(counts)]


# -- engine --------------------------------------------------------------------


@dataclass
class _ReservedTx:
    node: int
    frame: object
    dst: int | None
    assignment: SlotAssignment


@dataclass
class _CapTx:
    node: int
    frame: object
    dst: int
    start: int
    end: int
    with_ack: bool
    attempt: CsmaAttempt | None


class Engine:
    """One scenario, one run.  Construct, call run(), read the bundle."""

    def __init__(self, scenario: Scenario) -> None:
        issues = scenario.validate()
        if issues:
            raise ScenarioInvalid(issues)
        self.sc = scenario
        self.bo = scenario.bo
        self.topology = scenario.topology()
        self.table = ScheduleTable(scenario.nmax)
        self.scheduler = Scheduler(
            self.table, self.topology, scenario.policy, scenario.grant_cap,
            scenario.radio.capture_margin_db, scenario.evidence_window_sf)
        self.env = RadioEnvironment(
            power_dbm={(tx, rx): p for tx, rx, p in scenario.radio.entries},
            default_dbm=scenario.radio.default_dbm,
            capture_margin_db=scenario.radio.capture_margin_db,
            sync_offset_bias_db=scenario.radio.sync_offset_bias_db,
            loss=scenario.radio.loss,
            error_rate=scenario.radio.error_rate,
            noise_sigma_db=scenario.radio.noise_sigma_db)
        self.metrics = MetricsBundle(
            scenario.seed, scenario.bo, scenario.nmax, scenario.duration_sf)
        self.end_slot = scenario.duration_sf * SLOTS_PER_SUPERFRAME
        self._radio_rng = random.Random(f"{scenario.seed}:radio")
        self._node_rng: dict[int, random.Random] = {}

        self._wakes: dict[int, list[tuple[int, str]]] = {}
        self._events: dict[int, list[tuple]] = {}       # engine-internal events
        self._reserved: dict[int, list[_ReservedTx]] = {}
        self._deliveries: dict[int, list[tuple[int, object, int]]] = {}
        self._tx_done: dict[int, list[tuple[int, int]]] = {}
        self._heap: list[int] = []
        self._armed: set[int] = set()
        self._done_slots = -1
        self._csma: list[CsmaAttempt] = []
        self._region_id = 0
        self._attempt_region: dict[int, int] = {}       # id(attempt) -> enqueue region
        self._stop = False
        self._flow_seq = 0
        self._flow_pending: dict[int, int] = {}

        # slot context, set while a slot is processed
        self.slot_number = 0
        self.superframe = 0
        self.slot_in_sf = 0
        self.slot_start_tick = 0
        self.slot_end_tick = 0

        self._build()

    # -- construction ----------------------------------------------------

    def rng(self, name) -> random.Random:
        key = f"{self.sc.seed}:{name}"
        if name not in self._node_rng:
            self._node_rng[name] = random.Random(key)
        return self._node_rng[name]

    def _build(self) -> None:
        sc = self.sc
        sc_id = self.topology.supercoordinator()
        self.superbeacon_assignment = self.table.add(
            SlotAssignment(Kind.SUPERBEACON, SUPERBEACON_SLOT, owner=sc_id))

        joiners = set(sc.power_on)
        for n in self.topology.roles:
            if n not in joiners:
                self.scheduler.associated.add(n)

        if sc.gbs is None:
            self.scheduler.place_gbs()
        else:
            for node, slot in sorted(sc.gbs.items()):
                self.table.add(SlotAssignment(Kind.GBS, slot, 0, 0, owner=node))
        for slot in sorted(sc.cap_slots):
            self.table.add(SlotAssignment(Kind.CAP, slot))
        for spec in sc.gts:
            got = self.scheduler.allocate(
                GtsRequest(spec.node, spec.level, spec.slot_count))
            if not got.granted:
                raise ScenarioInvalid(
                    [f"cannot place GTS for node {spec.node}: {got.detail}"])
        for spec in sc.pds:
            was_joining = spec.node in joiners
            if was_joining:
                self.scheduler.associated.discard(spec.node)
            got = self.scheduler.reserve_pds(spec.node, spec.level, spec.slot_count)
            if not got.granted:
                raise ScenarioInvalid(
                    [f"cannot place PDS for node {spec.node}: {got.detail}"])
            if not was_joining:
                self.scheduler.associated.add(spec.node)
        for spec in sc.sgts:
            self._force_sgts(spec)
        clashes = conflict_check(self.table, self.topology.interferes)
        if clashes:
            raise ScenarioInvalid(
                [f"schedule conflict on slot {a.slot}: {a.kind.value}/{a.owners()} "
                 f"vs {b.kind.value}/{b.owners()}" for a, b in clashes])

        self.machines: dict[int, object] = {}
        for node, role in sorted(self.topology.roles.items()):
            if role is Role.SUPERCOORDINATOR:
                self.machines[node] = SupercoordinatorMachine(node)
            elif role is Role.COORDINATOR:
                slot = self.table.gbs_slot(node)
                if slot is None:
                    raise ScenarioInvalid([f"coordinator {node} has no beacon slot"])
                self.machines[node] = CoordinatorMachine(
                    node, self.topology.parents[node], slot, node in joiners)
            else:
                self.machines[node] = LeafMachine(
                    node, self.topology.parents[node], node in joiners)
            pds = [a for a in self.table.owned_by(node) if a.kind is Kind.PDS]
            if pds and role is not Role.SUPERCOORDINATOR:
                self.machines[node].pds = pds[0]

        self.wake_at_slot(0, 0, sc_id, "beacon")
        for node, slot in sorted((a.owner, a.slot) for a in self.table.assignments
                                 if a.kind is Kind.GBS):
            self.wake_at_slot(0, slot, node, "beacon")

        poweron_rng = self.rng("poweron")
        self._join_pending: set[int] = set()
        for node, when in sorted(sc.power_on.items()):
            if when == UNIFORM:
                s = poweron_rng.randrange(
                    SLOTS_PER_SUPERFRAME * hypercycle_superframes(sc.nmax))
            else:
                s = int(when) // slot_ticks(self.bo)
            self._push_wake(s, node, "power_on")
            self._join_pending.add(node)

        self._cap_regions: list[tuple[int, int]] = []  # (start slot in sf, length)
        run: list[int] = []
        for slot in sorted(sc.cap_slots):
            if run and slot == run[-1] + 1:
                run.append(slot)
            else:
                if run:
                    self._cap_regions.append((run[0], len(run)))
                run = [slot]
        if run:
            self._cap_regions.append((run[0], len(run)))

        for idx, flow in enumerate(sc.flows):
            self._schedule_flow(idx, flow.start_sf)
        for idx, req in enumerate(sc.requests):
            self._push_event(req.at_sf * SLOTS_PER_SUPERFRAME, ("request", idx))

    def _force_sgts(self, spec: SgtsSpec) -> None:
        got = self.scheduler.allocate(GtsRequest(spec.node_a, spec.level))
        if not got.granted:
            raise ScenarioInvalid(
                [f"cannot place shared slot for {spec.node_a}/{spec.node_b}: "
                 f"{got.detail}"])
        a = got.assignment
        self.table.remove(a)
        self.table.add(SlotAssignment(Kind.SGTS, a.slot, a.level, a.phase,
                                      owner=spec.node_a, partner=spec.node_b))

    # -- scheduling primitives (the ctx interface) -------------------------

    def _arm(self, s: int) -> None:
        if s not in self._armed and self._done_slots < s < self.end_slot:
            self._armed.add(s)
            heapq.heappush(self._heap, s)

    def _push_wake(self, s: int, node: int, tag: str) -> None:
        if s >= self.end_slot or s <= self._done_slots:
            return
        self._wakes.setdefault(s, []).append((node, tag))
        self._arm(s)

    def _push_event(self, s: int, event: tuple) -> None:
        if s >= self.end_slot or s <= self._done_slots:
            return
        self._events.setdefault(s, []).append(event)
        self._arm(s)

    def wake_at_slot(self, sf: int, slot: int, node: int, tag: str) -> None:
        self._push_wake(sf * SLOTS_PER_SUPERFRAME + slot, node, tag)

    def wake_at_instance(self, assignment: SlotAssignment, node: int, tag: str) -> None:
        """Wake the node at the next occupied instance strictly after this slot."""
        period = 1 << assignment.level
        sf = self.superframe
        if assignment.slot <= self.slot_in_sf:
            sf += 1
        while sf % period != assignment.phase:
            sf += 1
        self.wake_at_slot(sf, assignment.slot, node, tag)

    def send_reserved(self, node: int, frame: object, dst: int | None,
                      assignment: SlotAssignment) -> None:
        assert assignment in self.table.assignments, "transmission outside the table"
        assert assignment.slot == self.slot_in_sf and \
            assignment.occupies(self.superframe), \
            f"node {node} transmitting outside its instance"
        assert node in assignment.owners(), \
            f"node {node} does not own slot {assignment.slot}"
        pending = self._reserved.setdefault(self.slot_number, [])
        mine = next((t for t in pending if t.node == node), None)
        if mine is not None:
            # one radio, one frame per slot: control traffic preempts data
            if isinstance(frame, DataFrame):
                return
            pending.remove(mine)
        pending.append(_ReservedTx(node, frame, dst, assignment))
        self._arm_current()

    def _arm_current(self) -> None:
        # the current slot is already being processed; nothing to do
        pass

    def enqueue_csma(self, node: int, frame: object, dst: int,
                     with_ack: bool = False) -> None:
        attempt = CsmaAttempt(node, frame, dst, self.sc.csma,
                              self.rng(node), with_ack)
        self._csma.append(attempt)
        self._attempt_region[id(attempt)] = self._region_id
        self._arm_next_region()

    def gbs_assignment(self, node: int) -> SlotAssignment:
        for a in self.table.assignments:
            if a.kind is Kind.GBS and a.owner == node:
                return a
        raise KeyError(node)

    def count(self, name: str) -> None:
        self.metrics.counters[name] = self.metrics.counters.get(name, 0) + 1

    def node_associated(self, node: int) -> None:
        m = self.machines[node]
        sample = LatencySample(node, m.assoc.mode, m.assoc.latency_ticks(),
                               m.assoc.associated_tick)
        self.metrics.latencies.append(sample)
        self._join_pending.discard(node)
        if self.sc.stop_when_associated and not self._join_pending:
            self._stop = True
        if self.sc.trace:
            self.metrics.trace.append(
                f"sf={self.superframe} slot={self.slot_in_sf} "
                f"node={node} associated via {m.assoc.mode} "
                f"after {sample.latency_ticks} ticks")

    # -- flows and requests ------------------------------------------------

    def _owned_instances(self, node: int, sf: int) -> list[SlotAssignment]:
        return sorted(
            (a for a in self.table.owned_by(node)
             if a.kind in (Kind.GTS, Kind.PDS, Kind.SGTS) and a.occupies(sf)),
            key=lambda a: a.slot)

    def _owned_instance(self, node: int, sf: int) -> SlotAssignment | None:
        got = self._owned_instances(node, sf)
        return got[0] if got else None

    def _schedule_flow(self, idx: int, from_sf: int) -> None:
        flow = self.sc.flows[idx]
        sf = from_sf
        while sf < self.sc.duration_sf:
            if (sf - flow.start_sf) % flow.period_sf == 0:
                if flow.via == "cap":
                    self._push_event(sf * SLOTS_PER_SUPERFRAME, ("flow_cap", idx))
                    return
                instances = self._owned_instances(flow.node, sf)
                if instances:
                    # the flow fills every instance the node holds that superframe
                    self._flow_pending[idx] = len(instances)
                    for a in instances:
                        self._push_event(
                            sf * SLOTS_PER_SUPERFRAME + a.slot, ("flow", idx))
                    return
            sf += 1

    def _dispatch_event(self, event: tuple) -> None:
        kind = event[0]
        if kind == "flow":
            idx = event[1]
            flow = self.sc.flows[idx]
            here = [a for a in self._owned_instances(flow.node, self.superframe)
                    if a.slot == self.slot_in_sf]
            if here:
                dst = self.topology.parents.get(flow.node)
                self._flow_seq += 1
                self.send_reserved(flow.node, DataFrame(
                    flow.node, dst if dst is not None else -1, self._flow_seq),
                    dst, here[0])
            self._flow_pending[idx] -= 1
            if self._flow_pending[idx] <= 0:
                self._schedule_flow(idx, self.superframe + flow.period_sf)
        elif kind == "flow_cap":
            idx = event[1]
            flow = self.sc.flows[idx]
            dst = self.topology.parents.get(flow.node)
            if dst is not None and self.machines[flow.node].powered:
                self._flow_seq += 1
                self.enqueue_csma(flow.node, DataFrame(
                    flow.node, dst, self._flow_seq), dst, with_ack=True)
            self._schedule_flow(idx, self.superframe + flow.period_sf)
        elif kind == "request":
            idx = event[1]
            spec = self.sc.requests[idx]
            req = GtsRequest(spec.node, spec.level, spec.slot_count, spec.priority)
            machine = self.machines[spec.node]
            if isinstance(machine, CoordinatorMachine):
                machine.queue_own_request(self, req)
            else:
                self._leaf_request(idx)
        elif kind == "leaf_request":
            self._leaf_request(event[1])
        elif kind == "leaf_request_tx":
            idx = event[1]
            spec = self.sc.requests[idx]
            a = self._owned_instance(spec.node, self.superframe)
            if a is not None and a.slot == self.slot_in_sf:
                req = GtsRequest(spec.node, spec.level, spec.slot_count,
                                 spec.priority,
                                 relayed_by=self.topology.parents.get(spec.node))
                self.send_reserved(spec.node, GtsRequestFrame(req),
                                   self.topology.parents[spec.node], a)

    def _leaf_request(self, idx: int) -> None:
        spec = self.sc.requests[idx]
        a = self._owned_instance(spec.node, self.superframe)
        req = GtsRequest(spec.node, spec.level, spec.slot_count, spec.priority,
                         relayed_by=self.topology.parents.get(spec.node))
        if a is not None and a.slot > self.slot_in_sf:
            self._push_event(
                self.superframe * SLOTS_PER_SUPERFRAME + a.slot,
                ("leaf_request_tx", idx))
        elif a is None:
            self.enqueue_csma(spec.node, GtsRequestFrame(req),
                              self.topology.parents[spec.node])
        else:
            self._push_event(
                (self.superframe + 1) * SLOTS_PER_SUPERFRAME,
                ("leaf_request", idx))

    # -- CAP contention ------------------------------------------------------

    def _region_starts(self) -> list[int]:
        return [start for start, _ in self._cap_regions]

    def _arm_next_region(self) -> None:
        if not self._cap_regions:
            return
        for offset in range(1, 2 * SLOTS_PER_SUPERFRAME + 1):
            s = self.slot_number + offset
            if s >= self.end_slot:
                return
            if s % SLOTS_PER_SUPERFRAME in self._region_starts():
                self._push_event(s, ("cap_region",))
                return

    def _run_cap_region(self) -> None:
        start_slot = self.slot_in_sf
        length = dict(self._cap_regions)[start_slot]
        self._region_id += 1
        active = [a for a in self._csma
                  if a.state in ("backoff", "cca", "deferred")
                  and self._attempt_region[id(a)] < self._region_id
                  and self.machines[a.node].powered]
        if not active:
            if any(a.state in ("backoff", "cca", "deferred") for a in self._csma):
                self._arm_next_region()
            return
        for a in active:
            a.new_region()
        ppslot = periods_per_slot(self.bo)
        total = ppslot * length
        txs: list[_CapTx] = []

        def busy_for(node: int, p: int) -> bool:
            return any(t.start <= p < t.end and t.node != node
                       and self.env.in_range(t.node, node) for t in txs)

        for p in range(total):
            for a in sorted(active, key=lambda x: x.node):
                if a.state not in ("backoff", "cca"):
                    continue
                got = a.step(busy_for(a.node, p), total - p)
                if got == "transmit":
                    txs.append(_CapTx(a.node, a.frame, a.dst, p + 1,
                                      p + 1 + a.airtime(), a.with_ack, a))
                elif got == CHANNEL_ACCESS_FAILURE:
                    self.count("csma_failures")
                    end_slot = self.slot_number + p // ppslot
                    self._tx_done.setdefault(end_slot, []).append((a.node, -1))
                    self._arm(end_slot)
            for t in txs:
                if t.end - 1 == p and t.with_ack and t.attempt is not None:
                    if self._cap_decoded(t, txs) and self.machines[t.dst].powered:
                        txs.append(_CapTx(t.dst, ("ack", t.node), t.node,
                                          p + 1, p + 1 + self.sc.csma.ack_periods,
                                          False, None))

        for t in txs:
            self.count("transmitted")
            end_slot = self.slot_number + (t.end - 1) // ppslot
            self.metrics.tx_counts[(t.node, end_slot % SLOTS_PER_SUPERFRAME)] = \
                self.metrics.tx_counts.get(
                    (t.node, end_slot % SLOTS_PER_SUPERFRAME), 0) + 1
            decoded = self._cap_decoded(t, txs) and self.machines[t.dst].powered
            overlapped = any(
                o is not t and o.start < t.end and t.start < o.end
                and self.env.in_range(o.node, t.dst) for o in txs) or \
                any(o is not t and o.node == t.dst
                    and o.start < t.end and t.start < o.end for o in txs)
            if decoded:
                self.count("delivered")
                key = (t.dst, t.node, end_slot % SLOTS_PER_SUPERFRAME)
                self.metrics.decode_counts[key] = \
                    self.metrics.decode_counts.get(key, 0) + 1
                if not isinstance(t.frame, tuple):
                    self._deliveries.setdefault(end_slot, []).append(
                        (t.dst, t.frame, t.node))
                    self._arm(end_slot)
            elif overlapped:
                self.count("collided")
            else:
                self.count("lost")
            if t.attempt is not None:
                self._tx_done.setdefault(end_slot, []).append((t.node, end_slot))
                self._arm(end_slot)

        if any(a.state in ("backoff", "cca", "deferred") for a in self._csma):
            self._arm_next_region()
        self._csma = [a for a in self._csma
                      if a.state in ("backoff", "cca", "deferred")]

    def _cap_decoded(self, t: _CapTx, txs: list[_CapTx]) -> bool:
        if not self.env.in_range(t.node, t.dst):
            return False
        if any(o.node == t.dst and o is not t and
               o.start < t.end and t.start < o.end for o in txs):
            return False  # destination was itself transmitting
        contest = [Reception(o.node, self.env.rx_power(o.node, t.dst),
                             o.start, o.frame)
                   for o in txs
                   if o.start < t.end and t.start < o.end
                   and self.env.in_range(o.node, t.dst)]
        winner = resolve_slot(contest, self.env, self._radio_rng)
        return winner is not None and winner.tx == t.node and winner.start == t.start

    # -- reserved-slot resolution ---------------------------------------------

    def _resolve_reserved(self, txs: list[_ReservedTx]) -> None:
        transmitters = {t.node for t in txs}
        slot = self.slot_in_sf
        for t in txs:
            self.count("transmitted")
            self.metrics.tx_counts[(t.node, slot)] = \
                self.metrics.tx_counts.get((t.node, slot), 0) + 1
            self.metrics.frame_log.append((self.superframe, slot, t.node))
        decoded_at: dict[int, _ReservedTx] = {}
        contested: set[int] = set()
        for r, machine in sorted(self.machines.items()):
            if r in transmitters or not machine.powered:
                continue
            contest = [Reception(t.node, self.env.rx_power(t.node, r), 0, t)
                       for t in txs if self.env.in_range(t.node, r)]
            if not contest:
                continue
            if len(contest) > 1:
                contested.add(r)
            winner = resolve_slot(contest, self.env, self._radio_rng)
            if winner is not None:
                decoded_at[r] = winner.frame
                key = (r, winner.tx, slot)
                self.metrics.decode_counts[key] = \
                    self.metrics.decode_counts.get(key, 0) + 1
        for t in txs:
            if t.dst is not None:
                if decoded_at.get(t.dst) is t:
                    self.count("delivered")
                    self._deliveries.setdefault(self.slot_number, []).append(
                        (t.dst, t.frame, t.node))
                elif t.dst in contested or t.dst in transmitters:
                    self.count("collided")
                else:
                    self.count("lost")
            else:
                listeners = [r for r, f in decoded_at.items() if f is t]
                if listeners:
                    self.count("delivered")
                    for r in listeners:
                        self._deliveries.setdefault(self.slot_number, []).append(
                            (r, t.frame, t.node))
                elif contested:
                    self.count("collided")
                else:
                    self.count("lost")

    # -- main loop --------------------------------------------------------------

    def _enter_slot(self, s: int) -> None:
        self.slot_number = s
        self.superframe, self.slot_in_sf = divmod(s, SLOTS_PER_SUPERFRAME)
        self.slot_start_tick = s * slot_ticks(self.bo)
        self.slot_end_tick = (s + 1) * slot_ticks(self.bo)

    def run(self) -> MetricsBundle:
        completed_sf = 0
        while self._heap:
            s = heapq.heappop(self._heap)
            self._armed.discard(s)
            if s >= self.end_slot:
                break
            if s <= self._done_slots:
                continue
            self._done_slots = s
            self._enter_slot(s)
            completed_sf = max(completed_sf, self.superframe + 1)

            for node, tag in sorted(self._wakes.pop(s, ())):
                self.machines[node].on_wake(self, tag)
            events = self._events.pop(s, [])
            for event in events:
                if event[0] != "cap_region":
                    self._dispatch_event(event)
            if any(e[0] == "cap_region" for e in events):
                self._run_cap_region()
            txs = self._reserved.pop(s, [])
            if txs:
                self._resolve_reserved(txs)
            for r, frame, sender in sorted(
                    self._deliveries.pop(s, ()), key=lambda d: d[0]):
                if self.machines[r].powered:
                    self.machines[r].on_frame(self, frame, sender)
            for node, end_slot in sorted(self._tx_done.pop(s, ())):
                machine = self.machines[node]
                if end_slot < 0:
                    if hasattr(machine, "on_csma_failure"):
                        machine.on_csma_failure(self)
                elif hasattr(machine, "on_csma_sent"):
                    machine.on_csma_sent(self, end_slot)
            if self.sc.trace and (txs or s in self._deliveries):
                self.metrics.trace.append(
                    f"sf={self.superframe} slot={self.slot_in_sf} "
                    f"tx={[t.node for t in txs]}")
            if self._stop:
                break

        for node, machine in sorted(self.machines.items()):
            self.metrics.assoc_traces[node] = list(machine.assoc.transitions)
            if machine.assoc.mode is not None:
                self.metrics.assoc_modes[node] = machine.assoc.mode
        window = completed_sf if self._stop else self.sc.duration_sf
        self.metrics.utilization = self.scheduler.utilization(
            self.metrics.frame_log, window)
        got, accounted = self.metrics.conservation()
        assert got == accounted, \
            f"frame conservation broken: {got} transmitted, {accounted} accounted"
        return self.metrics


def run(scenario: Scenario) -> MetricsBundle:
    return Engine(scenario).run()
