import random

import pytest

from detmac.core import Kind, Role, ScheduleTable, SlotAssignment, Topology, conflict_check
from detmac.scheduler import (
    SPREAD,
    CaptureEvidence,
    Denial,
    GtsRequest,
    Scheduler,
    UtilizationReport,
)

from oracles import brute_conflicts, exhaustive_fit


def star(leaves_per=1, coordinators=2, interference="full", pairs=frozenset()):
    topo = Topology(interference=interference, pairs=pairs)
    topo.add(0, Role.SUPERCOORDINATOR)
    nid = 1
    for c in range(coordinators):
        coord = nid
        topo.add(coord, Role.COORDINATOR, 0)
        nid += 1
        for _ in range(leaves_per):
            topo.add(nid, Role.LEAF, coord)
            nid += 1
    return topo


def fresh(topo=None, policy="first_fit", **kw):
    topo = topo or star()
    table = ScheduleTable(3)
    table.add(SlotAssignment(Kind.SUPERBEACON, 0, owner=0))
    return Scheduler(table, topo, policy=policy, **kw)


def test_place_gbs_three_coordinators():
    sched = fresh(star(coordinators=3))
    placed = sched.place_gbs()
    assert [a.slot for a in placed] == [4, 8, 12]
    assert [a.owner for a in placed] == [1, 3, 5]
    assert all(a.kind is Kind.GBS and a.level == 0 for a in placed)


def test_place_gbs_single_coordinator_centered():
    sched = fresh(star(coordinators=1))
    assert [a.slot for a in sched.place_gbs()] == [8]


def test_place_gbs_too_many():
    topo = Topology()
    topo.add(0, Role.SUPERCOORDINATOR)
    for n in range(1, 17):
        topo.add(n, Role.COORDINATOR, 0)
    with pytest.raises(ValueError):
        Scheduler(ScheduleTable(3), topo).place_gbs()


def test_first_fit_skips_cap_and_beacons():
    sched = fresh(star(coordinators=3))
    sched.place_gbs()                      # slots 4, 8, 12
    for s in (1, 2):
        sched.table.add(SlotAssignment(Kind.CAP, s))
    fits = exhaustive_fit(sched.table.assignments, 3,
                          sched.topology.interferes, requester=4, level=0)
    assert len(fits) == 10 and fits[0] == (3, 0)
    decision = sched.allocate(GtsRequest(4, level=0))
    assert decision.granted
    assert (decision.assignment.slot, decision.assignment.phase) == fits[0]


def test_level1_grants_share_a_slot_on_opposite_phases():
    sched = fresh()
    first = sched.allocate(GtsRequest(3, level=1)).assignment
    second = sched.allocate(GtsRequest(4, level=1)).assignment
    assert (first.slot, first.phase) == (1, 0)
    assert (second.slot, second.phase) == (1, 1)
    assert conflict_check(sched.table, sched.topology.interferes) == []


def test_multi_slot_window_clears_cap():
    sched = fresh()
    sched.table.add(SlotAssignment(Kind.CAP, 2))
    decision = sched.allocate(GtsRequest(3, level=0, slot_count=2))
    assert decision.granted
    assert [a.slot for a in decision.assignments] == [3, 4]
    assert decision.assignment.slot == 3 and decision.assignment.phase == 0


def test_window_never_wraps_superframe_edge():
    sched = fresh()
    for s in range(1, 14):
        sched.table.add(SlotAssignment(Kind.CAP, s))
    # only slots 14-15 remain; a 3-slot window cannot wrap past slot 15
    decision = sched.allocate(GtsRequest(3, level=0, slot_count=3))
    assert not decision.granted and decision.denial is Denial.FULL
    assert decision.detail == "no conflict-free slot window at this level"


def test_denied_full_matches_exhaustive_oracle():
    sched = fresh()
    for s in range(1, 16):
        sched.table.add(SlotAssignment(Kind.GTS, s, 0, 0, owner=3))
    decision = sched.allocate(GtsRequest(4, level=2))
    assert not decision.granted and decision.denial is Denial.FULL
    assert exhaustive_fit(sched.table.assignments, 3,
                          sched.topology.interferes, requester=4, level=2) == []


def test_spread_policy_bisects_own_instants():
    sched = fresh(policy=SPREAD)
    got = [sched.allocate(GtsRequest(3, level=0)).assignment.slot
           for _ in range(4)]
    assert got == [1, 9, 5, 13]


def test_policies_agree_on_grant_set_feasibility():
    rng = random.Random(2112)
    for _ in range(50):
        topo = star(leaves_per=3, coordinators=2)
        for policy in ("first_fit", SPREAD):
            sched = fresh(topo, policy=policy)
            for _ in range(rng.randrange(1, 8)):
                req = GtsRequest(rng.choice(topo.leaves()), rng.randrange(4))
                sched.allocate(req)
            assert conflict_check(sched.table, topo.interferes) == []


def test_grant_cap_counts_held_slots():
    sched = fresh(grant_cap=2)
    assert sched.allocate(GtsRequest(3, level=0, slot_count=2)).granted
    denied = sched.allocate(GtsRequest(3, level=0))
    assert denied.denial is Denial.POLICY
    assert denied.detail == "grant cap 2 reached for node 3"
    # other nodes are unaffected
    assert sched.allocate(GtsRequest(4, level=0)).granted


def test_requester_validation():
    sched = fresh()
    with pytest.raises(ValueError):
        sched.allocate(GtsRequest(99))
    with pytest.raises(ValueError):
        sched.allocate(GtsRequest(3, level=4))
    with pytest.raises(ValueError):
        sched.allocate(GtsRequest(3, slot_count=0))
    with pytest.raises(ValueError):
        sched.allocate(GtsRequest(3, slot_count=16))


def test_reserve_pds_blocked_after_association():
    sched = fresh()
    assert sched.reserve_pds(3, level=1).granted
    sched.associated.add(4)
    denied = sched.reserve_pds(4, level=1)
    assert denied.denial is Denial.POLICY
    assert denied.detail == "node 4 is already associated"


def two_star_merge_setup(interference="explicit", pairs=None):
    # leaves 2 (star 1) and 4 (star 3); stars far enough apart for reuse
    if pairs is None:
        pairs = frozenset({frozenset((1, 2)), frozenset((3, 4)),
                           frozenset((0, 1)), frozenset((0, 3))})
    topo = Topology(interference=interference, pairs=pairs)
    topo.add(0, Role.SUPERCOORDINATOR)
    topo.add(1, Role.COORDINATOR, 0)
    topo.add(3, Role.COORDINATOR, 0)
    topo.add(2, Role.LEAF, 1)
    topo.add(4, Role.LEAF, 3)
    table = ScheduleTable(3)
    table.add(SlotAssignment(Kind.SUPERBEACON, 0, owner=0))
    sched = Scheduler(table, topo, capture_margin_db=10.0, evidence_window_sf=4)
    a = table.add(SlotAssignment(Kind.GTS, 3, 1, 0, owner=2))
    b = table.add(SlotAssignment(Kind.GTS, 5, 1, 0, owner=4))
    return sched, a, b


def good_evidence(margin=10.0, da=12.0, db=11.0, sf=0):
    return CaptureEvidence(2, 4, da, db, margin, measured_sf_a=sf, measured_sf_b=sf)


def test_merge_sgts_keeps_smaller_slot_and_shrinks_table():
    sched, a, b = two_star_merge_setup()
    before = len(sched.table.assignments)
    decision = sched.merge_sgts(a, b, good_evidence(), now_sf=2)
    assert decision.granted
    merged = decision.assignment
    assert merged.kind is Kind.SGTS
    assert (merged.slot, merged.phase) == (3, 0)
    assert merged.owner == 2 and merged.partner == 4
    assert len(sched.table.assignments) == before - 1
    assert a not in sched.table.assignments
    assert b not in sched.table.assignments


def test_merge_sgts_precondition_violations_raise():
    sched, a, b = two_star_merge_setup()
    ghost = SlotAssignment(Kind.GTS, 7, 1, 0, owner=2)
    with pytest.raises(ValueError):
        sched.merge_sgts(ghost, b, good_evidence())
    pds = sched.table.add(SlotAssignment(Kind.PDS, 9, 1, 0, owner=2))
    with pytest.raises(ValueError):
        sched.merge_sgts(pds, b, good_evidence())
    other_level = sched.table.add(SlotAssignment(Kind.GTS, 10, 2, 0, owner=4))
    with pytest.raises(ValueError):
        sched.merge_sgts(a, other_level, good_evidence())
    same_star = sched.table.add(SlotAssignment(Kind.GTS, 11, 1, 0, owner=1))
    with pytest.raises(ValueError):
        sched.merge_sgts(a, same_star, good_evidence())


def test_merge_sgts_policy_denials():
    sched, a, b = two_star_merge_setup()
    wrong_pair = CaptureEvidence(2, 99, 12.0, 12.0, 10.0)
    denied = sched.merge_sgts(a, b, wrong_pair)
    assert denied.denial is Denial.POLICY
    assert denied.detail == "evidence does not cover this owner pair"

    wrong_margin = good_evidence(margin=6.0)
    denied = sched.merge_sgts(a, b, wrong_margin)
    assert denied.denial is Denial.POLICY
    assert "differs from required 10.0 dB" in denied.detail

    weak = good_evidence(db=9.5)
    denied = sched.merge_sgts(a, b, weak)
    assert denied.denial is Denial.POLICY
    assert denied.detail == "side b advantage 9.5 dB below margin 10.0 dB"

    stale = good_evidence(sf=0)
    denied = sched.merge_sgts(a, b, stale, now_sf=5)
    assert denied.denial is Denial.POLICY
    assert "stale (5 superframes old)" in denied.detail
    # boundary: exactly at the window is still fresh
    assert sched.merge_sgts(a, b, good_evidence(sf=0), now_sf=4).granted


def test_merge_sgts_refuses_conflicting_landing_slot():
    # node 5 does not interfere with leaf 2, so its grant shares slot 3;
    # it does interfere with leaf 4, so the merged pair cannot land there.
    pairs = frozenset({frozenset((1, 2)), frozenset((3, 4)),
                       frozenset((4, 5)), frozenset((0, 5))})
    sched, a, b = two_star_merge_setup(pairs=pairs)
    sched.topology.add(5, Role.LEAF, 1)
    sched.table.add(SlotAssignment(Kind.GTS, 3, 1, 0, owner=5))
    assert conflict_check(sched.table, sched.topology.interferes) == []
    denied = sched.merge_sgts(a, b, good_evidence(), now_sf=1)
    assert denied.denial is Denial.FULL
    assert denied.detail == "merged slot would conflict with an existing grant"
    # the failed merge must not have touched the table
    assert a in sched.table.assignments and b in sched.table.assignments


def test_release_frees_slot_for_reuse():
    sched = fresh()
    first = sched.allocate(GtsRequest(3, level=0)).assignment
    sched.release(first)
    again = sched.allocate(GtsRequest(4, level=0)).assignment
    assert (again.slot, again.phase) == (first.slot, first.phase)


def test_random_grant_streams_never_conflict():
    rng = random.Random(1984)
    for _ in range(60):
        topo = star(leaves_per=2, coordinators=3,
                    interference="explicit",
                    pairs=frozenset(frozenset(p) for p in
                                    [(i, j) for i in range(10) for j in range(10)
                                     if i < j and rng.random() < 0.4]))
        sched = fresh(topo)
        live = []
        for _ in range(rng.randrange(2, 12)):
            move = rng.random()
            if move < 0.6 or not live:
                req = GtsRequest(rng.choice(topo.leaves()),
                                 rng.randrange(4),
                                 slot_count=rng.choice((1, 1, 1, 2)))
                d = sched.allocate(req)
                if d.granted:
                    live.extend(d.assignments)
            elif move < 0.8:
                d = sched.reserve_pds(rng.choice(topo.leaves()), rng.randrange(4))
                if d.granted:
                    live.extend(d.assignments)
            else:
                sched.release(live.pop(rng.randrange(len(live))))
            got = conflict_check(sched.table, topo.interferes)
            assert got == [], got
            index = {id(x): i for i, x in enumerate(sched.table.assignments)}
            assert brute_conflicts(sched.table.assignments, 3,
                                   topo.interferes) == set()


def test_utilization_counts_and_pds_waste():
    sched = fresh()
    sched.table.add(SlotAssignment(Kind.CAP, 1))
    sched.table.add(SlotAssignment(Kind.GBS, 8, 0, 0, owner=1))
    sched.table.add(SlotAssignment(Kind.GTS, 3, 1, 0, owner=3))
    pds = sched.table.add(SlotAssignment(Kind.PDS, 5, 1, 0, owner=4))
    report = sched.utilization(frame_log=[(0, 5, 4)], window_superframes=8)
    assert isinstance(report, UtilizationReport)
    assert report.total_instances() == 128
    assert report.counts["superbeacon"] == 8
    assert report.counts["cap"] == 8
    assert report.counts["gbs"] == 8
    assert report.counts["gts"] == 4      # level 1: every other superframe
    assert report.counts["pds"] == 4
    assert report.counts["idle"] == 128 - 8 - 8 - 8 - 4 - 4
    # pds occupies superframes 0,2,4,6; only sf 0 carried a frame
    assert report.wasted_pds == 3
    rows = [r for r in report.instances if r[2] == "pds"]
    assert rows == [(0, 5, "pds", "4"), (2, 5, "pds", "4"),
                    (4, 5, "pds", "4"), (6, 5, "pds", "4")]
