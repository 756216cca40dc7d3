import random

import pytest

from detmac.formal import (
    DEFAULT_MARKING_CAP,
    NetModel,
    NetParseError,
    Transition,
    bundled_model_names,
    check_bounded,
    check_live,
    check_reinitializable,
    explore,
    export_edges,
    load_bundled,
    parse_net,
    serialize_net,
    verify_model,
)

from oracles import net_reach, oracle_bound, oracle_home, oracle_live

HANDSHAKE = """\
PLACES
idle 1
busy 0
TRANSITIONS
go ; idle:1 ; busy:1
back ; busy:1 ; idle:1
"""

DEADLOCKING = """\
PLACES
a 1
b 0
TRANSITIONS
step ; a:1 ; b:1
stall ; b:1 ; -
"""

UNBOUNDED = """\
PLACES
src 1
pool 0
TRANSITIONS
mint ; src:1 ; src:1 pool:1
"""


def test_parse_roundtrip_identity():
    model = parse_net(HANDSHAKE, "handshake")
    assert model.places == ("idle", "busy")
    assert model.initial == (1, 0)
    assert [t.name for t in model.transitions] == ["go", "back"]
    again = parse_net(serialize_net(model), "handshake")
    assert again == model


def test_parse_arc_weights_and_empty_sides():
    model = parse_net("""
PLACES
p 2
q 0
TRANSITIONS
burn ; p:2 ; -
seed ; - ; q:3
""")
    burn, seed = model.transitions
    assert burn.inputs == ((0, 2),) and burn.outputs == ()
    assert seed.inputs == () and seed.outputs == ((1, 3),)
    assert parse_net(serialize_net(model)) == model


def test_parse_errors_carry_line_numbers():
    cases = [
        ("PLACES\np\n", 2, "expected 'place tokens'"),
        ("PLACES\np one\n", 2, "bad token count"),
        ("PLACES\np -1\n", 2, "token count must be non-negative"),
        ("PLACES\np 1\np 2\n", 3, "duplicate place"),
        ("PLACES\np 1\nTRANSITIONS\nt ; p:1\n", 4, "expected 'name ; inputs ; outputs'"),
        ("PLACES\np 1\nTRANSITIONS\nt ; q:1 ; -\n", 4, "unknown place 'q'"),
        ("PLACES\np 1\nTRANSITIONS\nt ; p:0 ; -\n", 4, "bad arc weight"),
        ("PLACES\np 1\nTRANSITIONS\nt ; p:1 ; -\nt ; p:1 ; -\n", 5,
         "duplicate transition"),
        ("stray\n", 1, "content outside any section"),
        ("PLACES\nTRANSITIONS\nt ; - ; -\n", 0, "no places"),
        ("PLACES\np 1\n", 0, "no transitions"),
    ]
    for text, line, needle in cases:
        with pytest.raises(NetParseError) as err:
            parse_net(text)
        assert err.value.line == line, text
        assert needle in err.value.message
        assert f"line {line}:" in str(err.value)
        # .message itself stays prefix-free so callers can format it once
        assert not err.value.message.startswith("line")


def test_comments_and_blank_lines_are_ignored():
    model = parse_net("# header\n\nPLACES\np 1  # seeded\nTRANSITIONS\n"
                      "t ; p:1 ; p:1\n")
    assert model.places == ("p",) and model.initial == (1,)


def test_explore_is_deterministic_bfs():
    model = parse_net(HANDSHAKE)
    result = explore(model)
    graph = result.graph
    assert result.cap_exceeded is None
    assert graph.states == [(1, 0), (0, 1)]
    assert graph.edges == [(0, 0, 1), (1, 1, 0)]
    assert graph.succ[0] == [(0, 1)] and graph.succ[1] == [(1, 0)]
    assert export_edges(graph, model) == "s0 go s1\ns1 back s0\n"


def test_unbounded_net_yields_cap_witness():
    model = parse_net(UNBOUNDED)
    result = explore(model, marking_cap=5)
    assert result.graph is None
    witness = result.cap_exceeded
    assert witness.place == "pool"
    assert witness.path == ("mint",) * 6
    assert witness.marking == (1, 6)
    bound = check_bounded(model, result)
    assert not bound.bounded and bound.k is None and not bound.safe
    report = verify_model(model, marking_cap=5)
    assert not report.ok and report.live is None
    rows = dict((r[0], (r[1], r[2])) for r in report.rows())
    assert rows["bounded"][0] == "CAP_EXCEEDED"
    assert "place pool via mint" in rows["bounded"][1]


def test_deadlock_is_not_live():
    model = parse_net(DEADLOCKING)
    report = verify_model(model)
    assert not report.ok
    assert report.bound.safe
    assert not report.live.live
    assert set(report.live.dead_transitions) == {"step", "stall"}
    assert report.live.deadlock_states == [(0, 0)]
    assert not report.home.home and report.home.counterexample == (0, 1)


def test_bundled_models_verify_clean():
    assert bundled_model_names() == ["association_coordinator", "association_leaf"]
    expect = {"association_leaf": (5, 6), "association_coordinator": (5, 7)}
    for name, (states, edges) in expect.items():
        report = verify_model(load_bundled(name))
        assert report.ok, name
        assert (report.state_count, report.edge_count) == (states, edges)
        assert report.bound.safe and report.bound.k == 1
        assert report.live.live and report.live.deadlock_states == []
        assert report.home.home
    with pytest.raises(KeyError) as err:
        load_bundled("missing")
    assert "association_leaf" in str(err.value)


def test_bundled_verdicts_match_independent_oracles():
    for name in bundled_model_names():
        model = load_bundled(name)
        reach = net_reach(model)
        assert reach is not None
        states, succ = reach
        report = verify_model(model)
        assert report.state_count == len(states)
        assert report.bound.k == oracle_bound(states)
        assert report.live.live == oracle_live(model, states, succ)
        assert report.home.home == oracle_home(states, succ)


def test_checks_match_oracles_on_random_nets():
    rng = random.Random(424242)
    agree = 0
    for trial in range(120):
        n_places = rng.randrange(2, 5)
        places = tuple(f"p{i}" for i in range(n_places))
        initial = tuple(rng.randrange(2) for _ in range(n_places))
        if sum(initial) == 0:
            initial = (1,) + initial[1:]
        transitions = []
        for ti in range(rng.randrange(1, 5)):
            ins = tuple((p, 1) for p in range(n_places) if rng.random() < 0.4)
            outs = tuple((p, 1) for p in range(n_places) if rng.random() < 0.4)
            transitions.append(Transition(f"t{ti}", ins, outs))
        model = NetModel(f"random{trial}", places, initial, tuple(transitions))
        reach = net_reach(model, cap=DEFAULT_MARKING_CAP)
        report = verify_model(model)
        if reach is None:
            assert not report.bound.bounded
            continue
        states, succ = reach
        assert report.state_count == len(states)
        assert report.bound.k == oracle_bound(states)
        assert report.live.live == oracle_live(model, states, succ)
        assert report.home.home == oracle_home(states, succ)
        agree += 1
    assert agree >= 60  # the generator must exercise the bounded regime too


def test_liveness_needs_every_sink_component():
    # two trap components: one keeps cycling, the other never fires `spin`
    model = parse_net("""
PLACES
start 1
left 0
right 0
TRANSITIONS
pick_left ; start:1 ; left:1
pick_right ; start:1 ; right:1
spin ; left:1 ; left:1
hum ; right:1 ; right:1
""")
    report = verify_model(model)
    assert report.bound.safe
    assert not report.live.live
    assert set(report.live.dead_transitions) == {"pick_left", "pick_right",
                                                 "spin", "hum"}
    assert report.live.deadlock_states == []
    assert not report.home.home
