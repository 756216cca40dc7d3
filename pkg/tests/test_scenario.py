import glob
import os

import pytest

from detmac.core import Role
from detmac.engine import Scenario, run
from detmac.scenario import (
    ScenarioFormatError,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "scenarios")

MINIMAL = """\
[network]
node 0 supercoordinator
node 1 coordinator parent=0
node 2 leaf parent=1

[schedule]
bo 3
cap 1 2
gts 2 level=1

[traffic]
flow 2 period=2

[run]
seed 9
duration 8
"""


def test_minimal_file_parses_and_runs():
    sc = parse_scenario(MINIMAL)
    assert [n.node for n in sc.nodes] == [0, 1, 2]
    assert sc.nodes[2].role is Role.LEAF and sc.nodes[2].parent == 1
    assert sc.cap_slots == (1, 2)
    assert sc.gts[0].level == 1
    assert sc.flows[0].period_sf == 2
    assert (sc.seed, sc.duration_sf) == (9, 8)
    bundle = run(sc)
    assert bundle.counters["delivered"] > 0


def test_parse_serialize_parse_is_identity():
    first = parse_scenario(MINIMAL)
    text = serialize_scenario(first)
    second = parse_scenario(text)
    assert second == first
    assert serialize_scenario(second) == text


def test_shipped_scenarios_round_trip_and_validate():
    paths = sorted(glob.glob(os.path.join(SCENARIO_DIR, "*.scn")))
    assert len(paths) >= 5
    for path in paths:
        loaded = load_scenario(path)
        assert loaded.scenario.validate() == [], path
        again = parse_scenario(serialize_scenario(loaded.scenario))
        assert again == loaded.scenario, path


def test_every_field_survives_serialization():
    text = """\
[network]
node 0 supercoordinator
node 1 coordinator parent=0
node 2 coordinator parent=0
node 3 leaf parent=1
node 4 leaf parent=2
interference explicit
interfere 1 3
interfere 4 2

[schedule]
bo 2
nmax 3
policy spread
grant_cap 3
cap 4
gbs 1 5
gbs 2 10
pds 3 level=2 count=1
gts 4 level=1 count=2
sgts 3 4 level=1
csma min_be=2 max_be=4 max_backoffs=3 cw=2 frame_periods=2 ack_periods=1

[radio]
power_default none
power 3 1 -40.5
power 4 1 -60.0
margin 8.0
bias 1.5
loss lossy 0.125
noise 0.5

[traffic]
flow 3 period=2 start=1
flow 4 cap period=4
request 3 at=2 level=1 count=1 priority=2

[run]
seed 31
duration 12
power_on 3 uniform
power_on 4 128
stop_when_associated true
trace true
evidence_window 6
"""
    sc = parse_scenario(text)
    assert sc.interference == "explicit" and sc.pairs == [(1, 3), (2, 4)]
    assert sc.policy == "spread" and sc.grant_cap == 3
    assert sc.gbs == {1: 5, 2: 10}
    assert sc.csma.min_be == 2 and sc.csma.frame_periods == 2
    assert sc.radio.default_dbm is None
    assert sc.radio.entries == ((3, 1, -40.5), (4, 1, -60.0))
    assert sc.radio.loss == "lossy" and sc.radio.error_rate == 0.125
    assert sc.flows[1].via == "cap"
    assert sc.power_on == {3: "uniform", 4: 128}
    assert sc.trace and sc.stop_when_associated
    assert sc.evidence_window_sf == 6
    assert parse_scenario(serialize_scenario(sc)) == sc


def test_all_problems_reported_in_one_pass_with_lines():
    text = """\
[network]
node 0 supercoordinator
node x supercoordinator
node 2 admiral
blah 3

[schedule]
bo three
gts 2 level=1 shiny=8

[nonsense]
anything

[run]
stop_when_associated maybe
"""
    with pytest.raises(ScenarioFormatError) as err:
        parse_scenario(text)
    issues = err.value.issues
    got = {ln: msg for ln, msg in issues}
    assert "bad node id 'x'" in got[3]
    assert "unknown role 'admiral'" in got[4]
    assert "unknown [network] line" in got[5]
    assert "bad beacon order 'three'" in got[8]
    assert "unknown option 'shiny=8'" in got[9]
    assert "unknown section [nonsense]" in got[11]
    assert "content outside any section" in got[12]
    assert "expected true or false, got 'maybe'" in got[15]
    assert issues == sorted(issues)
    for ln, _ in issues:
        assert f"line {ln}:" in str(err.value)


def test_content_before_any_section_is_an_error():
    with pytest.raises(ScenarioFormatError) as err:
        parse_scenario("node 0 supercoordinator\n")
    (ln, msg), = err.value.issues
    assert ln == 1 and "content outside any section" in msg


def test_bad_csma_combination_is_reported():
    text = MINIMAL + "\n[schedule]\ncsma min_be=6 max_be=4\n"
    with pytest.raises(ScenarioFormatError) as err:
        parse_scenario(text)
    assert any("bad csma parameters" in msg for _, msg in err.value.issues)


def test_duplicate_supercoordinator_names_the_nodes():
    sc = parse_scenario(MINIMAL.replace(
        "node 1 coordinator parent=0", "node 1 supercoordinator"))
    issues = sc.validate()
    assert any("exactly one supercoordinator, found 2 (nodes 0, 1)" in i
               for i in issues)


def test_comments_and_spacing_are_free():
    sc = parse_scenario("""
# leading commentary
[network]
node 0 supercoordinator   # the root
node 1 coordinator parent=0

[run]
seed 1   # tie-break
""")
    assert len(sc.nodes) == 2 and sc.seed == 1
