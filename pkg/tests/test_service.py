import asyncio
import json

import httpx
import pytest

from detmac import __version__
from detmac.service.app import app

SMOKE = """\
[network]
node 0 supercoordinator
node 1 coordinator parent=0
node 2 leaf parent=1

[schedule]
gts 2 level=0

[traffic]
flow 2

[run]
seed 1
duration 8
"""


def post(path, body):
    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://test") as client:
            return await client.post(path, json=body)
    return asyncio.run(go())


def get(path):
    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://test") as client:
            return await client.get(path)
    return asyncio.run(go())


def test_health_reports_version():
    r = get("/health")
    assert r.status_code == 200
    assert r.json() == {"ok": True, "version": __version__}


def test_models_lists_bundled_nets():
    r = get("/models")
    assert r.json() == {"names": ["association_coordinator",
                                  "association_leaf"]}


def test_simulate_returns_summary_and_files():
    r = post("/simulate", {"scenario": SMOKE})
    body = r.json()
    assert body["ok"] and not body["input_error"]
    names = [f["name"] for f in body["files"]]
    assert names == ["latencies.csv", "counters.csv", "utilization.csv",
                     "utilization_summary.csv", "summary.txt"]
    assert "transmitted" in body["summary"]
    counters = {line.split(",")[0]: line.split(",")[1]
                for line in body["files"][1]["content"].splitlines()[1:]}
    assert counters["transmitted"] == counters["delivered"]


def test_simulate_seed_override_and_trace():
    r = post("/simulate", {"scenario": SMOKE, "seed": 99, "trace": True})
    body = r.json()
    assert body["ok"]
    assert any(f["name"] == "trace.txt" for f in body["files"])


def test_simulate_json_lines_format():
    r = post("/simulate", {"scenario": SMOKE, "fmt": "json-lines"})
    body = r.json()
    names = [f["name"] for f in body["files"]]
    assert "counters.jsonl" in names
    counters_file = next(f for f in body["files"]
                         if f["name"] == "counters.jsonl")
    rows = [json.loads(line) for line in counters_file["content"].splitlines()]
    assert {"counter", "value"} <= set(rows[0])


def test_simulate_parse_error_is_input_error_with_lines():
    r = post("/simulate", {"scenario": "[network]\nnode zero supercoordinator\n"})
    body = r.json()
    assert not body["ok"] and body["input_error"]
    issue, = body["issues"]
    assert issue["line"] == 2 and "bad node id" in issue["message"]


def test_simulate_semantic_error_has_no_line():
    two_sc = SMOKE.replace("node 1 coordinator parent=0",
                           "node 1 supercoordinator")
    r = post("/simulate", {"scenario": two_sc})
    body = r.json()
    assert not body["ok"] and body["input_error"]
    assert any("exactly one supercoordinator" in i["message"]
               for i in body["issues"])
    assert all(i["line"] is None for i in body["issues"])


def test_validate_contract():
    assert post("/validate", {"scenario": SMOKE}).json() == {
        "ok": True, "issues": []}
    r = post("/validate", {"scenario": "[schedule]\nbo 99\n"})
    body = r.json()
    assert not body["ok"]
    assert any("beacon order" in i["message"] for i in body["issues"])


def test_association_sweep_round_trip():
    r = post("/sweep/association", {"levels": [0, 1], "trials": 12, "seed": 3})
    body = r.json()
    assert body["ok"] and body["violations"] == 0
    names = [f["name"] for f in body["files"]]
    assert names == ["association_histogram.csv", "association_summary.csv"]
    header = body["files"][0]["content"].splitlines()[0]
    assert header == ("pds_level,bin_lo_ticks,bin_hi_ticks,count,"
                      "proportion,bound_lo_ticks,bound_hi_ticks")
    summary = body["files"][1]["content"]
    assert "136" in summary and "384" in summary


def test_association_sweep_rejects_bad_inputs():
    r = post("/sweep/association", {"levels": [], "trials": 10})
    assert r.json()["input_error"]
    r = post("/sweep/association", {"levels": [9], "trials": 10})
    body = r.json()
    assert body["input_error"]
    assert "levels must lie in [0, 3]" in body["issues"][0]["message"]


def test_capture_sweep_round_trip():
    r = post("/sweep/capture", {"delta_min": -12, "delta_max": 12,
                                "step": 4, "trials": 4})
    body = r.json()
    assert body["ok"]
    file, = body["files"]
    assert file["name"] == "capture.csv"
    lines = file["content"].splitlines()
    assert lines[0] == "delta_db,success_rate_c1,success_rate_c2"
    assert len(lines) == 8
    assert lines[-1].startswith("12.0,1.0,0.0")


def test_capture_sweep_rejects_empty_range():
    r = post("/sweep/capture", {"delta_min": 5, "delta_max": -5, "step": 1})
    assert r.json()["input_error"]


def test_verify_bundled_ok():
    r = post("/verify", {"bundled": "association_leaf"})
    body = r.json()
    assert body["ok"]
    names = [f["name"] for f in body["files"]]
    assert names == ["verify.csv", "state_graph.txt"]
    verify_csv = body["files"][0]["content"]
    assert "states,5," in verify_csv
    assert "bounded,1-bounded,safe" in verify_csv
    graph = body["files"][1]["content"]
    assert graph.splitlines()[0] == "s0 power_on s1"


def test_verify_inline_violation_is_not_input_error():
    r = post("/verify", {"model_text":
                         "PLACES\na 1\nb 0\nTRANSITIONS\n"
                         "step ; a:1 ; b:1\nstall ; b:1 ; -\n"})
    body = r.json()
    assert not body["ok"] and not body["input_error"]
    assert "live NO" in body["summary"] or "live" in body["summary"]


def test_verify_parse_error_carries_single_prefix():
    r = post("/verify", {"model_text": "PLACES\np\n"})
    body = r.json()
    assert body["input_error"]
    issue, = body["issues"]
    assert issue["line"] == 2
    assert not issue["message"].startswith("line")


def test_verify_unknown_bundled_names_alternatives():
    r = post("/verify", {"bundled": "nope"})
    body = r.json()
    assert body["input_error"]
    assert "association_leaf" in body["issues"][0]["message"]


def test_verify_requires_exactly_one_source():
    both = post("/verify", {"bundled": "association_leaf",
                            "model_text": "x"}).json()
    neither = post("/verify", {}).json()
    for body in (both, neither):
        assert body["input_error"]
        assert "exactly one" in body["issues"][0]["message"]


def test_verify_unbounded_net_reports_witness_without_graph():
    r = post("/verify", {"model_text":
                         "PLACES\ns 1\npool 0\nTRANSITIONS\n"
                         "mint ; s:1 ; s:1 pool:1\n", "marking_cap": 4})
    body = r.json()
    assert not body["ok"] and not body["input_error"]
    names = [f["name"] for f in body["files"]]
    assert names == ["verify.csv"]  # no complete graph to export
    assert "CAP_EXCEEDED" in body["files"][0]["content"]
