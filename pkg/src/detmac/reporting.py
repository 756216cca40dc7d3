"""Deterministic rendering of metrics into plot-ready tables.

Two formats: "table" is plain CSV, "json-lines" is one JSON object per row.
Rendering is byte-stable: float values go through repr (shortest round-trip
form), row order is defined by the data structures, and nothing
time-of-day-dependent is ever written.
"""

from __future__ import annotations

import json

from .engine import MetricsBundle, latency_histogram
from .formal import VerifyReport
from .sweeps import AssociationSweepResult, CapturePoint

TABLE = "table"
JSON_LINES = "json-lines"
FORMATS = (TABLE, JSON_LINES)


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render(header: list[str], rows: list[list], fmt: str) -> str:
    if fmt == TABLE:
        lines = [",".join(header)]
        lines += [",".join(_cell(v) for v in row) for row in rows]
        return "\n".join(lines) + "\n"
    if fmt == JSON_LINES:
        out = []
        for row in rows:
            out.append(json.dumps(dict(zip(header, row)), separators=(",", ":")))
        return "\n".join(out) + ("\n" if out else "")
    raise ValueError(f"unknown format {fmt!r}; pick from {FORMATS}")


def extension(fmt: str) -> str:
    return "csv" if fmt == TABLE else "jsonl"


# -- simulate ------------------------------------------------------------------


def latency_rows(m: MetricsBundle) -> tuple[list[str], list[list]]:
    header = ["index", "node", "mode", "deterministic", "latency_ticks",
              "completed_tick"]
    rows = [[i, s.node, s.mode, s.deterministic, s.latency_ticks, s.completed_tick]
            for i, s in enumerate(m.latencies)]
    return header, rows


def counter_rows(m: MetricsBundle) -> tuple[list[str], list[list]]:
    return ["counter", "value"], [[k, v] for k, v in sorted(m.counters.items())]


def utilization_rows(m: MetricsBundle) -> tuple[list[str], list[list]]:
    header = ["superframe", "slot", "category", "owners"]
    assert m.utilization is not None
    rows = [[sf, slot, cat, owners]
            for sf, slot, cat, owners in m.utilization.instances]
    return header, rows


def utilization_summary_rows(m: MetricsBundle) -> tuple[list[str], list[list]]:
    assert m.utilization is not None
    rows = [[cat, count] for cat, count in sorted(m.utilization.counts.items())]
    rows.append(["wasted_pds_instances", m.utilization.wasted_pds])
    rows.append(["window_superframes", m.utilization.window_superframes])
    return ["category", "value"], rows


def simulate_summary(m: MetricsBundle) -> str:
    tx, accounted = m.conservation()
    lines = [
        f"seed {m.seed}, beacon order {m.bo}, nmax {m.nmax}, "
        f"{m.duration_sf} superframes",
        f"frames: {tx} transmitted = {m.counters['delivered']} delivered"
        f" + {m.counters['collided']} collided + {m.counters['lost']} lost",
        f"associations: {len(m.latencies)} completed"
        f" ({sum(1 for s in m.latencies if s.deterministic)} deterministic,"
        f" {sum(1 for s in m.latencies if not s.deterministic)} contention)",
        f"channel access failures: {m.counters['csma_failures']}",
    ]
    if m.utilization is not None:
        lines.append(
            "hypercycle instances: " + " ".join(
                f"{cat}={count}" for cat, count in sorted(m.utilization.counts.items())))
        lines.append(f"wasted pds instances: {m.utilization.wasted_pds}")
    return "\n".join(lines) + "\n"


def simulate_files(m: MetricsBundle, fmt: str) -> list[tuple[str, str]]:
    ext = extension(fmt)
    files = [
        (f"latencies.{ext}", render(*latency_rows(m), fmt)),
        (f"counters.{ext}", render(*counter_rows(m), fmt)),
        (f"utilization.{ext}", render(*utilization_rows(m), fmt)),
        (f"utilization_summary.{ext}", render(*utilization_summary_rows(m), fmt)),
        ("summary.txt", simulate_summary(m)),
    ]
    if m.trace:
        files.append(("trace.txt", "\n".join(m.trace) + "\n"))
    return files


# -- sweeps --------------------------------------------------------------------


def association_sweep_rows(results: list[AssociationSweepResult]) -> tuple[list[str], list[list]]:
    header = ["pds_level", "bin_lo_ticks", "bin_hi_ticks", "count",
              "proportion", "bound_lo_ticks", "bound_hi_ticks"]
    rows = []
    for r in results:
        for lo, hi, count, prop in r.histogram:
            rows.append([r.pds_level, lo, hi, count, prop, r.bound_lo, r.bound_hi])
    return header, rows


def association_summary_rows(results: list[AssociationSweepResult]) -> tuple[list[str], list[list]]:
    header = ["pds_level", "trials", "min_ticks", "max_ticks", "spread_ticks",
              "bound_lo_ticks", "bound_hi_ticks", "violations"]
    rows = [[r.pds_level, r.trials, min(r.samples), max(r.samples), r.spread(),
             r.bound_lo, r.bound_hi, r.violations] for r in results if r.samples]
    return header, rows


def association_sweep_summary(results: list[AssociationSweepResult]) -> str:
    lines = []
    for r in results:
        lines.append(
            f"level {r.pds_level}: {r.trials} trials, latency "
            f"[{min(r.samples)}, {max(r.samples)}] ticks, window "
            f"[{r.bound_lo}, {r.bound_hi}], violations {r.violations}")
    total = sum(r.violations for r in results)
    lines.append(f"total out-of-window samples: {total}")
    return "\n".join(lines) + "\n"


def capture_rows(points: list[CapturePoint]) -> tuple[list[str], list[list]]:
    header = ["delta_db", "success_rate_c1", "success_rate_c2"]
    return header, [[p.delta_db, p.success_rate_c1, p.success_rate_c2]
                    for p in points]


def capture_summary(points: list[CapturePoint]) -> str:
    always_1 = [p.delta_db for p in points if p.success_rate_c1 == 1.0]
    always_2 = [p.delta_db for p in points if p.success_rate_c2 == 1.0]
    lines = [f"{len(points)} sweep points "
             f"[{points[0].delta_db}, {points[-1].delta_db}] dB"]
    if always_1:
        lines.append(f"star 1 decodes its leaf from {min(always_1)} dB upward")
    if always_2:
        lines.append(f"star 2 decodes its leaf up to {max(always_2)} dB")
    return "\n".join(lines) + "\n"


# -- verify --------------------------------------------------------------------


def verify_rows(report: VerifyReport) -> tuple[list[str], list[list]]:
    return ["property", "verdict", "detail"], [list(r) for r in report.rows()]


def verify_summary(report: VerifyReport) -> str:
    lines = [f"model {report.model_name}: "
             + ("all properties hold" if report.ok else "PROPERTY VIOLATION")]
    for prop, verdict, detail in report.rows():
        lines.append(f"  {prop}: {verdict}" + (f" ({detail})" if detail else ""))
    return "\n".join(lines) + "\n"
