"""Plain-text scenario files.

Line-oriented, five sections: [network], [schedule], [radio], [traffic],
[run].  Each line is a keyword, positional arguments, then key=value options.
`#` starts a comment.  Parsing is strict: unknown sections, unknown keywords
and malformed values are all reported with their line number, and every
problem in the file is reported in one pass.  parse -> serialize -> parse is
the identity on the parsed value.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Role
from .csma import CsmaParams
from .engine import (
    FlowSpec,
    GtsSpec,
    NodeSpec,
    PdsSpec,
    RadioSpec,
    RequestSpec,
    Scenario,
    SgtsSpec,
    UNIFORM,
)
from .scheduler import FIRST_FIT, SPREAD

_SECTIONS = ("network", "schedule", "radio", "traffic", "run")

_ROLES = {r.value: r for r in Role}


class ScenarioFormatError(ValueError):
    """Carries every (line, message) problem found in one file."""

    def __init__(self, issues: list[tuple[int, str]]) -> None:
        super().__init__("; ".join(f"line {ln}: {msg}" for ln, msg in issues))
        self.issues = issues


@dataclass(frozen=True)
class ScenarioFile:
    text: str
    scenario: Scenario


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.issues: list[tuple[int, str]] = []
        self.sc = Scenario(radio=RadioSpec())
        self._radio: dict = dict(default_dbm=-55.0, entries=[],
                                 capture_margin_db=10.0, sync_offset_bias_db=0.0,
                                 loss="ideal", error_rate=0.0, noise_sigma_db=0.0)
        self._csma: dict = {}
        self._gbs_lines: list[tuple[int, int]] = []
        self._gbs_auto = True
        self._pairs: list[tuple[int, int]] = []

    def fail(self, line: int, msg: str) -> None:
        self.issues.append((line, msg))

    def opts(self, line: int, tokens: list[str], allowed: dict[str, type]) -> dict:
        out = {}
        for token in tokens:
            key, eq, value = token.partition("=")
            if not eq or key not in allowed:
                self.fail(line, f"unknown option {token!r}")
                continue
            try:
                if allowed[key] is bool:
                    out[key] = self._bool(line, value)
                else:
                    out[key] = allowed[key](value)
            except ValueError:
                self.fail(line, f"bad value in {token!r}")
        return out

    def _bool(self, line: int, value: str) -> bool:
        if value in ("true", "false"):
            return value == "true"
        raise ValueError(value)

    def _int(self, line: int, value: str, what: str) -> int | None:
        try:
            return int(value)
        except ValueError:
            self.fail(line, f"bad {what} {value!r}")
            return None

    def _float(self, line: int, value: str, what: str) -> float | None:
        try:
            return float(value)
        except ValueError:
            self.fail(line, f"bad {what} {value!r}")
            return None

    def parse(self) -> Scenario:
        section = None
        for lineno, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip()
                if name not in _SECTIONS:
                    self.fail(lineno, f"unknown section [{name}]")
                    section = None
                else:
                    section = name
                continue
            if section is None:
                self.fail(lineno, f"content outside any section: {line!r}")
                continue
            getattr(self, f"_line_{section}")(lineno, line.split())
        self._finish()
        if self.issues:
            raise ScenarioFormatError(sorted(self.issues))
        return self.sc

    # -- sections ---------------------------------------------------------

    def _line_network(self, ln: int, t: list[str]) -> None:
        if t[0] == "node" and len(t) >= 3:
            node = self._int(ln, t[1], "node id")
            role = _ROLES.get(t[2])
            if role is None:
                self.fail(ln, f"unknown role {t[2]!r}")
                return
            opts = self.opts(ln, t[3:], {"parent": int})
            if node is not None:
                self.sc.nodes.append(NodeSpec(node, role, opts.get("parent")))
        elif t[0] == "interference" and len(t) == 2:
            if t[1] not in ("full", "explicit"):
                self.fail(ln, f"interference must be full or explicit, got {t[1]!r}")
            else:
                self.sc.interference = t[1]
        elif t[0] == "interfere" and len(t) == 3:
            a = self._int(ln, t[1], "node id")
            b = self._int(ln, t[2], "node id")
            if a is not None and b is not None:
                self._pairs.append((min(a, b), max(a, b)))
        else:
            self.fail(ln, f"unknown [network] line {' '.join(t)!r}")

    def _line_schedule(self, ln: int, t: list[str]) -> None:
        key = t[0]
        if key == "bo" and len(t) == 2:
            got = self._int(ln, t[1], "beacon order")
            if got is not None:
                self.sc.bo = got
        elif key == "nmax" and len(t) == 2:
            got = self._int(ln, t[1], "nmax")
            if got is not None:
                self.sc.nmax = got
        elif key == "policy" and len(t) == 2:
            if t[1] not in (FIRST_FIT, SPREAD):
                self.fail(ln, f"unknown policy {t[1]!r}")
            else:
                self.sc.policy = t[1]
        elif key == "grant_cap" and len(t) == 2:
            self.sc.grant_cap = self._int(ln, t[1], "grant cap")
        elif key == "cap" and len(t) >= 2:
            slots = [self._int(ln, v, "CAP slot") for v in t[1:]]
            if None not in slots:
                self.sc.cap_slots = tuple(sorted(
                    set(self.sc.cap_slots) | set(slots)))
        elif key == "gbs" and len(t) == 2 and t[1] == "auto":
            self._gbs_auto = True
        elif key == "gbs" and len(t) == 3:
            node = self._int(ln, t[1], "node id")
            slot = self._int(ln, t[2], "slot")
            if node is not None and slot is not None:
                self._gbs_auto = False
                self._gbs_lines.append((node, slot))
        elif key == "pds" and len(t) >= 2:
            node = self._int(ln, t[1], "node id")
            opts = self.opts(ln, t[2:], {"level": int, "count": int})
            if node is not None:
                self.sc.pds.append(PdsSpec(node, opts.get("level", 0),
                                           opts.get("count", 1)))
        elif key == "gts" and len(t) >= 2:
            node = self._int(ln, t[1], "node id")
            opts = self.opts(ln, t[2:], {"level": int, "count": int})
            if node is not None:
                self.sc.gts.append(GtsSpec(node, opts.get("level", 0),
                                           opts.get("count", 1)))
        elif key == "sgts" and len(t) >= 3:
            a = self._int(ln, t[1], "node id")
            b = self._int(ln, t[2], "node id")
            opts = self.opts(ln, t[3:], {"level": int})
            if a is not None and b is not None:
                self.sc.sgts.append(SgtsSpec(a, b, opts.get("level", 0)))
        elif key == "csma":
            opts = self.opts(ln, t[1:], {
                "min_be": int, "max_be": int, "max_backoffs": int, "cw": int,
                "frame_periods": int, "ack_periods": int})
            self._csma.update(opts)
        else:
            self.fail(ln, f"unknown [schedule] line {' '.join(t)!r}")

    def _line_radio(self, ln: int, t: list[str]) -> None:
        key = t[0]
        if key == "power_default" and len(t) == 2:
            if t[1] == "none":
                self._radio["default_dbm"] = None
            else:
                got = self._float(ln, t[1], "power")
                if got is not None:
                    self._radio["default_dbm"] = got
        elif key == "power" and len(t) == 4:
            tx = self._int(ln, t[1], "node id")
            rx = self._int(ln, t[2], "node id")
            p = self._float(ln, t[3], "power")
            if None not in (tx, rx, p):
                self._radio["entries"].append((tx, rx, p))
        elif key == "margin" and len(t) == 2:
            got = self._float(ln, t[1], "margin")
            if got is not None:
                self._radio["capture_margin_db"] = got
        elif key == "bias" and len(t) == 2:
            got = self._float(ln, t[1], "bias")
            if got is not None:
                self._radio["sync_offset_bias_db"] = got
        elif key == "loss" and len(t) >= 2:
            if t[1] == "ideal" and len(t) == 2:
                self._radio["loss"] = "ideal"
            elif t[1] == "lossy" and len(t) == 3:
                rate = self._float(ln, t[2], "error rate")
                if rate is not None:
                    self._radio["loss"] = "lossy"
                    self._radio["error_rate"] = rate
            else:
                self.fail(ln, f"loss is 'ideal' or 'lossy <rate>', got {' '.join(t[1:])!r}")
        elif key == "noise" and len(t) == 2:
            got = self._float(ln, t[1], "noise sigma")
            if got is not None:
                self._radio["noise_sigma_db"] = got
        else:
            self.fail(ln, f"unknown [radio] line {' '.join(t)!r}")

    def _line_traffic(self, ln: int, t: list[str]) -> None:
        if t[0] == "flow" and len(t) >= 2:
            node = self._int(ln, t[1], "node id")
            rest = t[2:]
            via = "owned"
            if rest and rest[0] == "cap":
                via = "cap"
                rest = rest[1:]
            opts = self.opts(ln, rest, {"period": int, "start": int})
            if node is not None:
                self.sc.flows.append(FlowSpec(node, opts.get("period", 1),
                                              opts.get("start", 0), via))
        elif t[0] == "request" and len(t) >= 2:
            node = self._int(ln, t[1], "node id")
            opts = self.opts(ln, t[2:], {"at": int, "level": int,
                                         "count": int, "priority": int})
            if node is not None:
                self.sc.requests.append(RequestSpec(
                    node, opts.get("at", 0), opts.get("level", 0),
                    opts.get("count", 1), opts.get("priority", 0)))
        else:
            self.fail(ln, f"unknown [traffic] line {' '.join(t)!r}")

    def _line_run(self, ln: int, t: list[str]) -> None:
        key = t[0]
        if key == "seed" and len(t) == 2:
            got = self._int(ln, t[1], "seed")
            if got is not None:
                self.sc.seed = got
        elif key == "duration" and len(t) == 2:
            got = self._int(ln, t[1], "duration")
            if got is not None:
                self.sc.duration_sf = got
        elif key == "power_on" and len(t) == 3:
            node = self._int(ln, t[1], "node id")
            if node is None:
                return
            if t[2] == UNIFORM:
                self.sc.power_on[node] = UNIFORM
            else:
                tick = self._int(ln, t[2], "power-on tick")
                if tick is not None:
                    self.sc.power_on[node] = tick
        elif key == "stop_when_associated" and len(t) == 2:
            try:
                self.sc.stop_when_associated = self._bool(ln, t[1])
            except ValueError:
                self.fail(ln, f"expected true or false, got {t[1]!r}")
        elif key == "trace" and len(t) == 2:
            try:
                self.sc.trace = self._bool(ln, t[1])
            except ValueError:
                self.fail(ln, f"expected true or false, got {t[1]!r}")
        elif key == "evidence_window" and len(t) == 2:
            got = self._int(ln, t[1], "evidence window")
            if got is not None:
                self.sc.evidence_window_sf = got
        else:
            self.fail(ln, f"unknown [run] line {' '.join(t)!r}")

    def _finish(self) -> None:
        self.sc.pairs = sorted(set(self._pairs))
        self._radio["entries"] = tuple(self._radio["entries"])
        self.sc.radio = RadioSpec(**self._radio)
        if self._csma:
            try:
                self.sc.csma = CsmaParams(**{
                    "min_be": 3, "max_be": 5, "max_backoffs": 4, "cw": 2,
                    "frame_periods": 3, "ack_periods": 1, **self._csma})
            except ValueError as e:
                self.issues.append((0, f"bad csma parameters: {e}"))
        if not self._gbs_auto:
            self.sc.gbs = dict(sorted(self._gbs_lines))


def parse_scenario(text: str) -> Scenario:
    return _Parser(text).parse()


def load_scenario(path) -> ScenarioFile:
    with open(path) as fh:
        text = fh.read()
    return ScenarioFile(text, parse_scenario(text))


def serialize_scenario(sc: Scenario) -> str:
    lines = ["[network]"]
    for n in sc.nodes:
        suffix = "" if n.parent is None else f" parent={n.parent}"
        lines.append(f"node {n.node} {n.role.value}{suffix}")
    lines.append(f"interference {sc.interference}")
    for a, b in sorted({(min(p), max(p)) for p in sc.pairs}):
        lines.append(f"interfere {a} {b}")

    lines += ["", "[schedule]",
              f"bo {sc.bo}", f"nmax {sc.nmax}", f"policy {sc.policy}"]
    if sc.grant_cap is not None:
        lines.append(f"grant_cap {sc.grant_cap}")
    if sc.cap_slots:
        lines.append("cap " + " ".join(map(str, sc.cap_slots)))
    if sc.gbs is None:
        lines.append("gbs auto")
    else:
        for node, slot in sorted(sc.gbs.items()):
            lines.append(f"gbs {node} {slot}")
    for p in sc.pds:
        lines.append(f"pds {p.node} level={p.level} count={p.slot_count}")
    for g in sc.gts:
        lines.append(f"gts {g.node} level={g.level} count={g.slot_count}")
    for s in sc.sgts:
        lines.append(f"sgts {s.node_a} {s.node_b} level={s.level}")
    c = sc.csma
    lines.append(
        f"csma min_be={c.min_be} max_be={c.max_be} max_backoffs={c.max_backoffs}"
        f" cw={c.cw} frame_periods={c.frame_periods} ack_periods={c.ack_periods}")

    r = sc.radio
    lines += ["", "[radio]"]
    lines.append("power_default " + ("none" if r.default_dbm is None
                                     else repr(r.default_dbm)))
    for tx, rx, p in r.entries:
        lines.append(f"power {tx} {rx} {p!r}")
    lines.append(f"margin {r.capture_margin_db!r}")
    lines.append(f"bias {r.sync_offset_bias_db!r}")
    lines.append("loss ideal" if r.loss == "ideal"
                 else f"loss lossy {r.error_rate!r}")
    lines.append(f"noise {r.noise_sigma_db!r}")

    lines += ["", "[traffic]"]
    for f in sc.flows:
        via = " cap" if f.via == "cap" else ""
        lines.append(f"flow {f.node}{via} period={f.period_sf} start={f.start_sf}")
    for q in sc.requests:
        lines.append(f"request {q.node} at={q.at_sf} level={q.level}"
                     f" count={q.slot_count} priority={q.priority}")

    lines += ["", "[run]", f"seed {sc.seed}", f"duration {sc.duration_sf}"]
    for node, when in sorted(sc.power_on.items()):
        lines.append(f"power_on {node} {when}")
    lines.append(f"stop_when_associated {'true' if sc.stop_when_associated else 'false'}")
    lines.append(f"trace {'true' if sc.trace else 'false'}")
    lines.append(f"evidence_window {sc.evidence_window_sf}")
    return "\n".join(lines) + "\n"
