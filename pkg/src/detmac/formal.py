"""Explicit-state verification of small place/transition nets.

The association handshake is modelled as a Petri net, explored breadth-first
into a finite state graph, and checked for three properties: k-boundedness
(safe means 1-bounded), liveness (every transition can always fire again,
decided on the condensation of strongly connected components), and
reinitializability (the initial marking is a home state).  Exploration is
guarded by a per-place token cap so a structurally unbounded net produces a
verdict with a witness path instead of a hang.

Model files are plain text: a PLACES section of `name initial_tokens` lines
and a TRANSITIONS section of `name ; inputs ; outputs` lines, where each side
is a space-separated list of place:weight terms or `-` for none.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from importlib import resources

DEFAULT_MARKING_CAP = 8


class NetParseError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class Transition:
    name: str
    inputs: tuple[tuple[int, int], ...]   # (place index, weight)
    outputs: tuple[tuple[int, int], ...]

    def enabled(self, marking: tuple[int, ...]) -> bool:
        return all(marking[p] >= w for p, w in self.inputs)

    def fire(self, marking: tuple[int, ...]) -> tuple[int, ...]:
        out = list(marking)
        for p, w in self.inputs:
            out[p] -= w
        for p, w in self.outputs:
            out[p] += w
        return tuple(out)


@dataclass(frozen=True)
class NetModel:
    name: str
    places: tuple[str, ...]
    initial: tuple[int, ...]
    transitions: tuple[Transition, ...]


def parse_net(text: str, name: str = "net") -> NetModel:
    places: list[str] = []
    initial: list[int] = []
    transitions: list[Transition] = []
    index: dict[str, int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.upper() == "PLACES":
            section = "places"
            continue
        if line.upper() == "TRANSITIONS":
            section = "transitions"
            continue
        if section == "places":
            parts = line.split()
            if len(parts) != 2:
                raise NetParseError(lineno, f"expected 'place tokens', got {line!r}")
            pname, tokens = parts
            if pname in index:
                raise NetParseError(lineno, f"duplicate place {pname!r}")
            try:
                count = int(tokens)
            except ValueError:
                raise NetParseError(lineno, f"bad token count {tokens!r}") from None
            if count < 0:
                raise NetParseError(lineno, "token count must be non-negative")
            index[pname] = len(places)
            places.append(pname)
            initial.append(count)
        elif section == "transitions":
            parts = [p.strip() for p in line.split(";")]
            if len(parts) != 3:
                raise NetParseError(
                    lineno, "expected 'name ; inputs ; outputs'")
            tname, ins, outs = parts
            if any(t.name == tname for t in transitions):
                raise NetParseError(lineno, f"duplicate transition {tname!r}")

            def arcs(side: str) -> tuple[tuple[int, int], ...]:
                if side in ("", "-"):
                    return ()
                out = []
                for term in side.split():
                    pname, _, weight = term.partition(":")
                    if pname not in index:
                        raise NetParseError(lineno, f"unknown place {pname!r}")
                    w = int(weight) if weight else 1
                    if w < 1:
                        raise NetParseError(lineno, f"bad arc weight in {term!r}")
                    out.append((index[pname], w))
                return tuple(out)

            transitions.append(Transition(tname, arcs(ins), arcs(outs)))
        else:
            raise NetParseError(lineno, f"content outside any section: {line!r}")
    if not places:
        raise NetParseError(0, "net has no places")
    if not transitions:
        raise NetParseError(0, "net has no transitions")
    return NetModel(name, tuple(places), tuple(initial), tuple(transitions))


def serialize_net(model: NetModel) -> str:
    lines = ["PLACES"]
    lines += [f"{p} {tokens}" for p, tokens in zip(model.places, model.initial)]
    lines.append("TRANSITIONS")
    for t in model.transitions:
        def side(arcs: tuple[tuple[int, int], ...]) -> str:
            if not arcs:
                return "-"
            return " ".join(f"{model.places[p]}:{w}" for p, w in arcs)
        lines.append(f"{t.name} ; {side(t.inputs)} ; {side(t.outputs)}")
    return "\n".join(lines) + "\n"


def bundled_model_names() -> list[str]:
    root = resources.files("detmac").joinpath("models")
    return sorted(p.name.removesuffix(".net")
                  for p in root.iterdir() if p.name.endswith(".net"))


def load_bundled(name: str) -> NetModel:
    root = resources.files("detmac").joinpath("models")
    path = root.joinpath(f"{name}.net")
    if not path.is_file():
        raise KeyError(f"no bundled model {name!r}; have {bundled_model_names()}")
    return parse_net(path.read_text(), name)


# -- exploration ---------------------------------------------------------------


@dataclass(frozen=True)
class CapWitness:
    place: str
    marking: tuple[int, ...]
    path: tuple[str, ...]  # transition names from the initial marking


@dataclass
class StateGraph:
    states: list[tuple[int, ...]]
    edges: list[tuple[int, int, int]]  # (src state, transition index, dst state)
    succ: list[list[tuple[int, int]]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.succ:
            self.succ = [[] for _ in self.states]
            for src, t, dst in self.edges:
                self.succ[src].append((t, dst))


@dataclass
class ExploreResult:
    graph: StateGraph | None
    cap_exceeded: CapWitness | None


def explore(model: NetModel, marking_cap: int = DEFAULT_MARKING_CAP) -> ExploreResult:
    """Breadth-first reachability with a per-place token cap.

    Deterministic: transitions are tried in model order, states are numbered
    in discovery order.  Exceeding the cap aborts with a witness path; the
    graph is only returned when complete.
    """
    seen: dict[tuple[int, ...], int] = {model.initial: 0}
    states = [model.initial]
    parents: dict[int, tuple[int, str]] = {}
    edges: list[tuple[int, int, int]] = []
    queue = deque([0])
    while queue:
        src = queue.popleft()
        marking = states[src]
        for ti, t in enumerate(model.transitions):
            if not t.enabled(marking):
                continue
            nxt = t.fire(marking)
            over = [i for i, tokens in enumerate(nxt) if tokens > marking_cap]
            if over:
                path = [t.name]
                at = src
                while at in parents:
                    at, via = parents[at]
                    path.append(via)
                return ExploreResult(None, CapWitness(
                    model.places[over[0]], nxt, tuple(reversed(path))))
            if nxt not in seen:
                seen[nxt] = len(states)
                parents[len(states)] = (src, t.name)
                states.append(nxt)
                queue.append(seen[nxt])
            edges.append((src, ti, seen[nxt]))
    return ExploreResult(StateGraph(states, edges), None)


def export_edges(graph: StateGraph, model: NetModel) -> str:
    """Edge-list text: one `src transition dst` line per edge."""
    lines = [f"s{src} {model.transitions[t].name} s{dst}"
             for src, t, dst in graph.edges]
    return "\n".join(lines) + ("\n" if lines else "")


# -- checks --------------------------------------------------------------------


@dataclass
class BoundReport:
    bounded: bool
    k: int | None
    per_place: dict[str, int]
    cap_exceeded: CapWitness | None = None

    @property
    def safe(self) -> bool:
        return self.bounded and self.k == 1


@dataclass
class LiveReport:
    live: bool
    dead_transitions: list[str]
    deadlock_states: list[tuple[int, ...]]


@dataclass
class HomeReport:
    home: bool
    counterexample: tuple[int, ...] | None


def check_bounded(model: NetModel, result: ExploreResult) -> BoundReport:
    if result.cap_exceeded is not None:
        return BoundReport(False, None, {}, result.cap_exceeded)
    graph = result.graph
    assert graph is not None
    per_place = {p: max(s[i] for s in graph.states)
                 for i, p in enumerate(model.places)}
    return BoundReport(True, max(per_place.values()), per_place)


def _condense(graph: StateGraph) -> tuple[list[int], list[list[int]]]:
    """Kosaraju SCCs: returns (component id per state, members per component)."""
    n = len(graph.states)
    order: list[int] = []
    seen = [False] * n
    for start in range(n):
        if seen[start]:
            continue
        stack: list[tuple[int, int]] = [(start, 0)]
        seen[start] = True
        while stack:
            node, i = stack[-1]
            if i < len(graph.succ[node]):
                stack[-1] = (node, i + 1)
                nxt = graph.succ[node][i][1]
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append((nxt, 0))
            else:
                order.append(node)
                stack.pop()
    pred: list[list[int]] = [[] for _ in range(n)]
    for src, _, dst in graph.edges:
        pred[dst].append(src)
    comp = [-1] * n
    members: list[list[int]] = []
    for node in reversed(order):
        if comp[node] != -1:
            continue
        cid = len(members)
        members.append([])
        todo = [node]
        comp[node] = cid
        while todo:
            at = todo.pop()
            members[cid].append(at)
            for back in pred[at]:
                if comp[back] == -1:
                    comp[back] = cid
                    todo.append(back)
    return comp, members


def check_live(model: NetModel, graph: StateGraph) -> LiveReport:
    """A transition is live when it stays reachable from every state.

    On the condensation, that holds exactly when every sink component fires
    the transition internally: wherever execution ends up trapped, the
    transition must still occur there.
    """
    comp, members = _condense(graph)
    count = len(members)
    is_sink = [True] * count
    fires: list[set[int]] = [set() for _ in range(count)]
    for src, t, dst in graph.edges:
        if comp[src] != comp[dst]:
            is_sink[comp[src]] = False
        else:
            fires[comp[src]].add(t)
    dead = [t.name for ti, t in enumerate(model.transitions)
            if any(is_sink[c] and ti not in fires[c] for c in range(count))]
    deadlocks = [graph.states[s] for s in range(len(graph.states))
                 if not graph.succ[s]]
    return LiveReport(not dead, dead, deadlocks)


def check_reinitializable(graph: StateGraph) -> HomeReport:
    """Is the initial marking reachable again from every reachable state?"""
    n = len(graph.states)
    pred: list[list[int]] = [[] for _ in range(n)]
    for src, _, dst in graph.edges:
        pred[dst].append(src)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    while queue:
        at = queue.popleft()
        for back in pred[at]:
            if not seen[back]:
                seen[back] = True
                queue.append(back)
    for s in range(n):
        if not seen[s]:
            return HomeReport(False, graph.states[s])
    return HomeReport(True, None)


@dataclass
class VerifyReport:
    model_name: str
    state_count: int
    edge_count: int
    bound: BoundReport
    live: LiveReport | None
    home: HomeReport | None

    @property
    def ok(self) -> bool:
        return (self.bound.bounded and self.live is not None and self.live.live
                and self.home is not None and self.home.home)

    def rows(self) -> list[tuple[str, str, str]]:
        out = [("states", str(self.state_count), ""),
               ("edges", str(self.edge_count), "")]
        if self.bound.cap_exceeded is not None:
            w = self.bound.cap_exceeded
            out.append(("bounded", "CAP_EXCEEDED",
                        f"place {w.place} via {' '.join(w.path)}"))
            return out
        out.append(("bounded", f"{self.bound.k}-bounded",
                    "safe" if self.bound.safe else ""))
        assert self.live is not None and self.home is not None
        out.append(("live", "yes" if self.live.live else "NO",
                    " ".join(self.live.dead_transitions)))
        out.append(("reinitializable", "yes" if self.home.home else "NO",
                    str(self.home.counterexample or "")))
        return out


def verify_model(model: NetModel,
                 marking_cap: int = DEFAULT_MARKING_CAP) -> VerifyReport:
    result = explore(model, marking_cap)
    bound = check_bounded(model, result)
    if result.graph is None:
        return VerifyReport(model.name, 0, 0, bound, None, None)
    graph = result.graph
    return VerifyReport(model.name, len(graph.states), len(graph.edges),
                        bound, check_live(model, graph),
                        check_reinitializable(graph))
