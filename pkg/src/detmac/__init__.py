"""detmac: a deterministic MAC layer — slot scheduling, capture-aware radio,
discrete-event simulation, and explicit-state protocol checking.

The superframe is a fixed grid of 16 equal slots; slot 0 carries the network
beacon.  Reservations are periodic: a level-n grant holds its slot once every
2**n superframes at a fixed phase, so the whole schedule repeats every
2**nmax superframes.  On top of that grid the package provides:

- ``core``: slot arithmetic, schedule tables, conflict detection.
- ``scheduler``: centralized grant placement (first-fit / spread), dedicated
  association slots, and evidence-gated slot sharing between stars.
- ``radio``: pairwise link powers and a capture rule for simultaneous frames.
- ``csma``: the slotted contention algorithm used inside open access regions.
- ``protocol``: beacon/request/grant state machines for every node role.
- ``engine``: the discrete-event simulator tying the above together.
- ``sweeps``: canned experiments (association latency, capture threshold,
  contention-vs-reservation contrast).
- ``formal``: a place/transition net checker for the protocol models.
- ``service`` + ``cli``: an HTTP facade and a thin command-line client.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .core import (
    SLOTS_PER_SUPERFRAME,
    Kind,
    Role,
    ScheduleTable,
    SlotAssignment,
    Topology,
    conflict_check,
    coordinator_superframe_span,
    hypercycle_superframes,
    phases_overlap,
    slot_ticks,
)
from .engine import (
    Engine,
    FlowSpec,
    GtsSpec,
    LatencySample,
    MetricsBundle,
    NodeSpec,
    PdsSpec,
    RadioSpec,
    RequestSpec,
    Scenario,
    ScenarioInvalid,
    SgtsSpec,
    latency_histogram,
    run,
)
from .formal import (
    NetModel,
    NetParseError,
    VerifyReport,
    bundled_model_names,
    check_bounded,
    check_live,
    check_reinitializable,
    explore,
    load_bundled,
    parse_net,
    verify_model,
)
from .radio import RadioEnvironment, Reception, resolve_slot
from .scenario import ScenarioFormatError, load_scenario, parse_scenario, serialize_scenario
from .scheduler import CaptureEvidence, Denial, GrantDecision, GtsRequest, Scheduler
from .sweeps import (
    association_bounds,
    baseline_contrast,
    sweep_association,
    sweep_capture,
)

__all__ = [
    "__version__",
    "SLOTS_PER_SUPERFRAME",
    "Kind",
    "Role",
    "ScheduleTable",
    "SlotAssignment",
    "Topology",
    "conflict_check",
    "coordinator_superframe_span",
    "hypercycle_superframes",
    "phases_overlap",
    "slot_ticks",
    "Engine",
    "FlowSpec",
    "GtsSpec",
    "LatencySample",
    "MetricsBundle",
    "NodeSpec",
    "PdsSpec",
    "RadioSpec",
    "RequestSpec",
    "Scenario",
    "ScenarioInvalid",
    "SgtsSpec",
    "latency_histogram",
    "run",
    "NetModel",
    "NetParseError",
    "VerifyReport",
    "bundled_model_names",
    "check_bounded",
    "check_live",
    "check_reinitializable",
    "explore",
    "load_bundled",
    "parse_net",
    "verify_model",
    "RadioEnvironment",
    "Reception",
    "resolve_slot",
    "ScenarioFormatError",
    "load_scenario",
    "parse_scenario",
    "serialize_scenario",
    "CaptureEvidence",
    "Denial",
    "GrantDecision",
    "GtsRequest",
    "Scheduler",
    "association_bounds",
    "baseline_contrast",
    "sweep_association",
    "sweep_capture",
]
