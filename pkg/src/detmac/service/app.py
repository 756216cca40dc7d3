"""HTTP facade over the simulator, the sweeps and the model checker.

Every endpoint is a pure function of its request body: no state survives a
call, so any number of clients can share one instance.  Domain problems
(unparseable scenarios, invalid topologies, bad model files) come back as
structured issues with `ok=false` and `input_error=true`; property violations
found by an otherwise successful computation come back as `ok=false` alone.
Transport-level errors are left to FastAPI.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI

from .. import __version__
from ..engine import Engine, ScenarioInvalid, run
from ..formal import (
    NetParseError,
    bundled_model_names,
    explore,
    export_edges,
    load_bundled,
    parse_net,
    verify_model,
)
from ..reporting import (
    association_summary_rows,
    association_sweep_rows,
    association_sweep_summary,
    capture_rows,
    capture_summary,
    extension,
    render,
    simulate_files,
    simulate_summary,
    verify_rows,
    verify_summary,
)
from ..scenario import ScenarioFormatError, parse_scenario
from ..sweeps import sweep_association, sweep_capture
from .schemas import (
    AssociationSweepRequest,
    AssociationSweepResponse,
    CaptureSweepRequest,
    CaptureSweepResponse,
    HealthResponse,
    Issue,
    ModelsResponse,
    RenderedFile,
    SimulateRequest,
    SimulateResponse,
    ValidateRequest,
    ValidateResponse,
    VerifyRequest,
    VerifyResponse,
)

log = logging.getLogger(__name__)

app = FastAPI(title="detmac", description="deterministic MAC toolkit")


def _scenario_issues(exc: Exception) -> list[Issue]:
    if isinstance(exc, ScenarioFormatError):
        return [Issue(line=line, message=msg) for line, msg in exc.issues]
    if isinstance(exc, ScenarioInvalid):
        return [Issue(message=msg) for msg in exc.issues]
    return [Issue(message=str(exc))]


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(ok=True, version=__version__)


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    try:
        sc = parse_scenario(req.scenario)
        if req.seed is not None:
            sc.seed = req.seed
        if req.trace:
            sc.trace = True
        bundle = run(sc)
    except (ScenarioFormatError, ScenarioInvalid) as exc:
        return SimulateResponse(ok=False, input_error=True,
                                issues=_scenario_issues(exc))
    files = [RenderedFile(name=n, content=c)
             for n, c in simulate_files(bundle, req.fmt)]
    return SimulateResponse(ok=True, summary=simulate_summary(bundle),
                            files=files)


@app.post("/validate", response_model=ValidateResponse)
def validate(req: ValidateRequest) -> ValidateResponse:
    try:
        sc = parse_scenario(req.scenario)
    except ScenarioFormatError as exc:
        return ValidateResponse(ok=False, issues=_scenario_issues(exc))
    problems = sc.validate()
    if problems:
        return ValidateResponse(ok=False,
                                issues=[Issue(message=m) for m in problems])
    try:
        Engine(sc)  # placement can still fail where pure checks cannot see it
    except ScenarioInvalid as exc:
        return ValidateResponse(ok=False, issues=_scenario_issues(exc))
    return ValidateResponse(ok=True)


@app.post("/sweep/association", response_model=AssociationSweepResponse)
def association_sweep(req: AssociationSweepRequest) -> AssociationSweepResponse:
    if req.trials < 1 or not req.levels:
        return AssociationSweepResponse(
            ok=False, input_error=True,
            issues=[Issue(message="need at least one level and one trial")])
    if any(not 0 <= lv <= req.nmax for lv in req.levels):
        return AssociationSweepResponse(
            ok=False, input_error=True,
            issues=[Issue(message=f"levels must lie in [0, {req.nmax}]")])
    try:
        results = sweep_association(tuple(req.levels), req.bo, req.trials,
                                    req.seed, req.nmax)
    except (ScenarioInvalid, ValueError) as exc:
        return AssociationSweepResponse(ok=False, input_error=True,
                                        issues=_scenario_issues(exc))
    ext = extension(req.fmt)
    files = [
        RenderedFile(name=f"association_histogram.{ext}",
                     content=render(*association_sweep_rows(results), req.fmt)),
        RenderedFile(name=f"association_summary.{ext}",
                     content=render(*association_summary_rows(results), req.fmt)),
    ]
    violations = sum(r.violations for r in results)
    return AssociationSweepResponse(
        ok=violations == 0, violations=violations,
        summary=association_sweep_summary(results), files=files)


@app.post("/sweep/capture", response_model=CaptureSweepResponse)
def capture_sweep(req: CaptureSweepRequest) -> CaptureSweepResponse:
    if req.step <= 0 or req.trials < 1 or req.delta_max < req.delta_min:
        return CaptureSweepResponse(
            ok=False, input_error=True,
            issues=[Issue(message="need positive step, trials and a non-empty range")])
    try:
        points = sweep_capture(req.delta_min, req.delta_max, req.step,
                               req.trials, req.margin_db, req.bias_db,
                               req.noise_sigma_db, req.loss, req.error_rate,
                               req.seed)
    except (ScenarioInvalid, ValueError) as exc:
        return CaptureSweepResponse(ok=False, input_error=True,
                                    issues=_scenario_issues(exc))
    files = [RenderedFile(
        name=f"capture.{extension(req.fmt)}",
        content=render(*capture_rows(points), req.fmt))]
    return CaptureSweepResponse(ok=True, summary=capture_summary(points),
                                files=files)


@app.post("/verify", response_model=VerifyResponse)
def verify(req: VerifyRequest) -> VerifyResponse:
    if (req.model_text is None) == (req.bundled is None):
        return VerifyResponse(
            ok=False, input_error=True,
            issues=[Issue(message="pass exactly one of model_text or bundled")])
    try:
        if req.bundled is not None:
            model = load_bundled(req.bundled)
        else:
            model = parse_net(req.model_text or "")
    except NetParseError as exc:
        return VerifyResponse(ok=False, input_error=True,
                              issues=[Issue(line=exc.line, message=exc.message)])
    except KeyError as exc:
        return VerifyResponse(ok=False, input_error=True,
                              issues=[Issue(message=exc.args[0])])
    report = verify_model(model, req.marking_cap)
    files = [RenderedFile(name=f"verify.{extension(req.fmt)}",
                          content=render(*verify_rows(report), req.fmt))]
    result = explore(model, req.marking_cap)
    if result.graph is not None:
        files.append(RenderedFile(name="state_graph.txt",
                                  content=export_edges(result.graph, model)))
    return VerifyResponse(ok=report.ok, summary=verify_summary(report),
                          files=files)


@app.get("/models", response_model=ModelsResponse)
def models() -> ModelsResponse:
    return ModelsResponse(names=bundled_model_names())
