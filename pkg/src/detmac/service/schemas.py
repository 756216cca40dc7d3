"""Request and response bodies for the HTTP surface."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

Format = Literal["table", "json-lines"]


class Issue(BaseModel):
    line: int | None = None
    message: str


class RenderedFile(BaseModel):
    name: str
    content: str


class SimulateRequest(BaseModel):
    scenario: str
    seed: int | None = None
    fmt: Format = "table"
    trace: bool = False


class SimulateResponse(BaseModel):
    ok: bool
    input_error: bool = False
    summary: str = ""
    files: list[RenderedFile] = Field(default_factory=list)
    issues: list[Issue] = Field(default_factory=list)


class ValidateRequest(BaseModel):
    scenario: str


class ValidateResponse(BaseModel):
    ok: bool
    issues: list[Issue] = Field(default_factory=list)


class AssociationSweepRequest(BaseModel):
    bo: int = 3
    nmax: int = 3
    levels: list[int] = Field(default_factory=lambda: [0, 1, 2, 3])
    trials: int = 1000
    seed: int = 0
    fmt: Format = "table"


class AssociationSweepResponse(BaseModel):
    ok: bool
    input_error: bool = False
    violations: int = 0
    summary: str = ""
    files: list[RenderedFile] = Field(default_factory=list)
    issues: list[Issue] = Field(default_factory=list)


class CaptureSweepRequest(BaseModel):
    delta_min: float = -30.0
    delta_max: float = 30.0
    step: float = 1.0
    trials: int = 8
    margin_db: float = 10.0
    bias_db: float = 0.0
    noise_sigma_db: float = 0.0
    loss: Literal["ideal", "lossy"] = "ideal"
    error_rate: float = 0.0
    seed: int = 0
    fmt: Format = "table"


class CaptureSweepResponse(BaseModel):
    ok: bool
    input_error: bool = False
    summary: str = ""
    files: list[RenderedFile] = Field(default_factory=list)
    issues: list[Issue] = Field(default_factory=list)


class VerifyRequest(BaseModel):
    model_text: str | None = None
    bundled: str | None = None
    marking_cap: int = 8
    fmt: Format = "table"


class VerifyResponse(BaseModel):
    ok: bool
    input_error: bool = False
    summary: str = ""
    files: list[RenderedFile] = Field(default_factory=list)
    issues: list[Issue] = Field(default_factory=list)


class ModelsResponse(BaseModel):
    names: list[str]


class HealthResponse(BaseModel):
    ok: bool
    version: str
