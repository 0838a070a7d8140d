"""Request/response models shared by the HTTP service and the CLI client."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class CommandRequest(BaseModel):
    """Common inputs: a configuration file plus optional overrides."""

    config_path: str = Field(min_length=1)
    seed: Optional[int] = None  # overrides the training seed
    deterministic: bool = False  # accepted for symmetry; runs are always single-worker
    out_dir: Optional[str] = None  # overrides [output] dir


class EditRequest(CommandRequest):
    """Edit adds appearance overrides on top of the config's [edit] section."""

    roughness_scale: Optional[float] = None
    diffuse_rgb: Optional[list[float]] = None
    tint_scale: Optional[float] = None


class CommandResult(BaseModel):
    command: str
    ok: bool
    outputs: list[str] = Field(default_factory=list)  # files/dirs written
    metrics: dict[str, float] = Field(default_factory=dict)
    messages: list[str] = Field(default_factory=list)


class VerifySuiteRow(BaseModel):
    name: str
    cases: int
    worst: float
    threshold: float
    ok: bool


class VerifyResult(BaseModel):
    command: str = "verify"
    ok: bool
    suites: list[VerifySuiteRow]
