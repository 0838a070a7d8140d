"""HTTP surface: one endpoint per command, wrapping the core package."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import __version__
from . import commands as cm
from . import field as fd
from .schemas import CommandRequest, CommandResult, EditRequest, VerifyResult

app = FastAPI(title="reflfield", version=__version__)


def _config_from(req: CommandRequest):
    try:
        return cm.load_run_config(req.config_path, seed=req.seed, out_dir=req.out_dir)
    except cm.CommandError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


def _run(fn, *args) -> CommandResult:
    try:
        return fn(*args)
    except cm.CommandError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/commands/oracle-gen")
def oracle_gen(req: CommandRequest) -> CommandResult:
    return _run(cm.cmd_oracle_gen, _config_from(req))


@app.post("/commands/train")
def train(req: CommandRequest) -> CommandResult:
    return _run(cm.cmd_train, _config_from(req))


@app.post("/commands/render")
def render(req: CommandRequest) -> CommandResult:
    return _run(cm.cmd_render, _config_from(req))


@app.post("/commands/eval")
def evaluate(req: CommandRequest) -> CommandResult:
    return _run(cm.cmd_eval, _config_from(req))


@app.post("/commands/edit")
def edit(req: EditRequest) -> CommandResult:
    cfg = _config_from(req)
    overrides = cfg.edit
    changes = {}
    if req.roughness_scale is not None:
        changes["roughness_scale"] = req.roughness_scale
    if req.tint_scale is not None:
        changes["tint_scale"] = req.tint_scale
    if req.diffuse_rgb is not None:
        changes["diffuse_override"] = tuple(req.diffuse_rgb)
    if changes:
        import dataclasses

        overrides = dataclasses.replace(overrides, **changes)
    try:
        overrides.validate()
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    return _run(cm.cmd_edit, cfg, overrides)


@app.post("/commands/verify")
def verify(req: CommandRequest | None = None) -> VerifyResult:
    return cm.cmd_verify()
