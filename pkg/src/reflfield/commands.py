"""Command implementations shared by the HTTP service and the CLI.

Each function takes a resolved RunConfig (plus any command-specific inputs)
and returns a CommandResult; domain failures raise CommandError with a
one-line message suitable for a terminal or an HTTP 400 body.
"""

from __future__ import annotations

import dataclasses
import os
from typing import Optional

import numpy as np

from . import color as colorlib
from . import config as cfgmod
from . import field as fd
from . import metrics as mt
from . import pngio
from . import renderer as rd
from . import scenes as sc
from . import trainer as tr
from . import verify as vf
from .schemas import CommandResult, VerifyResult, VerifySuiteRow


class CommandError(ValueError):
    """Domain failure with a one-line diagnostic."""


def load_run_config(
    path: str, seed: Optional[int] = None, out_dir: Optional[str] = None
) -> cfgmod.RunConfig:
    try:
        cfg = cfgmod.load_config(path)
    except (FileNotFoundError, ValueError) as exc:
        raise CommandError(str(exc)) from None
    if seed is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=seed))
    if out_dir:
        cfg = dataclasses.replace(cfg, output_dir=out_dir)
    return cfg


def _checkpoint_path(cfg: cfgmod.RunConfig) -> str:
    return os.path.join(cfg.output_dir, "checkpoint_final.rfld")


def _load_params(cfg: cfgmod.RunConfig) -> fd.ModelParams:
    path = _checkpoint_path(cfg)
    if not os.path.exists(path):
        raise CommandError(f"no checkpoint at {path}; run train first")
    try:
        return fd.ModelParams.load(path, cfg.train.field)
    except ValueError as exc:
        raise CommandError(str(exc)) from None


def _load_split(cfg: cfgmod.RunConfig, split: str) -> sc.SceneDataset:
    try:
        return sc.load_dataset(cfg.scene.dir, split)
    except (FileNotFoundError, ValueError, pngio.PngError) as exc:
        raise CommandError(str(exc)) from None


def cmd_oracle_gen(cfg: cfgmod.RunConfig) -> CommandResult:
    counts = sc.generate_dataset(
        cfg.scene.dir,
        None,
        n_train=cfg.scene.n_train,
        n_test=cfg.scene.n_test,
        width=cfg.scene.width,
        height=cfg.scene.height,
        camera_angle_x=cfg.scene.camera_angle_x,
        seed=cfg.scene.seed,
    )
    return CommandResult(
        command="oracle-gen",
        ok=True,
        outputs=[cfg.scene.dir],
        metrics={f"n_{k}": float(v) for k, v in counts.items()},
        messages=[
            f"wrote {counts['train']} train / {counts['test']} test views "
            f"at {cfg.scene.width}x{cfg.scene.height} to {cfg.scene.dir}"
        ],
    )


def cmd_train(cfg: cfgmod.RunConfig) -> CommandResult:
    dataset = _load_split(cfg, "train")
    origins, directions, colors = dataset.rays()
    os.makedirs(cfg.output_dir, exist_ok=True)
    log_path = os.path.join(cfg.output_dir, "train_log.txt")
    lines: list[str] = []
    try:
        result = tr.train(
            origins,
            directions,
            colors,
            cfg.train,
            cfg.scene.near,
            cfg.scene.far,
            background=cfg.render.background,
            out_dir=cfg.output_dir,
            log_fn=lines.append,
        )
    except RuntimeError as exc:
        raise CommandError(str(exc)) from None
    with open(log_path, "w") as f:
        for entry in result.log:
            f.write(entry.line() + "\n")
    final = result.log[-1]
    return CommandResult(
        command="train",
        ok=True,
        outputs=[result.checkpoint_path, log_path],
        metrics={
            "final_total": final.total,
            "final_data": final.data,
            "final_rp": final.predicted_normal,
            "final_ro": final.orientation,
        },
        messages=lines[-3:],
    )


def _render_views(
    cfg: cfgmod.RunConfig,
    params: fd.ModelParams,
    dataset: sc.SceneDataset,
    out_subdir: str,
    edit: Optional[fd.EditOverrides] = None,
) -> tuple[list[str], list[dict[str, np.ndarray]]]:
    out_dir = os.path.join(cfg.output_dir, out_subdir)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    frames = []
    h, w = dataset.resolution
    for v in range(dataset.n_views):
        img = rd.render_image(
            params,
            cfg.train.field,
            w,
            h,
            dataset.camera_angle_x,
            dataset.poses[v],
            cfg.scene.near,
            cfg.scene.far,
            cfg.render.n_samples,
            background=cfg.render.background,
            edit=edit,
        )
        frames.append(img)
        base = os.path.join(out_dir, f"r_{v}")
        pngio.write(base + ".png", colorlib.encode_image_u8(img["color"]))
        pngio.write(
            base + "_normal.png",
            np.round(255.0 * (img["normal"] + 1.0) / 2.0).astype(np.uint8),
        )
        pngio.write(
            base + "_opacity.png",
            colorlib.encode_image_u8(img["opacity"][..., None]),
        )
        written.append(base + ".png")
    return written, frames


def cmd_render(cfg: cfgmod.RunConfig) -> CommandResult:
    params = _load_params(cfg)
    dataset = _load_split(cfg, "test")
    written, _ = _render_views(cfg, params, dataset, "render")
    return CommandResult(
        command="render",
        ok=True,
        outputs=written,
        messages=[f"rendered {len(written)} test views to {os.path.dirname(written[0])}"],
    )


def cmd_eval(cfg: cfgmod.RunConfig) -> CommandResult:
    params = _load_params(cfg)
    dataset = _load_split(cfg, "test")
    h, w = dataset.resolution
    # MAE is scored on the normals the model shades with: the predicted field
    # when enabled, the density-gradient field otherwise.
    normal_key = "normal_pred" if cfg.train.field.use_predicted_normals else "normal"
    psnrs = []
    pred_normals = []
    for v in range(dataset.n_views):
        img = rd.render_image(
            params,
            cfg.train.field,
            w,
            h,
            dataset.camera_angle_x,
            dataset.poses[v],
            cfg.scene.near,
            cfg.scene.far,
            cfg.render.n_samples,
            background=cfg.render.background,
        )
        psnrs.append(mt.psnr(img["color"], dataset.images[v].astype(np.float64)))
        pred_normals.append((img[normal_key], img["opacity"]))

    if dataset.masks is not None:
        masks = dataset.masks
    else:
        masks = np.stack([op > 0.5 for _, op in pred_normals])
    if dataset.normals is None:
        raise CommandError(
            f"{cfg.scene.dir}: test split has no normal maps; cannot compute MAE"
        )
    mae = mt.normal_mae(
        np.stack([n for n, _ in pred_normals]), dataset.normals, masks
    )
    psnr_mean = float(np.mean(psnrs))

    os.makedirs(cfg.output_dir, exist_ok=True)
    results_path = os.path.join(cfg.output_dir, "results.txt")
    with open(results_path, "w") as f:
        f.write("# metrics over the test split\n")
        f.write("# mae_pooling=all_masked_pixels\n")
        source = "predicted" if normal_key == "normal_pred" else "density"
        f.write(f"# mae_normals={source}\n")
        f.write(f"psnr_mean={psnr_mean:.6f}\n")
        f.write(f"mae_mean={mae:.6f}\n")
        for v, p in enumerate(psnrs):
            f.write(f"psnr_{dataset.names[v].replace('/', '_')}={p:.6f}\n")
    return CommandResult(
        command="eval",
        ok=True,
        outputs=[results_path],
        metrics={"psnr_mean": psnr_mean, "mae_mean": mae},
        messages=[f"psnr_mean={psnr_mean:.3f} dB  mae_mean={mae:.3f} deg"],
    )


def cmd_edit(cfg: cfgmod.RunConfig, edit: Optional[fd.EditOverrides] = None) -> CommandResult:
    overrides = (edit if edit is not None else cfg.edit).validate()
    params = _load_params(cfg)
    dataset = _load_split(cfg, "test")
    written, _ = _render_views(cfg, params, dataset, "edit", edit=overrides)
    described = (
        f"roughness_scale={overrides.roughness_scale} "
        f"tint_scale={overrides.tint_scale} "
        f"diffuse_override={overrides.diffuse_override}"
    )
    return CommandResult(
        command="edit",
        ok=True,
        outputs=written,
        messages=[f"rendered {len(written)} edited views ({described})"],
    )


def cmd_verify() -> VerifyResult:
    rows = vf.run_all()
    return VerifyResult(
        ok=all(r.ok for r in rows),
        suites=[
            VerifySuiteRow(
                name=r.name, cases=r.cases, worst=r.worst,
                threshold=r.threshold, ok=r.ok,
            )
            for r in rows
        ],
    )
