"""Run configuration: one INI-style file drives a full reproduction run.

Sections and keys are fixed; unknown keys are rejected so typos fail loudly
instead of silently running defaults.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field as dc_field, replace
from typing import Optional

from . import field as fd
from . import losses as ls
from . import trainer as tr


@dataclass(frozen=True)
class SceneConfig:
    dir: str = "dataset"
    n_train: int = 30
    n_test: int = 20
    width: int = 32
    height: int = 32
    camera_angle_x: float = 0.6911112070083618
    seed: int = 0
    near: float = 2.0
    far: float = 6.0

    def validate(self) -> "SceneConfig":
        if not self.dir:
            raise ValueError("scene dir must be nonempty")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("view counts must be >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be >= 1")
        if not self.far > self.near > 0:
            raise ValueError("require 0 < near < far")
        return self


@dataclass(frozen=True)
class RenderConfig:
    width: int = 32
    height: int = 32
    n_samples: int = 48
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def validate(self) -> "RenderConfig":
        if self.width < 1 or self.height < 1:
            raise ValueError("render size must be >= 1")
        if self.n_samples < 2:
            raise ValueError("render n_samples must be >= 2")
        if len(self.background) != 3 or any(c < 0 or c > 1 for c in self.background):
            raise ValueError("background must be 3 values in [0,1]")
        return self


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig = dc_field(default_factory=SceneConfig)
    output_dir: str = "out"
    train: tr.TrainConfig = dc_field(default_factory=tr.TrainConfig)
    render: RenderConfig = dc_field(default_factory=RenderConfig)
    edit: fd.EditOverrides = dc_field(default_factory=fd.EditOverrides)

    def validate(self) -> "RunConfig":
        if not self.output_dir:
            raise ValueError("output dir must be nonempty")
        self.scene.validate()
        self.train.validate()
        self.render.validate()
        self.edit.validate()
        return self


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{key}: expected a boolean, got {raw!r}")


def _parse_floats(raw: str, key: str, n: int) -> tuple[float, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != n:
        raise ValueError(f"{key}: expected {n} numbers, got {raw!r}")
    return tuple(float(p) for p in parts)


def _parse_ints(raw: str, key: str) -> tuple[int, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ValueError(f"{key}: expected integers, got {raw!r}")
    return tuple(int(p) for p in parts)


# (section, key) -> attribute path; parsing is driven by the default's type.
_SCENE_KEYS = {
    "dir": str, "n_train": int, "n_test": int, "width": int, "height": int,
    "camera_angle_x": float, "seed": int, "near": float, "far": float,
}
_FIELD_KEYS = {
    "spatial_depth": int, "spatial_width": int, "directional_depth": int,
    "directional_width": int, "pe_levels": int, "sh_degrees": "ints",
    "bottleneck_width": int, "dir_encoding": str, "dir_pe_levels": int,
    "use_reflection": bool, "concat_viewdir": bool, "input_ndotwo": bool,
    "use_diffuse": bool, "use_tint": bool, "use_roughness": bool,
    "use_predicted_normals": bool, "bottleneck_noise_std": float,
}
_TRAIN_KEYS = {
    "iterations": int, "batch_rays": int, "n_samples": int, "lr_init": float,
    "lr_final": float, "warmup_steps": int, "beta1": float, "beta2": float,
    "eps": float, "clip_norm": float, "seed": int, "checkpoint_every": int,
    "lambda_p": float, "lambda_o": float, "stop_weight_grad": bool,
    "stop_density_normal_grad": bool,
}
_RENDER_KEYS = {
    "width": int, "height": int, "n_samples": int, "background": "rgb",
}
_EDIT_KEYS = {
    "roughness_scale": float, "diffuse_rgb": "rgb_opt", "tint_scale": float,
}
_SECTIONS = {
    "scene": _SCENE_KEYS,
    "output": {"dir": str},
    "field": _FIELD_KEYS,
    "train": _TRAIN_KEYS,
    "render": _RENDER_KEYS,
    "edit": _EDIT_KEYS,
}


def _convert(raw: str, kind, key: str):
    if kind is bool:
        return _parse_bool(raw, key)
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw.strip()
    if kind == "ints":
        return _parse_ints(raw, key)
    if kind in ("rgb", "rgb_opt"):
        return _parse_floats(raw, key, 3)
    raise AssertionError(kind)


def load_config(path: str) -> RunConfig:
    """Parse and validate a run configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not os.path.exists(path):
        raise FileNotFoundError(f"no configuration file at {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ValueError(f"{path}: {exc}") from None

    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"{path}: unknown section [{section}]")
        keys = _SECTIONS[section]
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in keys:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = _convert(raw, keys[key], key)
            except ValueError as exc:
                raise ValueError(f"{path}: [{section}] {exc}") from None

    scene = SceneConfig(**values.get("scene", {}))
    output_dir = values.get("output", {}).get("dir", "out")
    field_cfg = fd.FieldConfig(**values.get("field", {}))
    train_raw = dict(values.get("train", {}))
    lw = ls.LossWeights(
        lambda_p=train_raw.pop("lambda_p", 3e-4),
        lambda_o=train_raw.pop("lambda_o", 0.1),
        stop_weight_grad=train_raw.pop("stop_weight_grad", False),
        stop_density_normal_grad=train_raw.pop("stop_density_normal_grad", False),
    )
    train_cfg = tr.TrainConfig(**train_raw, loss_weights=lw, field=field_cfg)
    render_cfg = RenderConfig(**values.get("render", {}))
    edit_raw = dict(values.get("edit", {}))
    if "diffuse_rgb" in edit_raw:
        edit_raw["diffuse_override"] = edit_raw.pop("diffuse_rgb")
    edit_cfg = fd.EditOverrides(**edit_raw)
    try:
        return RunConfig(scene, str(output_dir), train_cfg, render_cfg, edit_cfg).validate()
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


DEFAULT_CONFIG_TEXT = """\
# Run configuration. Every key is optional; these are the defaults.

[scene]
dir = dataset            # where oracle-gen writes and train/eval read
n_train = 30
n_test = 20
width = 32
height = 32
camera_angle_x = 0.6911112070083618
seed = 0                 # camera placement seed for oracle-gen
near = 2.0
far = 6.0

[output]
dir = out                # checkpoints, renders, results land here

[field]
spatial_depth = 4
spatial_width = 64
directional_depth = 4
directional_width = 64
pe_levels = 6
sh_degrees = 1, 2, 4
bottleneck_width = 16
dir_encoding = ide       # ide | sh | pe
dir_pe_levels = 4
use_reflection = true    # false: directional branch sees the view direction
concat_viewdir = false
input_ndotwo = true
use_diffuse = true
use_tint = true
use_roughness = true     # false: no concentration attenuation
use_predicted_normals = true
bottleneck_noise_std = 0.1

[train]
iterations = 3000
batch_rays = 1024
n_samples = 64
lr_init = 2e-3
lr_final = 2e-5
warmup_steps = 512
beta1 = 0.9
beta2 = 0.999
eps = 1e-6
clip_norm = 1e-3
seed = 0
checkpoint_every = 0     # 0 disables periodic checkpoints
lambda_p = 3e-4
lambda_o = 0.1
stop_weight_grad = false
stop_density_normal_grad = false

[render]
width = 32
height = 32
n_samples = 48
background = 1.0, 1.0, 1.0

[edit]
roughness_scale = 1.0
# diffuse_rgb = 0.8, 0.1, 0.1   # uncomment to override the diffuse color
tint_scale = 1.0
"""


def write_default_config(path: str) -> None:
    with open(path, "w") as f:
        f.write(DEFAULT_CONFIG_TEXT)
