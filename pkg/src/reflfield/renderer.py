"""Volumetric rendering: cameras, ray sampling, quadrature, compositing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import field as fd


@dataclass
class RayBatch:
    """Rays as parallel arrays: origins (R, 3), unit directions (R, 3)."""

    origins: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        self.origins = np.atleast_2d(np.asarray(self.origins, dtype=np.float64))
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=np.float64))
        if self.origins.shape != self.directions.shape or self.origins.shape[-1] != 3:
            raise ValueError(
                f"origins {self.origins.shape} and directions "
                f"{self.directions.shape} must both be (R, 3)"
            )

    def __len__(self) -> int:
        return self.origins.shape[0]


def camera_rays(width: int, height: int, camera_angle_x: float, pose: np.ndarray) -> RayBatch:
    """One ray per pixel through its center, row-major pixel order.

    `pose` is a 4x4 camera-to-world matrix; the camera looks along its -z
    axis, x right, y up. Returns unit world-space directions.
    """
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (4, 4):
        raise ValueError(f"pose must be 4x4, got {pose.shape}")
    rot = pose[:3, :3]
    if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-6):
        raise ValueError("pose rotation block is not orthonormal")
    focal = 0.5 * width / np.tan(0.5 * camera_angle_x)
    i, j = np.meshgrid(
        np.arange(width, dtype=np.float64),
        np.arange(height, dtype=np.float64),
        indexing="xy",
    )
    dirs_cam = np.stack(
        [
            (i + 0.5 - 0.5 * width) / focal,
            -(j + 0.5 - 0.5 * height) / focal,
            -np.ones_like(i),
        ],
        axis=-1,
    )
    dirs_world = dirs_cam.reshape(-1, 3) @ rot.T
    dirs_world /= np.linalg.norm(dirs_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose[:3, 3], dirs_world.shape).copy()
    return RayBatch(origins, dirs_world)


@dataclass
class SampleSet:
    """Distances and spacings for quadrature along each ray.

    t has shape (R, S); deltas has the same shape, with the final bin closed
    by the far plane so opacity can saturate.
    """

    t: np.ndarray
    deltas: np.ndarray


def stratified_samples(
    n_rays: int,
    n_samples: int,
    near: float,
    far: float,
    rng: Optional[np.random.Generator] = None,
) -> SampleSet:
    """Bin midpoints when rng is None, else one uniform jitter per bin."""
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples per ray, got {n_samples}")
    if not far > near:
        raise ValueError(f"far ({far}) must exceed near ({near})")
    edges = np.linspace(near, far, n_samples + 1)
    lower = np.broadcast_to(edges[:-1], (n_rays, n_samples))
    width = (far - near) / n_samples
    if rng is None:
        t = lower + 0.5 * width
        t = np.ascontiguousarray(t)
    else:
        t = lower + width * rng.uniform(size=(n_rays, n_samples))
    deltas = np.diff(t, axis=-1)
    deltas = np.concatenate([deltas, far - t[:, -1:]], axis=-1)
    return SampleSet(t, deltas)


def sample_points(rays: RayBatch, samples: SampleSet) -> np.ndarray:
    """World positions, shape (R, S, 3)."""
    return rays.origins[:, None, :] + samples.t[..., None] * rays.directions[:, None, :]


def quadrature_weights(tau, deltas) -> ad.Tensor:
    """Compositing weights from densities tau (R, S) and spacings deltas.

    w_i = T_i * (1 - exp(-tau_i * delta_i)), with T_i the transmittance
    accumulated over earlier bins. Accepts a tape tensor or array for tau;
    always returns the tape tensor so gradients flow when tau has them.
    """
    if not isinstance(tau, ad.Tensor):
        tau = ad.constant(np.asarray(tau, dtype=np.float64))
    if np.any(tau.values < 0):
        raise ValueError("densities must be nonnegative")
    deltas_c = ad.constant(np.asarray(deltas, dtype=tau.values.dtype))
    if deltas_c.values.shape != tau.values.shape:
        raise ValueError(
            f"deltas shape {deltas_c.values.shape} must match tau {tau.values.shape}"
        )
    optical = ad.mul(tau, deltas_c)
    transmittance = ad.texp(ad.neg(ad.cumsum_exclusive(optical)))
    alpha = ad.sub(1.0, ad.texp(ad.neg(optical)))
    return ad.mul(transmittance, alpha)


def composite(weights: ad.Tensor, values: ad.Tensor, background=None) -> ad.Tensor:
    """Sum_i w_i v_i along the sample axis, plus leftover background.

    weights (R, S), values (R, S, C) -> (R, C).
    """
    r, s = weights.values.shape
    w3 = ad.reshape(weights, (r, s, 1))
    out = ad.tsum(ad.mul(w3, values), axis=1)
    if background is not None:
        bg = np.asarray(background, dtype=weights.values.dtype)
        leftover = ad.sub(1.0, ad.tsum(weights, axis=1, keepdims=True))
        out = ad.add(out, ad.mul(leftover, ad.constant(bg.reshape(1, -1))))
    return out


def accumulate_normals(weights: ad.Tensor, normals: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
    """Weight-blend per-sample unit normals; also return the unit version."""
    blended = composite(weights, normals)
    return blended, ad.normalize(blended)


@dataclass
class RenderOutput:
    """Per-ray render results; tape tensors so losses attach directly."""

    color: ad.Tensor  # (R, 3)
    weights: ad.Tensor  # (R, S)
    opacity: ad.Tensor  # (R, 1)
    depth: ad.Tensor  # (R, 1)
    normal_density: ad.Tensor  # (R, 3) accumulated, unnormalized
    normal_density_unit: ad.Tensor  # (R, 3)
    normal_pred: ad.Tensor  # (R, 3)
    normal_pred_unit: ad.Tensor  # (R, 3)
    points: ShadeInfo = None  # type: ignore[assignment]


@dataclass
class ShadeInfo:
    """Per-sample quantities kept for loss terms, shapes (R, S, ...)."""

    shade: fd.ShadePoint
    directions: np.ndarray  # (R, 3) unit ray directions


def render_rays(
    params: fd.ModelParams,
    config: fd.FieldConfig,
    rays: RayBatch,
    samples: SampleSet,
    background=(1.0, 1.0, 1.0),
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
    edit: Optional[fd.EditOverrides] = None,
) -> RenderOutput:
    """Shade every sample and composite along each ray."""
    r, s = samples.t.shape
    pts = sample_points(rays, samples).reshape(r * s, 3)
    view = np.repeat(rays.directions, s, axis=0)
    shade = fd.shade_point(params, config, pts, view, mode=mode, rng=rng, edit=edit)

    tau = ad.reshape(shade.tau, (r, s))
    weights = quadrature_weights(tau, samples.deltas)
    color = composite(weights, ad.reshape(shade.color, (r, s, 3)), background)
    opacity = ad.tsum(weights, axis=1, keepdims=True)
    dtype = weights.values.dtype
    t_const = ad.constant(samples.t.astype(dtype))
    depth = ad.div(
        ad.tsum(ad.mul(weights, t_const), axis=1, keepdims=True),
        ad.clip_min(opacity, 1e-10),
    )
    nd, nd_unit = accumulate_normals(weights, ad.reshape(shade.normal_density, (r, s, 3)))
    npred, npred_unit = accumulate_normals(
        weights, ad.reshape(shade.normal_pred, (r, s, 3))
    )
    return RenderOutput(
        color=color,
        weights=weights,
        opacity=opacity,
        depth=depth,
        normal_density=nd,
        normal_density_unit=nd_unit,
        normal_pred=npred,
        normal_pred_unit=npred_unit,
        points=ShadeInfo(shade, rays.directions),
    )


def render_image(
    params: fd.ModelParams,
    config: fd.FieldConfig,
    width: int,
    height: int,
    camera_angle_x: float,
    pose: np.ndarray,
    near: float,
    far: float,
    n_samples: int,
    background=(1.0, 1.0, 1.0),
    edit: Optional[fd.EditOverrides] = None,
    chunk: int = 1024,
) -> dict[str, np.ndarray]:
    """Deterministic full-frame render (bin midpoints, eval mode, chunked).

    Returns float arrays: color (H, W, 3), opacity/depth (H, W),
    normal (H, W, 3) accumulated density normals, normal_pred (H, W, 3).
    """
    rays = camera_rays(width, height, camera_angle_x, pose)
    n = len(rays)
    color = np.zeros((n, 3))
    opacity = np.zeros((n,))
    depth = np.zeros((n,))
    normal = np.zeros((n, 3))
    normal_pred = np.zeros((n, 3))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sub = RayBatch(rays.origins[start:stop], rays.directions[start:stop])
        samples = stratified_samples(stop - start, n_samples, near, far, rng=None)
        out = render_rays(
            params, config, sub, samples, background=background, mode="eval", edit=edit
        )
        color[start:stop] = out.color.values
        opacity[start:stop] = out.opacity.values[:, 0]
        depth[start:stop] = out.depth.values[:, 0]
        normal[start:stop] = out.normal_density_unit.values
        normal_pred[start:stop] = out.normal_pred_unit.values
    return {
        "color": color.reshape(height, width, 3),
        "opacity": opacity.reshape(height, width),
        "depth": depth.reshape(height, width),
        "normal": normal.reshape(height, width, 3),
        "normal_pred": normal_pred.reshape(height, width, 3),
    }
