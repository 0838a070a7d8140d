"""Analytic glossy-sphere scene: oracle shading, dataset generation, loading.

The oracle renders a unit sphere with two materials (a sharp and a rough
specular lobe on opposite hemispheres) under a smooth environment of a few
concentrated light lobes plus ambient. Shading is computed by numerical
integration of the environment against a cosine lobe (diffuse) and a
normalized power lobe (specular), so rendered images are ground truth up to
quadrature error — there is no learned component anywhere in this module.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import color as colorlib
from . import pngio
from . import renderer as rd
from . import sphmath as sm

# Gauss-Legendre rule shared by both shading integrals, mapped to [0, 1].
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS
_N_AZIMUTH = 128


@dataclass(frozen=True)
class Material:
    """Lambertian albedo plus a tinted normalized power lobe of exponent alpha."""

    diffuse: tuple[float, float, float]
    specular: tuple[float, float, float]
    alpha: float

    def validate(self) -> "Material":
        if self.alpha <= 0:
            raise ValueError(f"specular exponent must be > 0, got {self.alpha}")
        for name in ("diffuse", "specular"):
            v = getattr(self, name)
            if len(v) != 3 or any(c < 0 for c in v):
                raise ValueError(f"{name} must be 3 nonnegative values, got {v}")
        return self


@dataclass(frozen=True)
class EnvLobe:
    """One concentrated light: radiance * exp(kappa * (dir . axis - 1))."""

    axis: tuple[float, float, float]
    kappa: float
    radiance: tuple[float, float, float]


def _unit(v) -> tuple[float, float, float]:
    a = np.asarray(v, dtype=np.float64)
    return tuple(a / np.linalg.norm(a))


@dataclass(frozen=True)
class OracleScene:
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    # Hemisphere split: points with (p - center) . split_axis >= 0 use
    # material_a (sharp), the rest material_b (rough).
    split_axis: tuple[float, float, float] = _unit((1.0, 0.35, 0.3))
    # Dark diffuse base under bright concentrated lights: appearance is
    # dominated by specular highlights sweeping across the surface, which is
    # the regime that separates reflection-aware models from view-conditioned
    # ones at these training budgets.
    material_a: Material = dc_field(
        default_factory=lambda: Material((0.04, 0.05, 0.12), (0.95, 0.95, 0.95), 150.0)
    )
    material_b: Material = dc_field(
        default_factory=lambda: Material((0.12, 0.04, 0.05), (0.85, 0.85, 0.85), 12.0)
    )
    lobes: tuple[EnvLobe, ...] = (
        EnvLobe(_unit((0.5, 0.6, 0.62)), 60.0, (3.0, 2.8, 2.4)),
        EnvLobe(_unit((-0.7, 0.4, 0.3)), 25.0, (1.0, 1.5, 2.5)),
        EnvLobe(_unit((0.1, 0.9, -0.3)), 90.0, (2.2, 0.8, 2.0)),
        EnvLobe(_unit((0.65, -0.55, 0.5)), 45.0, (2.5, 2.0, 0.7)),
    )
    ambient: tuple[float, float, float] = (0.03, 0.03, 0.04)

    def validate(self) -> "OracleScene":
        if self.radius <= 0:
            raise ValueError("radius must be > 0")
        self.material_a.validate()
        self.material_b.validate()
        for lobe in self.lobes:
            if lobe.kappa < 0:
                raise ValueError("lobe concentration must be >= 0")
        return self


def env_radiance(scene: OracleScene, dirs: np.ndarray) -> np.ndarray:
    """Environment radiance for unit directions (..., 3) -> (..., 3)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    out = np.broadcast_to(
        np.asarray(scene.ambient, dtype=np.float64), dirs.shape[:-1] + (3,)
    ).copy()
    for lobe in scene.lobes:
        axis = np.asarray(lobe.axis, dtype=np.float64)
        cos = np.clip(dirs @ axis, -1.0, 1.0)
        gain = np.exp(lobe.kappa * (cos - 1.0))[..., None]
        out += gain * np.asarray(lobe.radiance, dtype=np.float64)
    return out


def ray_sphere_intersections(
    origins: np.ndarray, directions: np.ndarray, center, radius: float
) -> np.ndarray:
    """Nearest positive hit distance per ray; +inf where the ray misses."""
    o = np.asarray(origins, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64)
    b = np.sum(o * d, axis=-1)
    c = np.sum(o * o, axis=-1) - radius * radius
    disc = b * b - c
    t = np.full(b.shape, np.inf)
    hit = disc >= 0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    near = np.where(t0 > 1e-9, t0, t1)
    t[hit & (near > 1e-9)] = near[hit & (near > 1e-9)]
    return t


def _hemisphere_dirs(axis: np.ndarray, cos_vals: np.ndarray) -> np.ndarray:
    """Directions (n, K, A, 3) around per-point axes (n, 3) at polar cosines
    cos_vals (K,) and _N_AZIMUTH uniform azimuth steps."""
    ax = sm.unit(axis)
    t1, t2 = sm.orthonormal_basis(ax)
    phi = (np.arange(_N_AZIMUTH) + 0.5) * (2.0 * np.pi / _N_AZIMUTH)
    sin_vals = np.sqrt(np.clip(1.0 - cos_vals**2, 0.0, 1.0))
    # (n, K, A, 3) = cos * axis + sin * (cos(phi) t1 + sin(phi) t2)
    cosg = cos_vals[None, :, None, None]
    sing = sin_vals[None, :, None, None]
    cp = np.cos(phi)[None, None, :, None]
    sp = np.sin(phi)[None, None, :, None]
    return (
        cosg * ax[:, None, None, :]
        + sing * (cp * t1[:, None, None, :] + sp * t2[:, None, None, :])
    )


def _diffuse_irradiance(scene: OracleScene, normals: np.ndarray) -> np.ndarray:
    """Cosine-weighted irradiance over the upper hemisphere, (n, 3).

    Substituting v = cos^2(theta) makes the integrand smooth in v and the
    azimuth average exact for band-limited environments:
    E = 1/2 * int_0^1 int_0^2pi L dv dphi. Constant L gives exactly pi * L.
    """
    cos_vals = np.sqrt(_GL_NODES)
    dirs = _hemisphere_dirs(normals, cos_vals)
    rad = env_radiance(scene, dirs)  # (n, K, A, 3)
    az_mean = rad.mean(axis=2)  # (n, K, 3)
    return np.pi * np.einsum("k,nkc->nc", _GL_WEIGHTS, az_mean)


def _specular_response(
    scene: OracleScene, reflected: np.ndarray, alpha: np.ndarray
) -> np.ndarray:
    """Environment filtered by the normalized power lobe around reflected.

    F = (alpha+1)/(2 pi) * int L(omega) cos^alpha d(omega); substituting
    v = cos^(alpha+1) flattens the lobe so 64 nodes resolve exponents to 1e4.
    Constant L returns exactly L. alpha is per-point (n,).
    """
    n = reflected.shape[0]
    out = np.zeros((n, 3))
    for a in np.unique(alpha):
        sel = alpha == a
        cos_vals = _GL_NODES ** (1.0 / (a + 1.0))
        dirs = _hemisphere_dirs(reflected[sel], cos_vals)
        rad = env_radiance(scene, dirs)
        az_mean = rad.mean(axis=2)
        out[sel] = np.einsum("k,nkc->nc", _GL_WEIGHTS, az_mean)
    return out


def oracle_shade(
    scene: OracleScene, points: np.ndarray, view_dirs: np.ndarray
) -> np.ndarray:
    """Outgoing linear radiance at surface points seen along view_dirs.

    points (n, 3) must lie on the sphere; view_dirs (n, 3) are unit ray
    directions toward the surface. Back-facing queries are rejected.
    """
    points = np.asarray(points, dtype=np.float64)
    view = np.asarray(view_dirs, dtype=np.float64)
    normals = sm.unit(points - np.asarray(scene.center, dtype=np.float64))
    wo = -view
    ndotwo = np.sum(normals * wo, axis=-1)
    if np.any(ndotwo <= 0):
        raise ValueError("oracle surface queried from behind")
    reflected = sm.reflect(wo, normals)

    side = (points - np.asarray(scene.center)) @ np.asarray(
        scene.split_axis, dtype=np.float64
    ) >= 0
    mats = (scene.material_b, scene.material_a)
    diffuse = np.where(
        side[:, None], np.asarray(mats[1].diffuse), np.asarray(mats[0].diffuse)
    )
    specular = np.where(
        side[:, None], np.asarray(mats[1].specular), np.asarray(mats[0].specular)
    )
    alpha = np.where(side, mats[1].alpha, mats[0].alpha)

    irr = _diffuse_irradiance(scene, normals)
    spec = _specular_response(scene, reflected, alpha)
    return diffuse / np.pi * irr + specular * spec


@dataclass
class OracleFrame:
    color: np.ndarray  # (H, W, 3) display-space floats in [0, 1]
    normal: np.ndarray  # (H, W, 3) unit normals, zero outside the mask
    mask: np.ndarray  # (H, W) bool foreground
    depth: np.ndarray  # (H, W) hit distance, inf outside


def render_oracle_frame(
    scene: OracleScene,
    width: int,
    height: int,
    camera_angle_x: float,
    pose: np.ndarray,
    background=(1.0, 1.0, 1.0),
    chunk: int = 512,
) -> OracleFrame:
    """Analytic render used both for dataset files and self-consistency tests."""
    scene.validate()
    rays = rd.camera_rays(width, height, camera_angle_x, pose)
    t = ray_sphere_intersections(rays.origins, rays.directions, scene.center, scene.radius)
    hit = np.isfinite(t)
    n = len(rays)
    color = np.broadcast_to(np.asarray(background, dtype=np.float64), (n, 3)).copy()
    normal = np.zeros((n, 3))
    idx = np.nonzero(hit)[0]
    for start in range(0, idx.size, chunk):
        sel = idx[start : start + chunk]
        pts = rays.origins[sel] + t[sel, None] * rays.directions[sel]
        linear = oracle_shade(scene, pts, rays.directions[sel])
        color[sel] = np.clip(colorlib.linear_to_srgb(linear), 0.0, 1.0)
        normal[sel] = sm.unit(pts - np.asarray(scene.center, dtype=np.float64))
    return OracleFrame(
        color.reshape(height, width, 3),
        normal.reshape(height, width, 3),
        hit.reshape(height, width),
        t.reshape(height, width),
    )


def look_at_pose(position, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world with -z toward target, x right, y up."""
    position = np.asarray(position, dtype=np.float64)
    z = sm.unit(position - np.asarray(target, dtype=np.float64))
    x = np.cross(np.asarray(up, dtype=np.float64), z)
    nx = np.linalg.norm(x)
    if nx < 1e-8:
        raise ValueError("view direction parallel to the up vector")
    x = x / nx
    y = np.cross(z, x)
    pose = np.eye(4)
    pose[:3, 0] = x
    pose[:3, 1] = y
    pose[:3, 2] = z
    pose[:3, 3] = position
    return pose


def camera_ring(
    rng: np.random.Generator,
    n_views: int,
    distance: float = 4.0,
    polar_range=(5.0, 80.0),
) -> list[np.ndarray]:
    """Random cameras on an upper spherical cap, all looking at the origin."""
    poses = []
    for _ in range(n_views):
        theta = np.deg2rad(rng.uniform(*polar_range))
        phi = rng.uniform(0.0, 2.0 * np.pi)
        pos = distance * np.array(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
        )
        poses.append(look_at_pose(pos))
    return poses


def _encode_normal_map(normal: np.ndarray) -> np.ndarray:
    return np.round(255.0 * (normal + 1.0) / 2.0).astype(np.uint8)


def _decode_normal_map(data: np.ndarray) -> np.ndarray:
    return data.astype(np.float64) / 255.0 * 2.0 - 1.0


def generate_dataset(
    out_dir: str,
    scene: Optional[OracleScene] = None,
    n_train: int = 30,
    n_test: int = 20,
    width: int = 32,
    height: int = 32,
    camera_angle_x: float = 0.6911112070083618,
    seed: int = 0,
) -> dict[str, int]:
    """Write images, normal maps, masks, and camera files for both splits."""
    scene = (scene or OracleScene()).validate()
    rng = np.random.default_rng(seed)
    counts = {}
    for split, n_views in (("train", n_train), ("test", n_test)):
        split_dir = os.path.join(out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        frames = []
        for i, pose in enumerate(camera_ring(rng, n_views)):
            frame = render_oracle_frame(scene, width, height, camera_angle_x, pose)
            base = f"r_{i}"
            pngio.write(
                os.path.join(split_dir, base + ".png"),
                colorlib.encode_image_u8(frame.color),
            )
            pngio.write(
                os.path.join(split_dir, base + "_normal.png"),
                _encode_normal_map(frame.normal),
            )
            pngio.write(
                os.path.join(split_dir, base + "_mask.png"),
                np.where(frame.mask, 255, 0).astype(np.uint8)[..., None],
            )
            frames.append(
                {
                    "file_path": f"{split}/{base}",
                    "transform_matrix": pose.tolist(),
                }
            )
        with open(os.path.join(out_dir, f"transforms_{split}.json"), "w") as f:
            json.dump({"camera_angle_x": camera_angle_x, "frames": frames}, f, indent=1)
            f.write("\n")
        counts[split] = n_views
    return counts


@dataclass
class SceneDataset:
    """One split of a rendered dataset, fully loaded into arrays."""

    images: np.ndarray  # (V, H, W, 3) display-space floats
    poses: np.ndarray  # (V, 4, 4)
    camera_angle_x: float
    normals: Optional[np.ndarray]  # (V, H, W, 3) unit where masked
    masks: Optional[np.ndarray]  # (V, H, W) bool
    names: list[str]

    @property
    def n_views(self) -> int:
        return self.images.shape[0]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def rays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All pixel rays across views: origins, directions, colors (N, 3)."""
        h, w = self.resolution
        origins, dirs, colors = [], [], []
        for v in range(self.n_views):
            batch = rd.camera_rays(w, h, self.camera_angle_x, self.poses[v])
            origins.append(batch.origins)
            dirs.append(batch.directions)
            colors.append(self.images[v].reshape(-1, 3))
        return (
            np.concatenate(origins, axis=0),
            np.concatenate(dirs, axis=0),
            np.concatenate(colors, axis=0).astype(np.float64),
        )


def load_dataset(root: str, split: str) -> SceneDataset:
    """Read one split; validates pose orthonormality and uniform resolution."""
    meta_path = os.path.join(root, f"transforms_{split}.json")
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"no camera file at {meta_path}") from None
    angle = float(meta["camera_angle_x"])
    images, poses, normals, masks, names = [], [], [], [], []
    for frame in meta["frames"]:
        rel = frame["file_path"]
        pose = np.asarray(frame["transform_matrix"], dtype=np.float64)
        if pose.shape != (4, 4):
            raise ValueError(f"{rel}: transform_matrix must be 4x4")
        rot = pose[:3, :3]
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-4:
            raise ValueError(f"{rel}: pose rotation is not orthonormal")
        img_path = os.path.join(root, rel + ".png")
        img = pngio.read(img_path)
        if img.ndim != 3 or img.shape[-1] not in (3, 4):
            raise ValueError(f"{img_path}: expected an RGB(A) image")
        images.append(colorlib.u8_to_float(img[..., :3]))
        poses.append(pose)
        names.append(rel)
        normal_path = os.path.join(root, rel + "_normal.png")
        mask_path = os.path.join(root, rel + "_mask.png")
        if os.path.exists(normal_path):
            normals.append(_decode_normal_map(pngio.read(normal_path)[..., :3]))
        if os.path.exists(mask_path):
            m = pngio.read(mask_path)
            masks.append((m[..., 0] if m.ndim == 3 else m) > 127)
    if not images:
        raise ValueError(f"{meta_path}: no frames listed")
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"{meta_path}: mixed image resolutions {sorted(shapes)}")
    return SceneDataset(
        np.stack(images).astype(np.float32),
        np.stack(poses),
        angle,
        np.stack(normals) if len(normals) == len(images) else None,
        np.stack(masks) if len(masks) == len(images) else None,
        names,
    )
