"""Scene representation: spatial branch, directional branch, color blending.

The spatial branch maps an encoded position to density, a bottleneck feature,
diffuse color, specular tint, roughness, and a raw normal prediction. The
directional branch maps an encoded reflection (or view) direction plus the
bottleneck to specular color. Composition applies the sRGB transfer and a
clip, so the model fits tone-mapped images directly.

Every ablation toggle (reflection vs view direction, encoding family,
concatenated view direction, the cosine input, diffuse/tint/roughness heads,
predicted vs density normals) lives in FieldConfig so variant models differ
only by configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import color as colorlib
from . import sphmath as sm

# Roughness below this maps to the concentration ceiling of 1e6.
_MIN_ROUGHNESS = 1e-6


@dataclass(frozen=True)
class FieldConfig:
    """Architecture sizes and ablation toggles for the field model."""

    spatial_depth: int = 4
    spatial_width: int = 64
    directional_depth: int = 4
    directional_width: int = 64
    pe_levels: int = 6
    sh_degrees: tuple[int, ...] = (1, 2, 4)
    bottleneck_width: int = 16
    # "ide": attenuated harmonics; "sh": unattenuated harmonics;
    # "pe": sinusoidal encoding of the direction vector.
    dir_encoding: str = "ide"
    dir_pe_levels: int = 4
    use_reflection: bool = True
    concat_viewdir: bool = False
    # Off = fixed-lobe variant: the directional branch loses the cosine input.
    input_ndotwo: bool = True
    use_diffuse: bool = True
    use_tint: bool = True
    # Off = concentration pinned at its ceiling (no attenuation).
    use_roughness: bool = True
    use_predicted_normals: bool = True
    bottleneck_noise_std: float = 0.1

    def validate(self) -> "FieldConfig":
        for name in (
            "spatial_depth",
            "spatial_width",
            "directional_depth",
            "directional_width",
            "bottleneck_width",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.pe_levels < 0 or self.dir_pe_levels < 0:
            raise ValueError("encoding levels must be >= 0")
        if self.bottleneck_noise_std < 0:
            raise ValueError("bottleneck noise std must be >= 0")
        if self.dir_encoding not in ("ide", "sh", "pe"):
            raise ValueError(f"unknown dir_encoding {self.dir_encoding!r}")
        sm.validate_degrees(self.sh_degrees)
        return self

    @property
    def spatial_input_width(self) -> int:
        return 3 + 6 * self.pe_levels

    @property
    def encoding_width(self) -> int:
        if self.dir_encoding == "pe":
            return 3 + 6 * self.dir_pe_levels
        return sm.ide_length(self.sh_degrees)

    @property
    def directional_input_width(self) -> int:
        width = self.encoding_width + self.bottleneck_width
        if self.input_ndotwo:
            width += 1
        if self.concat_viewdir:
            width += 3
        return width


@dataclass
class SpatialOutput:
    """Per-point spatial-branch outputs, all on the tape."""

    tau: ad.Tensor  # (n, 1) density, >= 0
    bottleneck: ad.Tensor  # (n, B)
    diffuse: ad.Tensor  # (n, 3) in [0, 1]
    tint: ad.Tensor  # (n, 3) in [0, 1]
    roughness: ad.Tensor  # (n, 1), > 0
    normal_raw: ad.Tensor  # (n, 3) pre-normalization
    grad_tau: ad.Tensor  # (n, 3) spatial density gradient


@dataclass
class ShadePoint:
    """Per-point shading results."""

    tau: ad.Tensor  # (n, 1)
    color: ad.Tensor  # (n, 3) displayed color
    normal_density: ad.Tensor  # (n, 3)
    normal_pred: ad.Tensor  # (n, 3)
    spatial: SpatialOutput


@dataclass
class EditOverrides:
    """Appearance-only render overrides; geometry is never touched."""

    roughness_scale: float = 1.0
    diffuse_override: Optional[tuple[float, float, float]] = None
    tint_scale: float = 1.0

    def validate(self) -> "EditOverrides":
        if not self.roughness_scale > 0:
            raise ValueError(f"roughness_scale must be > 0, got {self.roughness_scale}")
        if self.tint_scale < 0:
            raise ValueError(f"tint_scale must be >= 0, got {self.tint_scale}")
        if self.diffuse_override is not None:
            rgb = tuple(float(c) for c in self.diffuse_override)
            if len(rgb) != 3 or any(c < 0 or c > 1 for c in rgb):
                raise ValueError(f"diffuse override must be 3 values in [0,1], got {rgb}")
        return self

    @property
    def is_neutral(self) -> bool:
        return (
            self.roughness_scale == 1.0
            and self.tint_scale == 1.0
            and self.diffuse_override is None
        )


class ModelParams:
    """All trainable layers, in the canonical checkpoint order."""

    HEAD_NAMES = ("density", "bottleneck", "diffuse", "tint", "roughness", "normal")

    def __init__(
        self,
        spatial_trunk: ad.DenseNetwork,
        heads: dict[str, ad.Dense],
        dir_trunk: ad.DenseNetwork,
        head_specular: ad.Dense,
    ):
        missing = set(self.HEAD_NAMES) - set(heads)
        if missing:
            raise ValueError(f"missing spatial heads: {sorted(missing)}")
        self.spatial_trunk = spatial_trunk
        self.heads = heads
        self.dir_trunk = dir_trunk
        self.head_specular = head_specular

    @staticmethod
    def create(
        rng: np.random.Generator, config: FieldConfig, dtype=np.float32
    ) -> "ModelParams":
        config.validate()
        trunk = ad.init_mlp(
            rng, config.spatial_input_width, config.spatial_width, config.spatial_depth,
            dtype=dtype,
        )
        w = config.spatial_width
        heads = {
            # Low initial density keeps early composites near the background.
            "density": ad.init_dense(rng, w, 1, scheme="xavier", bias=-1.0, dtype=dtype),
            "bottleneck": ad.init_dense(
                rng, w, config.bottleneck_width, scheme="xavier", dtype=dtype
            ),
            "diffuse": ad.init_dense(rng, w, 3, scheme="xavier", dtype=dtype),
            "tint": ad.init_dense(rng, w, 3, scheme="xavier", dtype=dtype),
            "roughness": ad.init_dense(rng, w, 1, scheme="xavier", dtype=dtype),
            "normal": ad.init_dense(rng, w, 3, scheme="xavier", dtype=dtype),
        }
        dir_trunk = ad.init_mlp(
            rng,
            config.directional_input_width,
            config.directional_width,
            config.directional_depth,
            dtype=dtype,
        )
        head_specular = ad.init_dense(
            rng, config.directional_width, 3, scheme="xavier", dtype=dtype
        )
        return ModelParams(trunk, heads, dir_trunk, head_specular)

    def dense_layers(self) -> list[ad.Dense]:
        return (
            list(self.spatial_trunk.layers)
            + [self.heads[name] for name in self.HEAD_NAMES]
            + list(self.dir_trunk.layers)
            + [self.head_specular]
        )

    def parameters(self) -> list[ad.Tensor]:
        out = []
        for layer in self.dense_layers():
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def astype(self, dtype) -> "ModelParams":
        def convert(layer: ad.Dense) -> ad.Dense:
            return ad.Dense(
                ad.parameter(layer.weight.values.astype(dtype)),
                ad.parameter(layer.bias.values.astype(dtype)),
                layer.activation,
            )

        trunk = ad.DenseNetwork([convert(l) for l in self.spatial_trunk.layers])
        heads = {name: convert(self.heads[name]) for name in self.HEAD_NAMES}
        dir_trunk = ad.DenseNetwork([convert(l) for l in self.dir_trunk.layers])
        return ModelParams(trunk, heads, dir_trunk, convert(self.head_specular))

    def save(self, path) -> None:
        ad.save_checkpoint(path, self.dense_layers())

    @staticmethod
    def load(path, config: FieldConfig, dtype=np.float32) -> "ModelParams":
        arrays = ad.load_checkpoint(path)
        expected = config.spatial_depth + 6 + config.directional_depth + 1
        if len(arrays) != expected:
            raise ValueError(
                f"{path}: checkpoint has {len(arrays)} layers, configuration "
                f"expects {expected}"
            )
        reference = ModelParams.create(np.random.default_rng(0), config, dtype=dtype)
        for layer, (w, b) in zip(reference.dense_layers(), arrays):
            if layer.weight.values.shape != w.shape:
                raise ValueError(
                    f"{path}: layer shape {w.shape} does not match configured "
                    f"{layer.weight.values.shape}"
                )
            layer.weight.values = w.astype(dtype)
            layer.bias.values = b.astype(dtype)
        return reference


def spatial_forward(params: ModelParams, config: FieldConfig, x) -> SpatialOutput:
    """Evaluate the spatial branch and the density's spatial gradient at x (n, 3)."""
    dtype = params.spatial_trunk.layers[0].weight.values.dtype
    x = np.asarray(x, dtype=dtype)
    feats = ad.constant(ad.positional_encoding(x, config.pe_levels))
    h, preacts = params.spatial_trunk.forward_with_preacts(feats)

    z_tau = params.heads["density"].affine(h)
    tau = ad.softplus(z_tau)
    bottleneck = params.heads["bottleneck"].affine(h)
    diffuse = ad.sigmoid(params.heads["diffuse"].affine(h))
    tint = ad.sigmoid(params.heads["tint"].affine(h))
    roughness = ad.softplus(params.heads["roughness"].affine(h))
    normal_raw = params.heads["normal"].affine(h)

    # d(tau)/d(features) via the trunk's activation pattern, kept on the tape
    # so losses on the gradient reach the parameters.
    cot = ad.matmul(ad.sigmoid(z_tau), params.heads["density"].weight)
    dfeat = ad.input_gradient(params.spatial_trunk, preacts, cot)
    jac = ad.constant(ad.positional_encoding_jacobian(x, config.pe_levels))
    n = x.shape[0]
    grad_tau = ad.reshape(
        ad.matmul(ad.reshape(dfeat, (n, 1, dfeat.values.shape[-1])), jac), (n, 3)
    )
    return SpatialOutput(tau, bottleneck, diffuse, tint, roughness, normal_raw, grad_tau)


def predicted_normal(out: SpatialOutput) -> ad.Tensor:
    """Normalize the raw normal head; the zero vector stays (near) zero."""
    return ad.normalize(out.normal_raw)


def density_normal_from_gradient(grad_tau: ad.Tensor) -> ad.Tensor:
    """Surface normal convention: against the density gradient."""
    return ad.neg(ad.normalize(grad_tau))


def density_normal(params: ModelParams, config: FieldConfig, x) -> ad.Tensor:
    return density_normal_from_gradient(spatial_forward(params, config, x).grad_tau)


def roughness_to_concentration(rho: ad.Tensor) -> ad.Tensor:
    """kappa = 1 / rho, capped at 1e6 via the roughness floor."""
    return ad.div(1.0, ad.clip_min(rho, _MIN_ROUGHNESS))


def directional_forward(
    params: ModelParams,
    config: FieldConfig,
    bottleneck: ad.Tensor,
    direction: ad.Tensor,
    kappa_inv: Optional[ad.Tensor],
    ndotwo: Optional[ad.Tensor],
    viewdir: Optional[ad.Tensor] = None,
) -> ad.Tensor:
    """Specular color from the encoded direction plus conditioning inputs.

    `direction` is the reflection direction unless the configuration routes
    the view direction here. `kappa_inv` is ignored for the unattenuated and
    sinusoidal encodings.
    """
    if config.dir_encoding == "ide":
        enc = sm.ide_tape(direction, kappa_inv, config.sh_degrees)
    elif config.dir_encoding == "sh":
        enc = sm.directional_encoding_tape(direction, config.sh_degrees)
    else:
        enc = ad.positional_encoding_tape(direction, config.dir_pe_levels)
    parts = [enc]
    if config.input_ndotwo:
        if ndotwo is None:
            raise ValueError("configuration expects the cosine input, got None")
        parts.append(ndotwo)
    parts.append(bottleneck)
    if config.concat_viewdir:
        if viewdir is None:
            raise ValueError("configuration expects a concatenated view direction")
        parts.append(viewdir)
    h = params.dir_trunk(ad.concat(parts, axis=-1))
    return ad.sigmoid(params.head_specular.affine(h))


def linear_to_srgb_tape(t: ad.Tensor) -> ad.Tensor:
    """Tape version of the sRGB transfer; matches color.linear_to_srgb."""
    cut = colorlib.SRGB_LINEAR_CUTOFF
    mask = ad.constant((t.values <= cut).astype(t.values.dtype))
    low = ad.mul(t, 12.92)
    high = ad.sub(ad.mul(ad.pow_const(ad.clip_min(t, cut), 1.0 / 2.4), 1.055), 0.055)
    return ad.add(ad.mul(mask, low), ad.mul(ad.sub(1.0, mask), high))


def compose_color(c_d, s, c_s):
    """Displayed color: sRGB transfer of c_d + s * c_s, clipped to [0, 1].

    Accepts tape tensors (differentiable, zero subgradient outside the clip)
    or plain arrays.
    """
    if any(isinstance(v, ad.Tensor) for v in (c_d, s, c_s)):
        if not isinstance(c_s, ad.Tensor):
            c_s = ad.constant(np.asarray(c_s))
        linear = ad.add(c_d, ad.mul(s, c_s))
        return ad.clip01(linear_to_srgb_tape(linear))
    linear = np.asarray(c_d) + np.asarray(s) * np.asarray(c_s)
    if np.any(linear < 0):
        raise ValueError("composition inputs must be nonnegative")
    return np.clip(colorlib.linear_to_srgb(linear), 0.0, 1.0)


def shade_point(
    params: ModelParams,
    config: FieldConfig,
    x,
    view_dir,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
    edit: Optional[EditOverrides] = None,
) -> ShadePoint:
    """Full per-point pipeline: spatial branch, reflection, directional
    branch, and color composition.

    `view_dir` is the direction of ray travel, shape (3,) or (n, 3); the
    outgoing direction used for reflection is its negation. In train mode,
    Gaussian noise is added to the bottleneck (rng required).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "train" and config.bottleneck_noise_std > 0 and rng is None:
        raise ValueError("train mode requires an rng for bottleneck noise")

    sp = spatial_forward(params, config, x)
    dtype = sp.tau.values.dtype
    n = sp.tau.values.shape[0]

    diffuse, tint, roughness = sp.diffuse, sp.tint, sp.roughness
    if edit is not None:
        edit.validate()
        roughness = ad.mul(roughness, float(edit.roughness_scale))
        tint = ad.mul(tint, float(edit.tint_scale))
        if edit.diffuse_override is not None:
            diffuse = ad.constant(
                np.broadcast_to(
                    np.asarray(edit.diffuse_override, dtype=dtype), (n, 3)
                ).copy()
            )

    n_pred = predicted_normal(sp)
    n_dens = density_normal_from_gradient(sp.grad_tau)
    n_ref = n_pred if config.use_predicted_normals else n_dens

    view = np.broadcast_to(
        np.asarray(view_dir, dtype=dtype).reshape(-1, 3), (n, 3)
    )
    wo = ad.constant(-view)
    direction = sm.reflect(wo, n_ref) if config.use_reflection else ad.constant(view)
    ndotwo = ad.dot(n_ref, wo) if config.input_ndotwo else None

    if config.use_roughness:
        kappa_inv = ad.clip_min(roughness, _MIN_ROUGHNESS)
    else:
        kappa_inv = ad.constant(np.full((n, 1), _MIN_ROUGHNESS, dtype=dtype))

    bottleneck = sp.bottleneck
    if mode == "train" and config.bottleneck_noise_std > 0:
        noise = rng.normal(0.0, config.bottleneck_noise_std, bottleneck.values.shape)
        bottleneck = ad.add(bottleneck, ad.constant(noise.astype(dtype)))

    viewdir_in = ad.constant(view) if config.concat_viewdir else None
    c_s = directional_forward(
        params, config, bottleneck, direction, kappa_inv, ndotwo, viewdir_in
    )

    if not config.use_diffuse:
        diffuse = ad.constant(np.zeros((n, 3), dtype=dtype))
    if not config.use_tint:
        tint = ad.constant(np.ones((n, 3), dtype=dtype))
    color = compose_color(diffuse, tint, c_s)
    return ShadePoint(sp.tau, color, n_dens, n_pred, sp)
