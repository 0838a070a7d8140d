"""Training objective: photometric error plus two normal regularizers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import renderer as rd


@dataclass(frozen=True)
class LossWeights:
    """Coefficients and gradient-flow switches for the total objective."""

    lambda_p: float = 3e-4  # predicted-normal agreement
    lambda_o: float = 0.1  # orientation penalty
    # When set, the compositing weights act as fixed coefficients inside the
    # normal regularizers instead of receiving gradient through them.
    stop_weight_grad: bool = False
    # When set, the density normals are targets only: the agreement term
    # pulls the prediction toward them without back-pressure on geometry.
    stop_density_normal_grad: bool = False

    def validate(self) -> "LossWeights":
        if self.lambda_p < 0 or self.lambda_o < 0:
            raise ValueError("loss coefficients must be >= 0")
        return self


def data_loss(rendered: ad.Tensor, target: np.ndarray) -> ad.Tensor:
    """Mean over rays of the channel-summed squared color error."""
    target = np.asarray(target, dtype=rendered.values.dtype)
    if rendered.values.shape != target.shape:
        raise ValueError(
            f"rendered {rendered.values.shape} and target {target.shape} differ"
        )
    diff = ad.sub(rendered, ad.constant(target))
    return ad.mean(ad.tsum(ad.mul(diff, diff), axis=-1))


def predicted_normal_loss(
    weights: ad.Tensor,
    normal_density: ad.Tensor,
    normal_pred: ad.Tensor,
    stop_weight_grad: bool = False,
    stop_density_normal_grad: bool = False,
) -> ad.Tensor:
    """Weighted squared distance between the two unit normal fields.

    weights (R, S); normals (R, S, 3), already unit length. Per-ray sum over
    samples, then mean over rays.
    """
    if stop_weight_grad:
        weights = weights.detach()
    if stop_density_normal_grad:
        normal_density = normal_density.detach()
    diff = ad.sub(normal_density, normal_pred)
    per_sample = ad.tsum(ad.mul(diff, diff), axis=-1)
    per_ray = ad.tsum(ad.mul(weights, per_sample), axis=-1)
    return ad.mean(per_ray)


def orientation_loss(
    weights: ad.Tensor,
    normals: ad.Tensor,
    ray_directions: np.ndarray,
    stop_weight_grad: bool = False,
) -> ad.Tensor:
    """Penalize normals facing away from the camera.

    Per sample: w * max(0, n . d)^2 with d the unit ray direction; normals
    pointing back along the ray (toward the camera) score zero. Per-ray sum,
    mean over rays.
    """
    if stop_weight_grad:
        weights = weights.detach()
    d = np.asarray(ray_directions, dtype=normals.values.dtype)
    r, s, _ = normals.values.shape
    d = ad.constant(np.broadcast_to(d.reshape(r, 1, 3), (r, s, 3)).copy())
    dot = ad.tsum(ad.mul(normals, d), axis=-1)
    clipped = ad.clip_min(dot, 0.0)
    per_ray = ad.tsum(ad.mul(weights, ad.mul(clipped, clipped)), axis=-1)
    return ad.mean(per_ray)


@dataclass
class LossBreakdown:
    data: ad.Tensor
    predicted_normal: ad.Tensor
    orientation: ad.Tensor
    total: ad.Tensor


def total_loss(
    out: rd.RenderOutput,
    target: np.ndarray,
    weights_cfg: LossWeights,
    use_predicted_normals: bool = True,
) -> LossBreakdown:
    """data + lambda_p * agreement + lambda_o * orientation.

    The orientation penalty applies to whichever normals drive shading:
    the predicted field when enabled, else the density field.
    """
    weights_cfg.validate()
    shade = out.points.shade
    r, s = out.weights.values.shape
    nd = ad.reshape(shade.normal_density, (r, s, 3))
    npred = ad.reshape(shade.normal_pred, (r, s, 3))

    loss_data = data_loss(out.color, target)
    loss_p = predicted_normal_loss(
        out.weights,
        nd,
        npred,
        stop_weight_grad=weights_cfg.stop_weight_grad,
        stop_density_normal_grad=weights_cfg.stop_density_normal_grad,
    )
    oriented = npred if use_predicted_normals else nd
    loss_o = orientation_loss(
        out.weights,
        oriented,
        out.points.directions,
        stop_weight_grad=weights_cfg.stop_weight_grad,
    )
    total = ad.add(
        loss_data,
        ad.add(
            ad.mul(loss_p, weights_cfg.lambda_p), ad.mul(loss_o, weights_cfg.lambda_o)
        ),
    )
    return LossBreakdown(loss_data, loss_p, loss_o, total)
