"""Image-quality metrics over display-space images and normal maps."""

from __future__ import annotations

import numpy as np

# Error below this floor reports the PSNR ceiling instead of diverging.
_PSNR_CEILING = 99.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images scaled to [0, 1].

    Identical images report the 99 dB ceiling rather than infinity.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean(np.square(a - b)))
    if mse <= 10.0 ** (-_PSNR_CEILING / 10.0):
        return _PSNR_CEILING
    return float(min(_PSNR_CEILING, -10.0 * np.log10(mse)))


def normal_mae(
    predicted: np.ndarray, ground_truth: np.ndarray, mask: np.ndarray
) -> float:
    """Mean angular error in degrees over masked pixels, pooled across all
    masked entries of the stacked arrays.

    Ground-truth normals are renormalized (they usually come from quantized
    maps). Predicted vectors too short to carry a direction count as 90
    degrees — orthogonal, the expected error of an uninformative prediction.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    ground_truth = np.asarray(ground_truth, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if predicted.shape != ground_truth.shape or predicted.shape[:-1] != mask.shape:
        raise ValueError(
            f"shape mismatch: predicted {predicted.shape}, ground truth "
            f"{ground_truth.shape}, mask {mask.shape}"
        )
    if not np.any(mask):
        raise ValueError("mask selects no pixels")
    p = predicted[mask]
    g = ground_truth[mask]
    g = g / np.linalg.norm(g, axis=-1, keepdims=True)
    pn = np.linalg.norm(p, axis=-1)
    ok = pn > 1e-8
    cos = np.zeros(p.shape[0])
    cos[ok] = np.sum(p[ok] * g[ok], axis=-1) / pn[ok]
    angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return float(np.mean(angles))
