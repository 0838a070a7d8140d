"""sRGB transfer functions shared by the tone map, the image codec, and the oracle."""

import numpy as np

# Breakpoint of the piecewise sRGB transfer and its encoded image.
SRGB_LINEAR_CUTOFF = 0.0031308
SRGB_ENCODED_CUTOFF = 12.92 * SRGB_LINEAR_CUTOFF


def linear_to_srgb(linear: np.ndarray) -> np.ndarray:
    """Encode nonnegative linear radiance with the sRGB transfer curve.

    Values above 1 keep following the power branch; callers that need a
    displayable color clip afterwards.
    """
    linear = np.asarray(linear)
    low = 12.92 * linear
    # The power branch is only evaluated away from zero to keep gradients
    # and special values finite; the low branch covers the rest.
    safe = np.maximum(linear, SRGB_LINEAR_CUTOFF)
    high = 1.055 * np.power(safe, 1.0 / 2.4) - 0.055
    return np.where(linear <= SRGB_LINEAR_CUTOFF, low, high)


def srgb_to_linear(encoded: np.ndarray) -> np.ndarray:
    """Invert linear_to_srgb on [0, 1]."""
    encoded = np.asarray(encoded)
    low = encoded / 12.92
    safe = np.maximum(encoded, SRGB_ENCODED_CUTOFF)
    high = np.power((safe + 0.055) / 1.055, 2.4)
    return np.where(encoded <= SRGB_ENCODED_CUTOFF, low, high)


def encode_image_u8(linear: np.ndarray) -> np.ndarray:
    """Linear float image -> sRGB-encoded 8-bit image."""
    encoded = np.clip(linear_to_srgb(linear), 0.0, 1.0)
    return np.round(encoded * 255.0).astype(np.uint8)


def u8_to_float(img: np.ndarray) -> np.ndarray:
    """8-bit image -> float32 in [0, 1] (still sRGB-encoded)."""
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)
