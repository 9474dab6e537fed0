"""Pixel-level primitives: luma conversion, Laplacian response and blur score.

Images are numpy arrays: RGB is ``uint8`` with shape ``(H, W, 3)``, gray is
``uint8`` with shape ``(H, W)``, edge maps are ``int32`` with shape ``(H, W)``.
"""

from __future__ import annotations

import numpy as np

DEFAULT_BLUR_THRESHOLD = 3.0

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.int32)


def check_rgb(img: np.ndarray) -> np.ndarray:
    """Validate an RGB buffer and return it as a ``uint8`` array."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("channel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luma with half-up rounding, computed in exact integer arithmetic."""
    rgb = check_rgb(img).astype(np.int64)
    weighted = 299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2]
    luma = (weighted + 500) // 1000
    return np.clip(luma, 0, 255).astype(np.uint8)


def laplacian(gray: np.ndarray) -> np.ndarray:
    """4-neighbour Laplacian with replicate padding; output matches input size."""
    g = np.asarray(gray, dtype=np.int32)
    if g.ndim != 2 or g.size == 0:
        raise ValueError(f"expected a non-empty 2-D gray image, got shape {g.shape}")
    p = np.pad(g, 1, mode="edge")
    return (
        p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4 * p[1:-1, 1:-1]
    ).astype(np.int32)


def variance(edge_map: np.ndarray) -> float:
    """Population variance of all responses."""
    values = np.asarray(edge_map, dtype=np.float64)
    if values.size == 0:
        raise ValueError("variance of an empty map is undefined")
    return float(values.var())


def blur_score(img: np.ndarray) -> float:
    """Variance of the Laplacian of the luma image. Low means blurry."""
    return variance(laplacian(to_grayscale(img)))


def is_blurry(score: float, threshold: float = DEFAULT_BLUR_THRESHOLD) -> bool:
    # strictly lower than the threshold
    return score < threshold


def box_blur(img: np.ndarray, radius: int) -> np.ndarray:
    """Separable box filter of the given radius with replicate borders.

    Works on RGB or gray arrays; returns float64 (no rounding).
    """
    arr = np.asarray(img, dtype=np.float64)
    if radius <= 0:
        return arr.copy()
    width = 2 * radius + 1
    out = arr
    for axis in (0, 1):
        pad = [(0, 0)] * arr.ndim
        pad[axis] = (radius + 1, radius)
        padded = np.pad(out, pad, mode="edge")
        csum = np.cumsum(padded, axis=axis)
        hi = np.take(csum, range(width, width + arr.shape[axis]), axis=axis)
        lo = np.take(csum, range(0, arr.shape[axis]), axis=axis)
        out = (hi - lo) / width
    return out


def mean_filter3(img: np.ndarray) -> np.ndarray:
    """Replace every pixel by the rounded mean of its 3x3 neighbourhood."""
    rgb = check_rgb(img)
    return np.clip(np.floor(box_blur(rgb, 1) + 0.5), 0, 255).astype(np.uint8)
