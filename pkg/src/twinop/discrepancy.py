"""Foreign-object discrepancy pipeline over paired real/synthetic RGB-D frames.

The sequence is fixed: per-channel SSIM maps on grayscale RGB and normalized
depth, pixel-wise minimum fusion, thresholding, morphological opening, and
back-projection of surviving pixels through the real depth raster into a
world-frame point cloud.  Fusing RGB with depth is what rejects sensor
noise: a pixel must disagree in *both* channels to survive the minimum.

SSIM here uses a uniform window that clamps (shrinks) at image borders, so
every output pixel is a plain windowed evaluation of

    ((2*mu_a*mu_b + C1) * (2*cov_ab + C2))
    / ((mu_a^2 + mu_b^2 + C1) * (var_a + var_b + C2))

with C1 = (K1*L)^2, C2 = (K2*L)^2, K1 = 0.01, K2 = 0.03.  Window sums are
taken via integral images; on integer-valued rasters they are exact, which
keeps the optimized map within 1e-12 of a naive per-pixel evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .scene import CameraIntrinsics, RgbdFrame, back_project

K1 = 0.01
K2 = 0.03
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ShapeError(ValueError):
    """Raster dimension mismatch."""


@dataclass(frozen=True)
class DiscrepancyParams:
    window: int = 7
    dynamic_range: float = 255.0
    tau: float = 0.6
    erode_kernel: int = 3
    dilate_kernel: int = 5


@dataclass
class FusedMask:
    fused: np.ndarray  # pointwise-min SSIM
    binary: np.ndarray  # fused < tau


@dataclass
class DiscrepancyCloud:
    points: np.ndarray  # (n, 3) float64 world frame
    timestamp: float = 0.0

    def __len__(self) -> int:
        return len(self.points)


def _window_sums(a: np.ndarray, radius: int):
    """Sum of `a` over the border-clamped square window at every pixel."""
    h, w = a.shape
    s = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=s[1:, 1:])
    i = np.arange(h)
    j = np.arange(w)
    i0 = np.maximum(i - radius, 0)
    i1 = np.minimum(i + radius + 1, h)
    j0 = np.maximum(j - radius, 0)
    j1 = np.minimum(j + radius + 1, w)
    sums = s[i1[:, None], j1[None, :]] - s[i0[:, None], j1[None, :]] \
        - s[i1[:, None], j0[None, :]] + s[i0[:, None], j0[None, :]]
    counts = (i1 - i0)[:, None] * (j1 - j0)[None, :]
    return sums, counts


def ssim_map(a: np.ndarray, b: np.ndarray, window: int = 7, dynamic_range: float = 255.0) -> np.ndarray:
    """Per-pixel structural similarity of two single-channel rasters."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    r = window // 2
    c1 = (K1 * dynamic_range) ** 2
    c2 = (K2 * dynamic_range) ** 2
    sum_a, n = _window_sums(a, r)
    sum_b, _ = _window_sums(b, r)
    sum_aa, _ = _window_sums(a * a, r)
    sum_bb, _ = _window_sums(b * b, r)
    sum_ab, _ = _window_sums(a * b, r)
    mu_a = sum_a / n
    mu_b = sum_b / n
    var_a = sum_aa / n - mu_a * mu_a
    var_b = sum_bb / n - mu_b * mu_b
    cov = sum_ab / n - mu_a * mu_b
    return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )


def fuse_and_binarize(ssim_rgb: np.ndarray, ssim_d: np.ndarray, tau: float) -> FusedMask:
    """Pixel-wise minimum of the two SSIM maps, flagged below the threshold."""
    if ssim_rgb.shape != ssim_d.shape:
        raise ShapeError(f"shape mismatch {ssim_rgb.shape} vs {ssim_d.shape}")
    fused = np.minimum(ssim_rgb, ssim_d)
    return FusedMask(fused, fused < tau)


def morph_open(mask: np.ndarray, erode_kernel: int = 3, dilate_kernel: int = 5) -> np.ndarray:
    """Erosion then dilation with square kernels; kills sub-kernel speckle."""
    for k in (erode_kernel, dilate_kernel):
        if k < 1 or k % 2 == 0:
            raise ValueError("kernels must be odd and >= 1")
    mask = np.asarray(mask, dtype=bool)
    if erode_kernel > 1:
        mask = ndimage.binary_erosion(mask, np.ones((erode_kernel, erode_kernel), bool), border_value=0)
    if dilate_kernel > 1:
        mask = ndimage.binary_dilation(mask, np.ones((dilate_kernel, dilate_kernel), bool), border_value=0)
    return mask


def extract_point_cloud(
    mask: np.ndarray, depth: np.ndarray, cam: CameraIntrinsics, timestamp: float = 0.0
) -> DiscrepancyCloud:
    """Back-project flagged pixels with valid depth into the world frame."""
    if mask.shape != depth.shape:
        raise ShapeError(f"shape mismatch {mask.shape} vs {depth.shape}")
    vs, us = np.nonzero(mask & (depth > 0))
    if len(us) == 0:
        return DiscrepancyCloud(np.zeros((0, 3)), timestamp)
    return DiscrepancyCloud(back_project(us, vs, depth[vs, us], cam), timestamp)


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    wr, wg, wb = LUMA_WEIGHTS
    rgb = np.asarray(rgb, dtype=float)
    return wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]


def normalize_depth(depth: np.ndarray, depth_range: tuple[float, float]) -> np.ndarray:
    """Map valid depths onto [0, 255]; invalid (0) pixels map to 0.

    A validity mismatch between frames then shows up as a large SSIM
    difference, which is itself a discrepancy signal.
    """
    lo, hi = depth_range
    scaled = np.clip((depth - lo) / (hi - lo) * 255.0, 0.0, 255.0)
    return np.where(depth > 0, scaled, 0.0)


def detect_discrepancies(
    real: RgbdFrame,
    synthetic: RgbdFrame,
    cam: CameraIntrinsics,
    params: DiscrepancyParams = DiscrepancyParams(),
) -> DiscrepancyCloud:
    """Full pipeline: SSIM on RGB and depth, min-fusion, opening, extraction."""
    if real.rgb.shape != synthetic.rgb.shape:
        raise ShapeError(f"frame shapes differ: {real.rgb.shape} vs {synthetic.rgb.shape}")
    gray_r = to_grayscale(real.rgb)
    gray_s = to_grayscale(synthetic.rgb)
    depth_r = normalize_depth(real.depth, real.depth_range)
    depth_s = normalize_depth(synthetic.depth, synthetic.depth_range)
    ssim_rgb = ssim_map(gray_r, gray_s, params.window, params.dynamic_range)
    ssim_d = ssim_map(depth_r, depth_s, params.window, params.dynamic_range)
    fused = fuse_and_binarize(ssim_rgb, ssim_d, params.tau)
    opened = morph_open(fused.binary, params.erode_kernel, params.dilate_kernel)
    return extract_point_cloud(opened, real.depth, cam, real.timestamp)
