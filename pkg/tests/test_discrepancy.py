import math

import numpy as np
import pytest

from twinop.discrepancy import (
    DiscrepancyParams,
    ShapeError,
    detect_discrepancies,
    extract_point_cloud,
    fuse_and_binarize,
    morph_open,
    normalize_depth,
    ssim_map,
    to_grayscale,
)
from twinop.scene import (
    Box,
    CameraIntrinsics,
    SceneObject,
    Sphere,
    add_depth_noise,
    back_project,
    project,
    raycast,
    render_rgbd,
)

CAM = CameraIntrinsics.look_at((0.55, 0.0, 0.75), (0.30, 0.0, 0.03))


# ---------------------------------------------------------------------------
# Independent oracles (written before the optimized implementations)


def naive_ssim(a, b, window=7, L=255.0):
    """Direct per-pixel evaluation of the SSIM formula with window clamping."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h, w = a.shape
    r = window // 2
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            i0, i1 = max(0, i - r), min(h, i + r + 1)
            j0, j1 = max(0, j - r), min(w, j + r + 1)
            wa = a[i0:i1, j0:j1]
            wb = b[i0:i1, j0:j1]
            mu_a = wa.mean()
            mu_b = wb.mean()
            var_a = (wa * wa).mean() - mu_a * mu_a
            var_b = (wb * wb).mean() - mu_b * mu_b
            cov = (wa * wb).mean() - mu_a * mu_b
            out[i, j] = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            )
    return out


def naive_erode(mask, k):
    h, w = mask.shape
    r = k // 2
    out = np.zeros_like(mask, dtype=bool)
    for i in range(h):
        for j in range(w):
            ok = True
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if not (0 <= ii < h and 0 <= jj < w) or not mask[ii, jj]:
                        ok = False
                        break
                if not ok:
                    break
            out[i, j] = ok
    return out


def naive_dilate(mask, k):
    h, w = mask.shape
    r = k // 2
    out = np.zeros_like(mask, dtype=bool)
    for i in range(h):
        for j in range(w):
            hit = False
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w and mask[ii, jj]:
                        hit = True
                        break
                if hit:
                    break
            out[i, j] = hit
    return out


# ---------------------------------------------------------------------------
# SSIM


def test_ssim_matches_naive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(12):
        a = rng.integers(0, 256, (11, 11)).astype(float)
        b = rng.integers(0, 256, (11, 11)).astype(float)
        fast = ssim_map(a, b, window=7)
        slow = naive_ssim(a, b, window=7)
        assert np.abs(fast - slow).max() < 1e-12


def test_ssim_identity_is_exactly_one():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 256, (24, 31)).astype(float)
    assert (ssim_map(a, a) == 1.0).all()


def test_ssim_luminance_shift_below_one():
    a = np.full((16, 16), 100.0)
    b = a + 255.0 / 2.0
    assert (ssim_map(a, b) < 1.0).all()


def test_ssim_symmetry_and_bound():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a = rng.integers(0, 256, (13, 17)).astype(float)
        b = rng.integers(0, 256, (13, 17)).astype(float)
        s_ab = ssim_map(a, b)
        s_ba = ssim_map(b, a)
        assert np.array_equal(s_ab, s_ba)
        assert (np.abs(s_ab) <= 1.0 + 1e-12).all()


def test_ssim_shape_mismatch():
    with pytest.raises(ShapeError):
        ssim_map(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_window_validation():
    a = np.zeros((8, 8))
    with pytest.raises(ValueError):
        ssim_map(a, a, window=4)
    with pytest.raises(ValueError):
        ssim_map(a, a, window=1)


# ---------------------------------------------------------------------------
# Fusion, morphology


def test_fusion_no_flags_when_identical():
    ones = np.ones((8, 8))
    fused = fuse_and_binarize(ones, ones, tau=0.6)
    assert not fused.binary.any()
    assert np.array_equal(fused.fused, ones)


def test_fusion_is_pointwise_min():
    rng = np.random.default_rng(3)
    a = rng.uniform(-1, 1, (9, 9))
    b = rng.uniform(-1, 1, (9, 9))
    fused = fuse_and_binarize(a, b, 0.6).fused
    assert (fused <= a).all() and (fused <= b).all()
    assert np.array_equal(fused, np.minimum(a, b))


def test_fusion_single_flagged_pixel():
    rgb = np.ones((10, 10))
    d = np.ones((10, 10))
    d[4, 7] = 0.2
    fused = fuse_and_binarize(rgb, d, tau=0.6)
    assert fused.binary.sum() == 1 and fused.binary[4, 7]


def test_morph_open_kills_isolated_pixel():
    mask = np.zeros((20, 20), bool)
    mask[10, 10] = True
    assert not morph_open(mask, 3, 3).any()


def test_morph_open_block_matches_bruteforce():
    mask = np.zeros((30, 30), bool)
    mask[10:20, 8:18] = True  # solid 10x10 block
    got = morph_open(mask, 3, 3)
    want = naive_dilate(naive_erode(mask, 3), 3)
    assert np.array_equal(got, want)
    assert 64 <= got.sum() <= 100


def test_morph_open_random_masks_match_bruteforce():
    rng = np.random.default_rng(4)
    for _ in range(5):
        mask = rng.random((18, 22)) < 0.45
        got = morph_open(mask, 3, 5)
        want = naive_dilate(naive_erode(mask, 3), 5)
        assert np.array_equal(got, want)


def test_morph_open_empty_is_empty():
    assert not morph_open(np.zeros((5, 5), bool), 3, 5).any()


def test_erosion_anti_extensive_dilation_extensive():
    rng = np.random.default_rng(5)
    mask = rng.random((25, 25)) < 0.5
    eroded = morph_open(mask, 3, 1)  # dilate kernel 1 = identity
    dilated = morph_open(mask, 1, 3)  # erode kernel 1 = identity
    assert (eroded <= mask).all()
    assert (mask <= dilated).all()


def test_opening_idempotent_same_kernels():
    rng = np.random.default_rng(6)
    mask = rng.random((30, 30)) < 0.5
    mask[:3] = mask[-3:] = False
    mask[:, :3] = mask[:, -3:] = False
    once = morph_open(mask, 3, 3)
    twice = morph_open(once, 3, 3)
    assert np.array_equal(once, twice)


# ---------------------------------------------------------------------------
# Point-cloud extraction


def test_extract_empty_mask():
    cloud = extract_point_cloud(np.zeros((10, 10), bool), np.ones((10, 10)), CAM)
    assert len(cloud) == 0


def test_extract_principal_point_identity_camera():
    cam = CameraIntrinsics()
    mask = np.zeros((cam.height, cam.width), bool)
    depth = np.zeros((cam.height, cam.width))
    mask[int(cam.cy), int(cam.cx)] = True
    depth[int(cam.cy), int(cam.cx)] = 1.0
    cloud = extract_point_cloud(mask, depth, cam)
    assert len(cloud) == 1
    assert np.allclose(cloud.points[0], (0, 0, 1), atol=1e-12)


def test_extract_skips_invalid_depth():
    mask = np.ones((4, 4), bool)
    depth = np.zeros((4, 4))
    depth[1, 2] = 0.8
    cloud = extract_point_cloud(mask, depth, CAM)
    assert len(cloud) == 1


def test_extract_sphere_centroid_near_visible_surface_centroid():
    sphere = Sphere((0.30, 0.05, 0.06), 0.025)
    obj = SceneObject(7, 0, sphere)
    frame = render_rgbd([obj], CAM)
    mask = frame.depth > 0
    cloud = extract_point_cloud(mask, frame.depth, CAM)
    # oracle: centroid of the analytically ray-cast visible surface
    z, inst, _ = raycast([obj], CAM)
    vs, us = np.nonzero(inst == 7)
    oracle = back_project(us, vs, z[vs, us], CAM).mean(axis=0)
    assert np.linalg.norm(cloud.points.mean(axis=0) - oracle) < 0.01


# ---------------------------------------------------------------------------
# Full pipeline

FOREIGN_BOX = Box((0.33, 0.08, 0.045), (0.025, 0.025, 0.025))
TABLE = SceneObject(1, 0, Box((0.29, 0.0, 0.0), (0.2, 0.2, 0.02)), (150, 150, 155))


def _frames(with_box: bool, noise_seed=None):
    base = [TABLE]
    real_objs = base + ([SceneObject(20, 0, FOREIGN_BOX, (40, 180, 60))] if with_box else [])
    real = render_rgbd(real_objs, CAM)
    if noise_seed is not None:
        real = add_depth_noise(real, 0.004, 0.0, noise_seed)
    synth = render_rgbd(base, CAM)
    return real, synth


def test_identical_frames_empty_cloud():
    real, synth = _frames(with_box=False)
    cloud = detect_discrepancies(real, real, CAM)
    assert len(cloud) == 0


def test_foreign_box_localized():
    real, synth = _frames(with_box=True)
    cloud = detect_discrepancies(real, synth, CAM)
    assert len(cloud) > 0
    q = np.abs(cloud.points - np.asarray(FOREIGN_BOX.center)) - np.asarray(FOREIGN_BOX.half_extents)
    dist = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    assert dist.max() < 0.05  # nothing farther than 5 cm from the box surface


def test_noise_only_rejected():
    for seed in (0, 1):
        real, synth = _frames(with_box=False, noise_seed=seed)
        cloud = detect_discrepancies(real, synth, CAM)
        assert len(cloud) == 0


def test_cloud_points_reproject_to_flagged_pixels():
    real, synth = _frames(with_box=True)
    params = DiscrepancyParams()
    gray_r = to_grayscale(real.rgb)
    gray_s = to_grayscale(synth.rgb)
    ssim_rgb = ssim_map(gray_r, gray_s, params.window)
    ssim_d = ssim_map(
        normalize_depth(real.depth, real.depth_range),
        normalize_depth(synth.depth, synth.depth_range),
        params.window,
    )
    mask = morph_open(
        fuse_and_binarize(ssim_rgb, ssim_d, params.tau).binary,
        params.erode_kernel,
        params.dilate_kernel,
    )
    cloud = detect_discrepancies(real, synth, CAM, params)
    uvz = project(cloud.points, CAM)
    us = np.rint(uvz[:, 0]).astype(int)
    vs = np.rint(uvz[:, 1]).astype(int)
    assert mask[vs, us].all()


def test_pipeline_deterministic():
    real, synth = _frames(with_box=True, noise_seed=11)
    a = detect_discrepancies(real, synth, CAM)
    b = detect_discrepancies(real, synth, CAM)
    assert np.array_equal(a.points, b.points)


def test_pipeline_shape_mismatch():
    real, synth = _frames(with_box=False)
    small = render_rgbd([], CameraIntrinsics(width=32, height=24, cx=16.0, cy=12.0))
    with pytest.raises(ShapeError):
        detect_discrepancies(real, small, CAM)


def test_depth_normalization_maps_invalid_to_zero():
    depth = np.array([[0.0, 0.16], [1.08, 2.0]])
    norm = normalize_depth(depth, (0.16, 2.0))
    assert norm[0, 0] == 0.0
    assert norm[0, 1] == 0.0  # depth_min maps to the bottom of the range
    assert norm[1, 1] == 255.0
    assert norm[1, 0] == pytest.approx(127.5, abs=0.5)
