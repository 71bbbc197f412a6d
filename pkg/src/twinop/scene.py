"""Remote world model and synthetic RGB-D camera.

Objects are analytic primitives (sphere, axis-aligned box, vertical
cylinder) rendered by per-pixel ray casting with a z-buffer.  Shading is
flat Lambert against one fixed light so that image differences come from
geometry and content, never lighting.  The known-object detector is a
visibility-based simulator: it preserves the confidence-gating and
occlusion failure modes of a learned detector without training one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

LIGHT_DIR = np.array([-0.35, 0.25, 0.9])
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)
AMBIENT = 0.35
DEFAULT_BACKGROUND = (64, 68, 72)

ROBOT_CLASS = -1  # robot body parts: occlude, never detectable, never foreign
FOREIGN_CLASS = 0


class InvalidDepthError(ValueError):
    """Back-projection of a nonpositive depth."""


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def translated(self, position) -> "Sphere":
        return Sphere(tuple(np.add(self.center, position)), self.radius)

    def centroid(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]

    def __post_init__(self):
        if min(self.half_extents) <= 0:
            raise ValueError("half extents must be positive")

    def translated(self, position) -> "Box":
        return Box(tuple(np.add(self.center, position)), self.half_extents)

    def centroid(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


@dataclass(frozen=True)
class Cylinder:
    base: tuple[float, float, float]  # center of the bottom cap; axis is +z
    radius: float
    height: float

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("radius and height must be positive")

    def translated(self, position) -> "Cylinder":
        return Cylinder(tuple(np.add(self.base, position)), self.radius, self.height)

    def centroid(self) -> np.ndarray:
        return np.asarray(self.base, dtype=float) + (0.0, 0.0, self.height / 2.0)


Shape = Sphere | Box | Cylinder


@dataclass(frozen=True)
class SceneObject:
    instance_id: int
    class_id: int  # 0 = unknown/foreign, -1 = robot body
    shape: Shape
    color: tuple[int, int, int] = (200, 200, 200)


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 160
    height: int = 120
    fx: float = 115.2
    fy: float = 115.2
    cx: float = 80.0
    cy: float = 60.0
    depth_min: float = 0.16
    depth_max: float = 2.0
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[tuple[float, float, float], ...] = (
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 0.0, 1.0),
    )  # camera axes -> world; camera frame is x right, y down, z forward

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not 0 < self.depth_min < self.depth_max:
            raise ValueError("need 0 < depth_min < depth_max")

    @property
    def rot(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=float)

    @property
    def pos(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    @staticmethod
    def look_at(position, target, up=(0.0, 0.0, 1.0), **kwargs) -> "CameraIntrinsics":
        """Camera at `position` with the optical axis through `target`."""
        position = np.asarray(position, dtype=float)
        fwd = np.asarray(target, dtype=float) - position
        n = np.linalg.norm(fwd)
        if n == 0:
            raise ValueError("camera position and target coincide")
        fwd = fwd / n
        right = np.cross(fwd, np.asarray(up, dtype=float))
        rn = np.linalg.norm(right)
        if rn < 1e-12:  # looking straight along up: pick an arbitrary right
            right = np.cross(fwd, (0.0, 1.0, 0.0))
            rn = np.linalg.norm(right)
        right = right / rn
        down = np.cross(fwd, right)
        rot = np.stack([right, down, fwd], axis=1)
        return CameraIntrinsics(
            position=tuple(position), rotation=tuple(map(tuple, rot)), **kwargs
        )


@dataclass
class RgbdFrame:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float64 meters, 0 = invalid
    timestamp: float = 0.0
    depth_range: tuple[float, float] = (0.16, 2.0)

    def __post_init__(self):
        if self.rgb.shape[:2] != self.depth.shape:
            raise ValueError("rgb and depth dimensions differ")


@dataclass(frozen=True)
class Detection:
    class_id: int
    confidence: float
    position: tuple[float, float, float]
    instance_id: int


@dataclass(frozen=True)
class RegistryEntry:
    """One cataloged (detectable) object class."""

    class_id: int
    name: str
    base_confidence: float
    template: Shape  # centered at the origin; instantiated at a detection position
    color: tuple[int, int, int] = (180, 180, 180)


class Registry:
    def __init__(self, entries: list[RegistryEntry] = ()):
        self.entries: dict[int, RegistryEntry] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: RegistryEntry) -> None:
        if entry.class_id in (FOREIGN_CLASS, ROBOT_CLASS):
            raise ValueError("class ids 0 and -1 are reserved")
        self.entries[entry.class_id] = entry

    def __contains__(self, class_id: int) -> bool:
        return class_id in self.entries

    def instantiate(self, class_id: int, instance_id: int, position) -> SceneObject:
        e = self.entries[class_id]
        return SceneObject(instance_id, class_id, e.template.translated(position), e.color)


# ---------------------------------------------------------------------------
# Ray casting


def _pixel_rays(cam: CameraIntrinsics) -> np.ndarray:
    """Unnormalized camera-frame ray directions, z component = 1.

    With this parameterization the ray parameter t *is* the pinhole depth,
    so hits slot straight into the depth raster.
    """
    u = np.arange(cam.width, dtype=float)
    v = np.arange(cam.height, dtype=float)
    du = (u - cam.cx) / cam.fx
    dv = (v - cam.cy) / cam.fy
    dirs = np.empty((cam.height, cam.width, 3))
    dirs[..., 0] = du[None, :]
    dirs[..., 1] = dv[:, None]
    dirs[..., 2] = 1.0
    return dirs


def _intersect_sphere(origin, dirs, sph: Sphere):
    oc = origin - np.asarray(sph.center)
    a = np.einsum("hwc,hwc->hw", dirs, dirs)
    b = 2.0 * np.einsum("hwc,c->hw", dirs, oc)
    c = float(oc @ oc) - sph.radius**2
    disc = b * b - 4.0 * a * c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = (-b - sq) / (2.0 * a)
    t_far = (-b + sq) / (2.0 * a)
    t = np.where(t_near > 1e-9, t_near, t_far)
    t = np.where(hit & (t > 1e-9), t, np.inf)
    return t


def _intersect_box(origin, dirs, box: Box):
    lo = np.asarray(box.center) - np.asarray(box.half_extents)
    hi = np.asarray(box.center) + np.asarray(box.half_extents)
    t_near = np.full(dirs.shape[:2], -np.inf)
    t_far = np.full(dirs.shape[:2], np.inf)
    for axis in range(3):
        d = dirs[..., axis]
        o = origin[axis]
        parallel = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[axis] - o) / d
            t2 = (hi[axis] - o) / d
        swap = t1 > t2
        t1, t2 = np.where(swap, t2, t1), np.where(swap, t1, t2)
        inside_slab = (o >= lo[axis]) & (o <= hi[axis])
        t1 = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), t1)
        t2 = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), t2)
        t_near = np.maximum(t_near, t1)
        t_far = np.minimum(t_far, t2)
    hit = (t_near <= t_far) & (t_far > 1e-9)
    t = np.where(t_near > 1e-9, t_near, t_far)
    return np.where(hit, t, np.inf)


def _intersect_cylinder(origin, dirs, cyl: Cylinder):
    bx, by, bz = cyl.base
    top = bz + cyl.height
    ox, oy, oz = origin
    dx, dy, dz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    best = np.full(dirs.shape[:2], np.inf)
    # lateral surface
    a = dx * dx + dy * dy
    b = 2.0 * ((ox - bx) * dx + (oy - by) * dy)
    c = (ox - bx) ** 2 + (oy - by) ** 2 - cyl.radius**2
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4.0 * a * c
        sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            z = oz + t * dz
            ok = (disc >= 0) & (a > 0) & (t > 1e-9) & (z >= bz) & (z <= top)
            best = np.where(ok & (t < best), t, best)
        # caps
        for plane_z in (bz, top):
            t = (plane_z - oz) / dz
            px = ox + t * dx - bx
            py = oy + t * dy - by
            ok = (dz != 0) & (t > 1e-9) & (px * px + py * py <= cyl.radius**2)
            best = np.where(ok & (t < best), t, best)
    return best


def _normals_at(points: np.ndarray, shape: Shape) -> np.ndarray:
    if isinstance(shape, Sphere):
        n = points - np.asarray(shape.center)
        norm = np.linalg.norm(n, axis=-1, keepdims=True)
        return n / np.where(norm == 0, 1.0, norm)
    if isinstance(shape, Box):
        local = (points - np.asarray(shape.center)) / np.asarray(shape.half_extents)
        axis = np.argmax(np.abs(local), axis=-1)
        n = np.zeros_like(points)
        idx = np.indices(axis.shape)
        n[(*idx, axis)] = np.sign(local[(*idx, axis)])
        return n
    # cylinder: pick cap normal when the hit sits on a cap plane
    bx, by, bz = shape.base
    top = bz + shape.height
    n = np.zeros_like(points)
    z = points[..., 2]
    on_bottom = np.isclose(z, bz, atol=1e-7)
    on_top = np.isclose(z, top, atol=1e-7)
    radial = points[..., :2] - (bx, by)
    rn = np.linalg.norm(radial, axis=-1, keepdims=True)
    side = ~(on_bottom | on_top)
    n[..., :2] = np.where(side[..., None], radial / np.where(rn == 0, 1.0, rn), 0.0)
    n[..., 2] = np.where(on_top, 1.0, np.where(on_bottom, -1.0, 0.0))
    return n


_INTERSECTORS = {Sphere: _intersect_sphere, Box: _intersect_box, Cylinder: _intersect_cylinder}


def raycast(objects: list[SceneObject], cam: CameraIntrinsics):
    """Nearest-hit depth, instance, and normal maps (no depth-range culling).

    Returns (z, instance, normals): z is pinhole depth with inf for misses,
    instance holds instance_ids with -1 for misses.
    """
    dirs_world = _pixel_rays(cam) @ cam.rot.T
    origin = cam.pos
    z = np.full((cam.height, cam.width), np.inf)
    inst = np.full((cam.height, cam.width), -1, dtype=np.int32)
    normals = np.zeros((cam.height, cam.width, 3))
    for obj in objects:
        t = _INTERSECTORS[type(obj.shape)](origin, dirs_world, obj.shape)
        closer = t < z
        if not closer.any():
            continue
        tt = np.where(closer, t, 0.0)  # keep miss pixels out of the arithmetic
        pts = origin + tt[..., None] * dirs_world
        n = _normals_at(pts, obj.shape)
        z = np.where(closer, t, z)
        inst = np.where(closer, obj.instance_id, inst)
        normals = np.where(closer[..., None], n, normals)
    return z, inst, normals


def render_rgbd(
    objects: list[SceneObject],
    cam: CameraIntrinsics,
    *,
    timestamp: float = 0.0,
    background: tuple[int, int, int] = DEFAULT_BACKGROUND,
) -> RgbdFrame:
    """Rasterize the scene into an RGB-D frame.

    Depth is the nearest surface hit within [depth_min, depth_max], else 0.
    Surfaces outside the depth range still shade the RGB channel (a color
    camera has no minimum range); only the depth raster invalidates them.
    """
    z, inst, normals = raycast(objects, cam)
    hit = np.isfinite(z)
    shade = AMBIENT + (1.0 - AMBIENT) * np.maximum(0.0, normals @ LIGHT_DIR)
    colors = np.zeros((cam.height, cam.width, 3))
    for obj in objects:
        mask = inst == obj.instance_id
        if mask.any():
            colors[mask] = obj.color
    rgb = np.where(hit[..., None], colors * shade[..., None], np.asarray(background, float))
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    depth = np.where(hit & (z >= cam.depth_min) & (z <= cam.depth_max), z, 0.0)
    return RgbdFrame(rgb, depth, timestamp, (cam.depth_min, cam.depth_max))


def add_depth_noise(frame: RgbdFrame, sigma_coeff: float, dropout_p: float, seed: int) -> RgbdFrame:
    """Depth-dependent Gaussian noise plus dropout, deterministic under seed.

    Per valid pixel: depth += N(0, sigma_coeff * depth^2); with probability
    dropout_p the pixel becomes invalid (0).  RGB is untouched.
    """
    if not 0.0 <= dropout_p <= 1.0:
        raise ValueError("dropout_p must be in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(seed))
    depth = frame.depth.copy()
    valid = depth > 0
    noise = rng.normal(0.0, 1.0, depth.shape)
    drop = rng.random(depth.shape) < dropout_p
    lo, hi = frame.depth_range
    noisy = np.clip(depth + noise * sigma_coeff * depth**2, lo, hi)
    depth = np.where(valid & ~drop, noisy, np.where(valid, 0.0, depth))
    return RgbdFrame(frame.rgb.copy(), depth, frame.timestamp, frame.depth_range)


def back_project(u, v, depth, cam: CameraIntrinsics) -> np.ndarray:
    """Pixel + depth -> world point(s); accepts scalars or arrays."""
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise InvalidDepthError("depth must be positive")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    pc = np.stack(
        [(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth], axis=-1
    )
    return pc @ cam.rot.T + cam.pos


def project(points, cam: CameraIntrinsics) -> np.ndarray:
    """World points -> (u, v, depth) pixel coordinates (inverse of back_project)."""
    pc = (np.asarray(points, dtype=float) - cam.pos) @ cam.rot
    z = pc[..., 2]
    return np.stack([pc[..., 0] * cam.fx / z + cam.cx, pc[..., 1] * cam.fy / z + cam.cy, z], axis=-1)


# ---------------------------------------------------------------------------
# Simulated known-object detector

CONFIDENCE_NOISE_STDDEV = 0.02
POSITION_NOISE_STDDEV = 0.001
BOUNDARY_FACTOR = 0.5
MIN_VISIBLE_PIXELS = 3


def detect_known_objects(
    frame: RgbdFrame,
    objects: list[SceneObject],
    cam: CameraIntrinsics,
    registry: Registry,
    seed: int,
    *,
    full_cast: tuple[np.ndarray, np.ndarray] | None = None,
    solo_cache: dict | None = None,
) -> list[Detection]:
    """Detect cataloged objects the way a confidence-gated 2D detector would.

    Visibility is the fraction of the object's unoccluded silhouette that
    survives the full-scene z-buffer; confidence = base * visibility plus
    seeded noise.  Failure modes mirror a single-camera setup: occlusion
    starves visibility, touching the image border halves confidence, and an
    object nearer than the depth camera's minimum range is omitted outright.
    Positions are the template-lifted object centers (a detector with a known
    3D model reports centers, not surface centroids) with 1 mm seeded noise.

    `full_cast` may carry a precomputed (z, instance) raycast of `objects`,
    and `solo_cache` a caller-owned dict of per-instance silhouette maps;
    both are pure caches the caller must invalidate when the scene changes.
    """
    if frame.depth.shape != (cam.height, cam.width):
        raise ValueError("frame dimensions do not match the camera")
    rng = np.random.Generator(np.random.PCG64(seed))
    if full_cast is None:
        z_full, inst_full, _ = raycast(objects, cam)
    else:
        z_full, inst_full = full_cast
    detections = []
    for obj in sorted(objects, key=lambda o: o.instance_id):
        if obj.class_id not in registry:
            continue
        if solo_cache is not None and obj.instance_id in solo_cache:
            inst_solo = solo_cache[obj.instance_id]
        else:
            _, inst_solo, _ = raycast([obj], cam)
            if solo_cache is not None:
                solo_cache[obj.instance_id] = inst_solo
        expected = int((inst_solo == obj.instance_id).sum())
        if expected == 0:
            continue  # outside the camera frustum
        visible_mask = inst_full == obj.instance_id
        visible = int(visible_mask.sum())
        if visible < MIN_VISIBLE_PIXELS:
            continue  # fully (or almost fully) occluded: detector sees nothing
        if float(z_full[visible_mask].min()) < cam.depth_min:
            continue  # closer than the minimum sensing distance: hard failure
        confidence = registry.entries[obj.class_id].base_confidence * (visible / expected)
        vs, us = np.nonzero(visible_mask)
        touches_border = (
            us.min() == 0 or vs.min() == 0 or us.max() == cam.width - 1 or vs.max() == cam.height - 1
        )
        if touches_border:
            confidence *= BOUNDARY_FACTOR
        confidence = float(np.clip(confidence + rng.normal(0.0, CONFIDENCE_NOISE_STDDEV), 0.0, 1.0))
        position = obj.shape.centroid() + rng.normal(0.0, POSITION_NOISE_STDDEV, 3)
        detections.append(Detection(obj.class_id, confidence, tuple(position), obj.instance_id))
    return detections
