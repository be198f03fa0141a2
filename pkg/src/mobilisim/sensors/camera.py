"""Pinhole depth/normal/segmentation camera by analytic ray casting.

Camera frame: x right, y down, z forward (optical axis). The ray through
pixel (u, v) has camera-frame direction ((u-cx)/fx, (v-cy)/fy, 1), so the ray
parameter equals camera-z depth. Background pixels carry depth 0 and
segmentation id 0; normals are camera-frame unit vectors oriented toward the
camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..asset.model import BoxPrimitive, CylinderPrimitive, SpherePrimitive
from ..errors import EmptyFrame, ValidationError
from ..spatial import Transform

_T_MIN = 1e-6

DEFAULT_RESOLUTION = 512
DEFAULT_FOCAL = 535.0


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = DEFAULT_RESOLUTION
    height: int = DEFAULT_RESOLUTION
    fx: float = DEFAULT_FOCAL
    fy: float = DEFAULT_FOCAL
    cx: float = DEFAULT_RESOLUTION / 2.0
    cy: float = DEFAULT_RESOLUTION / 2.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError("image dimensions must be >= 1")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")


@dataclass
class SensorFrame:
    """Depth (m, 0 = no hit), camera-frame unit normals, per-pixel link ids
    (0 = background), plus the camera pose and capture timestamp."""

    depth: np.ndarray
    normal: np.ndarray
    segmentation: np.ndarray
    pose: Transform = field(default_factory=Transform.identity)
    timestamp: float = 0.0

    def __post_init__(self):
        fg = self.segmentation != 0
        if np.any(self.depth[fg] <= 0):
            raise ValidationError("foreground pixel with non-positive depth")
        norms = np.linalg.norm(self.normal[fg], axis=-1)
        if norms.size and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValidationError("foreground pixel with non-unit normal")


def _pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Unnormalized camera-frame ray directions, one per pixel, z = 1."""
    u = np.arange(intr.width, dtype=float)
    v = np.arange(intr.height, dtype=float)
    uu, vv = np.meshgrid(u, v)
    return np.stack([(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy,
                     np.ones_like(uu)], axis=-1)


def _ray_sphere(o, d, radius):
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * np.einsum("ij,ij->i", o, d)
    cterm = np.einsum("ij,ij->i", o, o) - radius * radius
    disc = b * b - 4.0 * a * cterm
    hit = disc >= 0
    t = np.full(o.shape[0], np.inf)
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t1 = (-b - sq) / (2.0 * a)
    t2 = (-b + sq) / (2.0 * a)
    cand = np.where(t1 > _T_MIN, t1, t2)
    valid = hit & (cand > _T_MIN)
    t[valid] = cand[valid]
    tsafe = np.where(valid, t, 0.0)
    p = o + tsafe[:, None] * d
    n = p / radius
    return t, n


def _ray_box(o, d, half):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    tlo = np.fmin(t1, t2)
    thi = np.fmax(t1, t2)
    # rays parallel to a slab: inside keeps (-inf, inf), outside kills the ray
    par = np.abs(d) < 1e-12
    inside = np.abs(o) <= half
    tlo = np.where(par, np.where(inside, -np.inf, np.inf), tlo)
    thi = np.where(par, np.where(inside, np.inf, -np.inf), thi)
    tnear = tlo.max(axis=1)
    tfar = thi.min(axis=1)
    valid = (tnear <= tfar) & (tnear > _T_MIN)
    t = np.where(valid, tnear, np.inf)
    tsafe = np.where(valid, tnear, 0.0)
    p = o + tsafe[:, None] * d
    axis = np.argmax(tlo, axis=1)
    n = np.zeros_like(o)
    rows = np.arange(o.shape[0])
    n[rows, axis] = np.sign(p[rows, axis])
    return t, n


def _ray_cylinder(o, d, radius, half_length):
    n_rays = o.shape[0]
    t = np.full(n_rays, np.inf)
    normal = np.zeros((n_rays, 3))
    # lateral surface
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2.0 * (o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1])
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - radius * radius
    disc = b * b - 4.0 * a * c
    ok = (disc >= 0) & (a > 1e-18)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            ts = (-b + sign * sq) / (2.0 * a)
            z = o[:, 2] + ts * d[:, 2]
            valid = ok & (ts > _T_MIN) & (np.abs(z) <= half_length) & (ts < t)
            t[valid] = ts[valid]
            p = o[valid] + ts[valid, None] * d[valid]
            normal[valid] = np.stack([p[:, 0] / radius, p[:, 1] / radius,
                                      np.zeros(valid.sum())], axis=-1)
    # caps
    dz = d[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        for zcap in (-half_length, half_length):
            ts = (zcap - o[:, 2]) / dz
            x = o[:, 0] + ts * d[:, 0]
            y = o[:, 1] + ts * d[:, 1]
            valid = (np.abs(dz) > 1e-12) & (ts > _T_MIN) & (x * x + y * y <= radius * radius) & (ts < t)
            t[valid] = ts[valid]
            normal[valid] = np.array([0.0, 0.0, np.sign(zcap)])
    return t, normal


def _bounding_radius(prim) -> float:
    if isinstance(prim, SpherePrimitive):
        return prim.radius
    if isinstance(prim, BoxPrimitive):
        return float(np.linalg.norm(prim.half_extents))
    return math.hypot(prim.radius, prim.half_length)


def render(scene, camera_pose: Transform, intrinsics: CameraIntrinsics | None = None,
           timestamp: float | None = None) -> SensorFrame:
    """Ray-cast every collision primitive in the scene: per pixel the nearest
    hit wins, giving camera-z depth, owning link id, and a camera-frame
    normal oriented toward the camera."""
    intr = intrinsics or CameraIntrinsics()
    rays_cam = _pixel_rays(intr).reshape(-1, 3)
    n_rays = rays_cam.shape[0]
    r_cam = camera_pose.matrix()
    origin_w = camera_pose.translation
    rays_w = rays_cam @ r_cam.T
    dd = np.einsum("ij,ij->i", rays_w, rays_w)

    best_t = np.full(n_rays, np.inf)
    best_id = np.zeros(n_rays, dtype=np.uint32)
    best_n = np.zeros((n_rays, 3))

    for link_id, prim, world_tf in scene.collision_geometry():
        # bounding-sphere cull before the exact intersection
        oc = world_tf.translation - origin_w
        radius = _bounding_radius(prim)
        ocd = rays_w @ oc
        disc = ocd * ocd - dd * (float(oc @ oc) - radius * radius)
        possible = disc >= 0.0
        if not possible.any():
            continue
        idx = np.nonzero(possible)[0]
        near = (ocd[idx] + np.sqrt(disc[idx])) / dd[idx] > _T_MIN
        idx = idx[near]
        if idx.size == 0:
            continue

        r_prim = world_tf.matrix()
        o_local = np.broadcast_to((r_prim.T @ (origin_w - world_tf.translation)),
                                  (idx.size, 3))
        d_local = rays_w[idx] @ r_prim
        if isinstance(prim, SpherePrimitive):
            t, n_local = _ray_sphere(o_local, d_local, prim.radius)
        elif isinstance(prim, BoxPrimitive):
            t, n_local = _ray_box(o_local, d_local, prim.half_extents)
        elif isinstance(prim, CylinderPrimitive):
            t, n_local = _ray_cylinder(o_local, d_local, prim.radius, prim.half_length)
        else:  # pragma: no cover - model enforces the primitive union
            continue
        closer = t < best_t[idx]
        if closer.any():
            sub = idx[closer]
            best_t[sub] = t[closer]
            best_id[sub] = link_id
            best_n[sub] = n_local[closer] @ r_prim.T

    hit = np.isfinite(best_t)
    depth = np.where(hit, best_t, 0.0)
    n_cam = best_n @ r_cam
    flip = np.einsum("ij,ij->i", n_cam, rays_cam) > 0
    n_cam[flip] *= -1.0
    norms = np.linalg.norm(n_cam, axis=1)
    n_cam[hit] /= norms[hit, None]

    shape = (intr.height, intr.width)
    return SensorFrame(
        depth=depth.reshape(shape),
        normal=n_cam.reshape(shape + (3,)),
        segmentation=best_id.reshape(shape),
        pose=camera_pose,
        timestamp=scene.time if timestamp is None and hasattr(scene, "time") else (timestamp or 0.0),
    )


def lift_point_cloud(frame: SensorFrame, intrinsics: CameraIntrinsics,
                     n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Back-project foreground pixels and sample exactly n points (camera
    frame), duplicating uniformly when fewer foreground pixels exist.
    Returns (points (n, 3), link ids (n,))."""
    if n < 1:
        raise ValidationError("sample count must be >= 1")
    vs, us = np.nonzero(frame.segmentation != 0)
    if vs.size == 0:
        raise EmptyFrame("no foreground pixels to lift")
    z = frame.depth[vs, us]
    x = (us - intrinsics.cx) * z / intrinsics.fx
    y = (vs - intrinsics.cy) * z / intrinsics.fy
    points = np.stack([x, y, z], axis=-1)
    ids = frame.segmentation[vs, us]
    rng = np.random.default_rng(seed)
    if points.shape[0] >= n:
        pick = rng.choice(points.shape[0], size=n, replace=False)
    else:
        pick = rng.choice(points.shape[0], size=n, replace=True)
    return points[pick], ids[pick]


def project_points(points: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Camera-frame points to pixel coordinates (u, v)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    u = points[:, 0] * intrinsics.fx / points[:, 2] + intrinsics.cx
    v = points[:, 1] * intrinsics.fy / points[:, 2] + intrinsics.cy
    return np.stack([u, v], axis=-1)


def look_at(eye, center, up=(0.0, 0.0, 1.0)) -> Transform:
    """Camera pose at `eye` with the optical axis through `center`."""
    eye = np.asarray(eye, dtype=float).reshape(3)
    center = np.asarray(center, dtype=float).reshape(3)
    z = center - eye
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=float).reshape(3)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-8:
        x = np.cross(z, np.array([1.0, 0.0, 0.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    m = np.column_stack([x, y, z])
    return Transform.from_matrix(np.block([[m, eye[:, None]], [np.zeros((1, 3)), np.ones((1, 1))]]))


def sample_hemisphere_views(center, radius: float, k: int, seed: int) -> list[Transform]:
    """k camera poses uniform over the upper hemisphere of the given radius,
    each looking at `center` with the world +z up direction."""
    if radius <= 0:
        raise ValidationError("radius must be positive")
    if k < 1:
        raise ValidationError("need at least one view")
    center = np.asarray(center, dtype=float).reshape(3)
    rng = np.random.default_rng(seed)
    # area-uniform on the upper hemisphere: z-height uniform, azimuth uniform
    zs = rng.uniform(0.0, 1.0, size=k)
    phis = rng.uniform(0.0, 2.0 * np.pi, size=k)
    poses = []
    for z, phi in zip(zs, phis):
        r_xy = np.sqrt(max(0.0, 1.0 - z * z))
        direction = np.array([r_xy * np.cos(phi), r_xy * np.sin(phi), z])
        poses.append(look_at(center + radius * direction, center))
    return poses
