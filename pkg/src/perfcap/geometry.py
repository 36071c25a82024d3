"""Pinhole cameras, rays, boxes and rigid body-frame transforms.

Conventions (fixed across the whole pipeline):
  * world -> camera: x_cam = R x + t, projection K (R x + t)
  * pixel centers sit at integer coordinates, origin top-left, so the
    image footprint is [-0.5, W-0.5] x [-0.5, H-0.5]
  * all lengths in meters, all arrays float64
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    pass


def _vec3(x):
    v = np.asarray(x, dtype=np.float64).reshape(3)
    return v


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics K, world->camera rotation R, translation t."""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "t", _vec3(self.t))
        err = np.abs(self.R @ self.R.T - np.eye(3)).max()
        if err > 1e-6 or abs(np.linalg.det(self.R) - 1.0) > 1e-6:
            raise GeometryError(f"R is not a proper rotation (orthonormality error {err:.2e})")
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0 or np.abs(self.K[np.tril_indices(3, -1)]).max() > 0:
            raise GeometryError("K must be upper-triangular with positive focal lengths")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates (-R^T t)."""
        return -self.R.T @ self.t


@dataclass
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    z_near: float | None = None
    z_far: float | None = None

    def __post_init__(self):
        self.origin = _vec3(self.origin)
        self.dir = _vec3(self.dir)
        n = np.linalg.norm(self.dir)
        if abs(n - 1.0) > 1e-9:
            raise GeometryError(f"ray direction must be unit length, |d| = {n:.12f}")
        if self.z_near is not None and self.z_far is not None:
            if not (0 < self.z_near < self.z_far):
                raise GeometryError(f"need 0 < z_near < z_far, got ({self.z_near}, {self.z_far})")

    def at(self, s: float) -> np.ndarray:
        return self.origin + s * self.dir


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", _vec3(self.min))
        object.__setattr__(self, "max", _vec3(self.max))
        if np.any(self.min > self.max):
            raise GeometryError(f"box min {self.min} exceeds max {self.max}")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def sides(self) -> np.ndarray:
        return self.max - self.min

    def contains(self, x, atol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.all((x >= self.min - atol) & (x <= self.max + atol), axis=-1)


@dataclass(frozen=True)
class BodyPose:
    """Rigid transform from world coordinates into the body-local frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", _vec3(self.translation))
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6:
            raise GeometryError(f"pose rotation not orthonormal (error {err:.2e})")

    @staticmethod
    def identity() -> "BodyPose":
        return BodyPose(np.eye(3), np.zeros(3))


# -- projection and rays -------------------------------------------------------


def project_point(cam: Camera, x) -> tuple[np.ndarray, float]:
    """World point -> (pixel uv, camera depth). Raises behind the camera."""
    q = cam.K @ (cam.R @ _vec3(x) + cam.t)
    if q[2] <= 1e-9:
        raise GeometryError(f"point {x} is behind the camera (depth {q[2]:.3e})")
    return q[:2] / q[2], float(q[2])


def project_points(cam: Camera, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched projection: (pixels [N,2], depths [N], in_front [N]).

    Points at or behind the camera plane get pixel (0,0) and flag False
    instead of raising; callers treat them as unobserved.
    """
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 3)
    q = xs @ (cam.K @ cam.R).T + (cam.K @ cam.t)
    depth = q[:, 2]
    ok = depth > 1e-9
    px = np.zeros((len(xs), 2))
    px[ok] = q[ok, :2] / depth[ok, None]
    return px, depth, ok


def pixel_in_image(cam: Camera, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return ((p[..., 0] >= -0.5) & (p[..., 0] <= cam.width - 0.5)
            & (p[..., 1] >= -0.5) & (p[..., 1] <= cam.height - 0.5))


def generate_ray(cam: Camera, p) -> Ray:
    """Ray from the camera center through pixel p (bounds unset)."""
    p = np.asarray(p, dtype=np.float64).reshape(2)
    if not pixel_in_image(cam, p):
        raise GeometryError(f"pixel {p} outside image {cam.width}x{cam.height}")
    d_cam = np.linalg.solve(cam.K, np.array([p[0], p[1], 1.0]))
    d_world = cam.R.T @ d_cam
    return Ray(cam.center, d_world / np.linalg.norm(d_world))


def generate_rays(cam: Camera, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched rays through pixel centers: (origin [3], dirs [N,3])."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    ones = np.ones((len(pixels), 1))
    d_cam = np.concatenate([pixels, ones], axis=1) @ np.linalg.inv(cam.K).T
    d_world = d_cam @ cam.R
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    return cam.center, d_world


# -- boxes -----------------------------------------------------------------------


def body_bbox(vertices: np.ndarray, margin_fraction: float = 0.025) -> Aabb:
    """Axis-aligned extent of the vertices, each side grown by the margin
    fraction about the box center."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if len(vertices) == 0:
        raise GeometryError("body_bbox of an empty vertex list")
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    pad = 0.5 * margin_fraction * (hi - lo)  # grows each side by the fraction, center fixed
    return Aabb(lo - pad, hi + pad)


def ray_box_bounds(ray: Ray, box: Aabb) -> tuple[float, float] | None:
    """Slab-test entry/exit distances along the ray, or None on a miss.

    Entry is clamped to 1e-6 so origins inside the box still yield a
    valid sampling interval.  Grazing hits (exactly on a face) count as
    hits: comparisons are inclusive.
    """
    t0, t1 = -np.inf, np.inf
    for ax in range(3):
        o, d = ray.origin[ax], ray.dir[ax]
        if abs(d) < 1e-12:
            if o < box.min[ax] or o > box.max[ax]:
                return None
            continue
        a = (box.min[ax] - o) / d
        b = (box.max[ax] - o) / d
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
    if t0 > t1 or t1 <= 0:
        return None
    return max(t0, 1e-6), t1


def ray_box_bounds_batch(origin: np.ndarray, dirs: np.ndarray, box: Aabb):
    """Vectorized slab test for a shared origin: (near [N], far [N], hit [N])."""
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        a = (box.min - origin) * inv
        b = (box.max - origin) * inv
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    # axis-parallel rays: ignore that axis if the origin is inside its slab
    par = np.abs(dirs) < 1e-12
    inside = (origin >= box.min) & (origin <= box.max)
    lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    t0 = lo.max(axis=1)
    t1 = hi.min(axis=1)
    hit = (t0 <= t1) & (t1 > 0)
    return np.maximum(t0, 1e-6), t1, hit


# -- rigid transforms -------------------------------------------------------------


def world_to_body(pose: BodyPose, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x @ pose.rotation.T + pose.translation


def body_to_world(pose: BodyPose, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - pose.translation) @ pose.rotation
