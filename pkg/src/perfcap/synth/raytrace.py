"""Analytic ground-truth renderer for capsule bodies.

Every pixel gets an exact nearest ray-capsule intersection, Lambertian
shading under one fixed directional light plus ambient, and striped
per-bone albedo.  The mask is exactly the set of pixels whose primary ray
hits some capsule.  All math is float64 and vectorized over pixels, so
images are bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from ..geometry import Camera, generate_rays
from .body import BodyFrame, SubjectSpec

AMBIENT = 0.3
LIGHT_DIR = np.array([0.35, 0.80, 0.55]) / np.linalg.norm([0.35, 0.80, 0.55])


def _ray_capsule(origin, dirs, a, b, radius):
    """Nearest positive hit parameter per ray against one capsule, inf on miss.

    origin [3], dirs [N,3]; capsule = segment a-b with the given radius.
    Returns (t [N], hit_axial [N]) where hit_axial is the axial coordinate
    of the hit, clamped to [0, |b-a|], used for stripe texturing.
    """
    n = b - a
    seg_len = np.linalg.norm(n)
    best = np.full(len(dirs), np.inf)
    axial = np.zeros(len(dirs))

    if seg_len > 1e-12:
        n = n / seg_len
        m = origin - a                      # [3]
        md = m - np.dot(m, n) * n           # perp component of origin offset
        dd = dirs - np.outer(dirs @ n, n)   # perp component of directions
        qa = np.einsum("nd,nd->n", dd, dd)
        qb = 2.0 * dd @ md
        qc = np.dot(md, md) - radius * radius
        disc = qb * qb - 4.0 * qa * qc
        ok = (disc >= 0) & (qa > 1e-14)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_cyl = np.where(ok, (-qb - sq) / np.where(qa > 1e-14, 2.0 * qa, 1.0), 0.0)
        y = (m + t_cyl[:, None] * dirs) @ n
        valid = ok & (t_cyl > 1e-9) & (y >= 0.0) & (y <= seg_len)
        best = np.where(valid, t_cyl, best)
        axial = np.where(valid, y, axial)

    for center, y_val in ((a, 0.0), (b, seg_len)):
        m = origin - center
        qb = 2.0 * dirs @ m
        qc = np.dot(m, m) - radius * radius
        disc = qb * qb - 4.0 * qc
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_cap = np.where(ok, (-qb - sq) / 2.0, np.inf)
        valid = ok & (t_cap > 1e-9) & (t_cap < best)
        best = np.where(valid, t_cap, best)
        axial = np.where(valid, y_val, axial)

    return best, axial


def render_gt(frame: BodyFrame, spec: SubjectSpec, cam: Camera):
    """Analytic image + exact hit mask for one posed frame.

    Returns (image [H,W,3] float64 in [0,1], mask [H,W] bool).  Background
    is black, matching the mask-removed supervision convention.
    """
    H, W = cam.height, cam.width
    uu, vv = np.meshgrid(np.arange(W, dtype=np.float64), np.arange(H, dtype=np.float64))
    pixels = np.stack([uu.ravel(), vv.ravel()], axis=1)
    origin, dirs = generate_rays(cam, pixels)

    n_rays = len(dirs)
    best_t = np.full(n_rays, np.inf)
    best_bone = np.full(n_rays, -1, dtype=np.intp)
    best_axial = np.zeros(n_rays)

    for a, b, radius, bone_idx in frame.capsules:
        t, axial = _ray_capsule(origin, dirs, a, b, radius)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_axial = np.where(closer, axial, best_axial)
        best_bone = np.where(closer, bone_idx, best_bone)

    mask = np.isfinite(best_t)
    image = np.zeros((n_rays, 3))
    if mask.any():
        hits = np.where(mask)[0]
        points = origin + best_t[hits, None] * dirs[hits]
        for a, b, radius, bone_idx in frame.capsules:
            sel = best_bone[hits] == bone_idx
            if not sel.any():
                continue
            idx = hits[sel]
            p = points[sel]
            seg = b - a
            seg_len = np.linalg.norm(seg)
            n_axis = seg / seg_len if seg_len > 1e-12 else np.array([0.0, 1.0, 0.0])
            y = np.clip((p - a) @ n_axis, 0.0, seg_len)
            closest = a + y[:, None] * n_axis
            normal = p - closest
            normal /= np.linalg.norm(normal, axis=1, keepdims=True)
            bone = spec.bones[bone_idx]
            stripe = (np.floor(best_axial[idx] / bone.stripe_period) % 2).astype(bool)
            albedo = np.where(stripe[:, None], bone.stripe_color, bone.color)
            lambert = np.maximum(normal @ LIGHT_DIR, 0.0)
            image[idx] = albedo * (AMBIENT + (1.0 - AMBIENT) * lambert[:, None])

    return image.reshape(H, W, 3), mask.reshape(H, W)
