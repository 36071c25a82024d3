"""Synthetic articulated performers built from capsules.

A subject is a 9-bone tree (pelvis, spine, head, two 2-bone arms, two
single-bone legs).  Bone sizes, colors, stripe textures and motion
parameters are drawn once per identity seed; posing is a smooth periodic
function of the frame index, so every frame is reproducible from
(seed, t) alone.  Surface vertices live on a fixed per-bone lattice and
are tracked: vertex i refers to the same material point in every frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng as rngmod
from ..geometry import BodyPose

# nominal clip length the motion frequencies are expressed against
MOTION_PERIOD_FRAMES = 30.0

_BONE_NAMES = ("pelvis", "spine", "head", "l_upper_arm", "l_forearm",
               "r_upper_arm", "r_forearm", "l_thigh", "r_thigh")


@dataclass(frozen=True)
class Bone:
    name: str
    parent: int                  # -1 for the root
    attach_frac: float           # where on the parent segment this bone roots
    attach_offset: np.ndarray    # extra offset in the parent joint frame (m)
    rest_dir: np.ndarray         # unit bone direction before joint rotation
    length: float
    radius: float
    color: np.ndarray            # base albedo rgb in [0,1]
    stripe_color: np.ndarray
    stripe_period: float         # stripe width along the axis (m)
    swing_axis: np.ndarray       # joint rotation axis (unit)
    amplitude: float             # joint swing amplitude (rad)
    frequency: float             # cycles per MOTION_PERIOD_FRAMES
    phase: float


@dataclass(frozen=True)
class SubjectSpec:
    seed: int
    bones: tuple[Bone, ...]
    ring_counts: tuple[int, ...]     # vertex rings per bone (6 samples each + 2 apexes)
    root_yaw_amplitude: float
    root_yaw_frequency: float
    root_yaw_phase: float
    root_sway_amplitude: float

    @property
    def vertex_count(self) -> int:
        return sum(6 * r + 2 for r in self.ring_counts)


@dataclass
class BodyFrame:
    """One posed frame: joint angles, tracked world vertices, root pose."""

    t: int
    joint_angles: np.ndarray         # [n_bones] radians
    vertices: np.ndarray             # [L, 3] world coordinates
    pose: BodyPose                   # world -> body-local
    capsules: list = field(default_factory=list)  # (a, b, radius, bone_idx) world, for the raytracer


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def _rot_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def generate_subject(seed: int, total_vertices: int = 600) -> SubjectSpec:
    """Deterministic identity: dimensions, appearance and motion style."""
    g = rngmod.stream(seed, "subject")

    def color():
        return g.uniform(0.15, 0.95, size=3)

    # (parent, attach_frac, attach_offset builder, rest_dir, length range, radius range)
    hip_w = g.uniform(0.07, 0.10)
    shoulder_w = g.uniform(0.13, 0.17)
    topology = {
        "pelvis": (-1, 0.0, np.zeros(3), (0, 1, 0), (0.10, 0.16), (0.09, 0.12)),
        "spine": (0, 1.0, np.zeros(3), (0, 1, 0), (0.38, 0.48), (0.07, 0.10)),
        "head": (1, 1.0, np.zeros(3), (0, 1, 0), (0.16, 0.22), (0.07, 0.10)),
        "l_upper_arm": (1, 0.95, np.array([-shoulder_w, 0, 0]), (-0.8, -0.6, 0), (0.24, 0.30), (0.035, 0.05)),
        "l_forearm": (3, 1.0, np.zeros(3), (-0.45, -0.9, 0), (0.22, 0.27), (0.03, 0.042)),
        "r_upper_arm": (1, 0.95, np.array([shoulder_w, 0, 0]), (0.8, -0.6, 0), (0.24, 0.30), (0.035, 0.05)),
        "r_forearm": (5, 1.0, np.zeros(3), (0.45, -0.9, 0), (0.22, 0.27), (0.03, 0.042)),
        "l_thigh": (0, 0.0, np.array([-hip_w, 0, 0]), (-0.12, -1, 0), (0.36, 0.44), (0.05, 0.07)),
        "r_thigh": (0, 0.0, np.array([hip_w, 0, 0]), (0.12, -1, 0), (0.36, 0.44), (0.05, 0.07)),
    }

    bones = []
    for name in _BONE_NAMES:
        parent, frac, off, rest, lrange, rrange = topology[name]
        length = g.uniform(*lrange)
        radius = g.uniform(*rrange)
        swing = _unit(g.normal(size=3))
        bones.append(Bone(
            name=name, parent=parent, attach_frac=frac, attach_offset=off,
            rest_dir=_unit(rest), length=length, radius=radius,
            color=color(), stripe_color=color(),
            stripe_period=g.uniform(0.05, 0.12),
            swing_axis=swing,
            amplitude=0.0 if name == "pelvis" else g.uniform(0.15, 0.45),
            frequency=g.uniform(0.5, 1.5),
            phase=g.uniform(0, 2 * np.pi),
        ))

    # area-proportional ring allocation (largest remainder), 6 samples per
    # ring plus 2 cap apexes per bone
    n_rings_total = (total_vertices - 2 * len(bones)) // 6
    if n_rings_total < len(bones):
        raise ValueError(f"total_vertices={total_vertices} too small for {len(bones)} bones")
    areas = np.array([2 * np.pi * b.radius * b.length + 4 * np.pi * b.radius ** 2 for b in bones])
    quota = areas / areas.sum() * n_rings_total
    counts = np.maximum(np.floor(quota).astype(int), 1)
    remainder = quota - np.floor(quota)
    for i in np.argsort(-remainder, kind="stable"):
        if counts.sum() >= n_rings_total:
            break
        counts[i] += 1
    while counts.sum() > n_rings_total:  # possible after the min-1 clamp
        counts[int(np.argmax(counts))] -= 1
    while counts.sum() < n_rings_total:
        counts[int(np.argmin(counts))] += 1

    return SubjectSpec(
        seed=seed, bones=tuple(bones), ring_counts=tuple(int(c) for c in counts),
        root_yaw_amplitude=g.uniform(0.2, 0.6),
        root_yaw_frequency=g.uniform(0.4, 0.9),
        root_yaw_phase=g.uniform(0, 2 * np.pi),
        root_sway_amplitude=g.uniform(0.02, 0.06),
    )


def _bone_frames(spec: SubjectSpec, t: int):
    """Forward kinematics in body-local coordinates.

    Returns per bone (start point a, unit direction, rotation) with joints
    accumulating down the tree.
    """
    angles = np.array([
        b.amplitude * np.sin(2 * np.pi * b.frequency * t / MOTION_PERIOD_FRAMES + b.phase)
        for b in spec.bones
    ])
    starts, dirs, rots = [], [], []
    for i, b in enumerate(spec.bones):
        joint_rot = _rot_axis_angle(b.swing_axis, angles[i])
        if b.parent < 0:
            base_rot = joint_rot
            a = np.zeros(3)
        else:
            parent_rot = rots[b.parent]
            base_rot = parent_rot @ joint_rot
            pa, pd = starts[b.parent], dirs[b.parent]
            a = pa + pd * (spec.bones[b.parent].length * b.attach_frac) + parent_rot @ b.attach_offset
        d = _unit(base_rot @ b.rest_dir)
        starts.append(a)
        dirs.append(d)
        rots.append(base_rot)
    return angles, starts, dirs, rots


def _root_transform(spec: SubjectSpec, t: int):
    """Body-local -> world rigid motion of the whole subject."""
    yaw = spec.root_yaw_amplitude * np.sin(
        2 * np.pi * spec.root_yaw_frequency * t / MOTION_PERIOD_FRAMES + spec.root_yaw_phase)
    R = _rot_axis_angle(np.array([0.0, 1.0, 0.0]), yaw)
    sway = spec.root_sway_amplitude
    trans = np.array([
        sway * np.sin(2 * np.pi * t / MOTION_PERIOD_FRAMES),
        0.0,
        sway * np.cos(2 * np.pi * t / MOTION_PERIOD_FRAMES),
    ])
    return R, trans


def pose_subject(spec: SubjectSpec, t: int) -> BodyFrame:
    """Pose at frame t: tracked surface vertices + capsule geometry (world)."""
    angles, starts, dirs, rots = _bone_frames(spec, t)
    R_root, t_root = _root_transform(spec, t)

    verts_local = []
    capsules = []
    for i, b in enumerate(spec.bones):
        a, d, rot = starts[i], dirs[i], rots[i]
        end = a + d * b.length
        # lateral frame rotating with the bone so lattice points are tracked
        u = rot @ _perp(b.rest_dir)
        u = _unit(u - np.dot(u, d) * d)
        w = np.cross(d, u)
        n_rings = spec.ring_counts[i]
        stations = (np.arange(n_rings) + 0.5) / n_rings  # fractions along the segment
        for s in stations:
            center = a + d * (s * b.length)
            for k in range(6):
                phi = 2 * np.pi * k / 6
                verts_local.append(center + b.radius * (np.cos(phi) * u + np.sin(phi) * w))
        verts_local.append(a - b.radius * d)      # cap apexes keep the bbox honest
        verts_local.append(end + b.radius * d)
        capsules.append((a, end, b.radius, i))

    verts_local = np.asarray(verts_local).reshape(-1, 3)
    verts_world = verts_local @ R_root.T + t_root
    capsules_world = [
        (R_root @ a + t_root, R_root @ bb + t_root, r, idx) for a, bb, r, idx in capsules
    ]
    pose = BodyPose(R_root.T, -R_root.T @ t_root)
    return BodyFrame(t=t, joint_angles=angles, vertices=verts_world, pose=pose,
                     capsules=capsules_world)


def _perp(v: np.ndarray) -> np.ndarray:
    v = _unit(v)
    ref = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return _unit(np.cross(v, ref))
