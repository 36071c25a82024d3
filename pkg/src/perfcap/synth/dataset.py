"""Capture sets: camera rigs, synthetic captures, and the on-disk layout.

Disk layout under a dataset root:
    manifest.json                      cameras (decimal text), subjects, frame count
    img/{subject}/{cam}/{t:04d}.png    8-bit RGB
    mask/{subject}/{cam}/{t:04d}.png   8-bit single channel, 0 or 255
    verts/{subject}/{t:04d}.bin        u32 L, L*3 f64 world vertices,
                                       12 f64 row-major world->body pose (R then t)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..geometry import BodyPose, Camera
from .body import BodyFrame, SubjectSpec, generate_subject, pose_subject
from .raytrace import render_gt


class DatasetError(IOError):
    pass


@dataclass
class CaptureSet:
    """All captures of one subject: C cameras x T frames."""

    subject_id: str
    seed: int
    cameras: list[Camera]
    images: np.ndarray      # [C, T, H, W, 3] float64 in [0, 1]
    masks: np.ndarray       # [C, T, H, W] bool
    frames: list[BodyFrame]
    spec: SubjectSpec | None = None

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def ring_cameras(n: int, radius: float = 2.3, height: float = 0.45,
                 focal: float = 90.0, width: int = 64, height_px: int = 64,
                 target=(0.0, 0.45, 0.0)) -> list[Camera]:
    """n cameras on a horizontal ring, all aimed at the target point."""
    target = np.asarray(target, dtype=np.float64)
    cams = []
    for i in range(n):
        ang = 2 * np.pi * i / n
        center = np.array([radius * np.sin(ang), height, radius * np.cos(ang)])
        fwd = target - center
        fwd /= np.linalg.norm(fwd)
        u_axis = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
        u_axis /= np.linalg.norm(u_axis)
        v_axis = np.cross(fwd, u_axis)  # points world-down: upright image, det +1
        R = np.stack([u_axis, v_axis, fwd])
        K = np.array([[focal, 0, (width - 1) / 2], [0, focal, (height_px - 1) / 2], [0, 0, 1.0]])
        cams.append(Camera(K, R, -R @ center, width, height_px))
    return cams


def capture_subject(seed: int, cameras: list[Camera], n_frames: int,
                    total_vertices: int = 600) -> CaptureSet:
    """Generate, pose and raytrace one subject across all cameras/frames."""
    spec = generate_subject(seed, total_vertices=total_vertices)
    frames = [pose_subject(spec, t) for t in range(n_frames)]
    C = len(cameras)
    H, W = cameras[0].height, cameras[0].width
    images = np.zeros((C, n_frames, H, W, 3))
    masks = np.zeros((C, n_frames, H, W), dtype=bool)
    for c, cam in enumerate(cameras):
        for t, frame in enumerate(frames):
            images[c, t], masks[c, t] = render_gt(frame, spec, cam)
    return CaptureSet(subject_id=f"s{seed:03d}", seed=seed, cameras=cameras,
                      images=images, masks=masks, frames=frames, spec=spec)


def generate_dataset(seed: int, n_subjects: int, n_frames: int, n_views: int,
                     resolution: int = 64, total_vertices: int = 600) -> list[CaptureSet]:
    cams = ring_cameras(n_views, width=resolution, height_px=resolution,
                        focal=90.0 * resolution / 64.0)
    return [capture_subject(seed + i, cams, n_frames, total_vertices=total_vertices)
            for i in range(n_subjects)]


# -- disk round trip -------------------------------------------------------------


def _img_to_png(path: Path, arr: np.ndarray):
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def _png_to_img(path: Path) -> np.ndarray:
    if not path.exists():
        raise DatasetError(f"missing image file {path}")
    return np.asarray(Image.open(path), dtype=np.float64) / 255.0


def write_dataset(captures: list[CaptureSet], root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cams = captures[0].cameras
    manifest = {
        "frame_count": captures[0].n_frames,
        "cameras": [
            {"K": cam.K.reshape(-1).tolist(), "R": cam.R.reshape(-1).tolist(),
             "t": cam.t.tolist(), "width": cam.width, "height": cam.height}
            for cam in cams
        ],
        "subjects": [{"id": cs.subject_id, "seed": cs.seed,
                      "vertex_count": int(cs.frames[0].vertices.shape[0])}
                     for cs in captures],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")

    for cs in captures:
        for c in range(cs.n_cameras):
            for t in range(cs.n_frames):
                _img_to_png(root / "img" / cs.subject_id / f"c{c:02d}" / f"{t:04d}.png",
                            cs.images[c, t])
                mask = cs.masks[c, t].astype(np.uint8) * 255
                path = root / "mask" / cs.subject_id / f"c{c:02d}" / f"{t:04d}.png"
                path.parent.mkdir(parents=True, exist_ok=True)
                Image.fromarray(mask).save(path)
        for t, frame in enumerate(cs.frames):
            path = root / "verts" / cs.subject_id / f"{t:04d}.bin"
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as fh:
                verts = np.ascontiguousarray(frame.vertices, dtype="<f8")
                fh.write(struct.pack("<I", len(verts)))
                fh.write(verts.tobytes())
                pose = np.concatenate([frame.pose.rotation.reshape(-1), frame.pose.translation])
                fh.write(pose.astype("<f8").tobytes())


def _read_verts(path: Path) -> tuple[np.ndarray, BodyPose]:
    if not path.exists():
        raise DatasetError(f"missing vertex file {path}")
    blob = path.read_bytes()
    (L,) = struct.unpack_from("<I", blob, 0)
    need = 4 + L * 24 + 96
    if len(blob) != need:
        raise DatasetError(f"{path}: expected {need} bytes for L={L}, got {len(blob)}")
    verts = np.frombuffer(blob, dtype="<f8", count=L * 3, offset=4).reshape(L, 3).copy()
    pose_vals = np.frombuffer(blob, dtype="<f8", count=12, offset=4 + L * 24)
    pose = BodyPose(pose_vals[:9].reshape(3, 3), pose_vals[9:])
    return verts, pose


def read_dataset(root) -> list[CaptureSet]:
    root = Path(root)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise DatasetError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetError(f"{mpath}: invalid manifest ({e})") from e

    cams = [Camera(np.array(c["K"]).reshape(3, 3), np.array(c["R"]).reshape(3, 3),
                   np.array(c["t"]), int(c["width"]), int(c["height"]))
            for c in manifest["cameras"]]
    T = int(manifest["frame_count"])

    captures = []
    for sub in manifest["subjects"]:
        captures.append(_read_subject(root, sub["id"], int(sub["seed"]), cams, T,
                                      int(sub["vertex_count"])))
    return captures


def _read_subject(root: Path, sid: str, seed: int, cams: list[Camera], T: int,
                  vertex_count: int) -> CaptureSet:
    spec = generate_subject(seed, total_vertices=vertex_count)
    C = len(cams)
    H, W = cams[0].height, cams[0].width
    images = np.zeros((C, T, H, W, 3))
    masks = np.zeros((C, T, H, W), dtype=bool)
    frames = []
    for t in range(T):
        verts, pose = _read_verts(root / "verts" / sid / f"{t:04d}.bin")
        # joint angles and capsules are cheap to regenerate deterministically;
        # vertices/pose stay exactly as stored
        regen = pose_subject(spec, t)
        regen.vertices = verts
        regen.pose = pose
        frames.append(regen)
    for c in range(C):
        for t in range(T):
            images[c, t] = _png_to_img(root / "img" / sid / f"c{c:02d}" / f"{t:04d}.png")
            m = _png_to_img(root / "mask" / sid / f"c{c:02d}" / f"{t:04d}.png")
            masks[c, t] = m > 0.5
    return CaptureSet(subject_id=sid, seed=seed, cameras=cams, images=images,
                      masks=masks, frames=frames, spec=spec)
