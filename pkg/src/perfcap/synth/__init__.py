from .body import BodyFrame, SubjectSpec, generate_subject, pose_subject
from .dataset import (CaptureSet, DatasetError, capture_subject, generate_dataset,
                      read_dataset, ring_cameras, write_dataset)
from .raytrace import render_gt

__all__ = [
    "BodyFrame", "SubjectSpec", "generate_subject", "pose_subject",
    "CaptureSet", "DatasetError", "capture_subject", "generate_dataset",
    "read_dataset", "ring_cameras", "write_dataset", "render_gt",
]
