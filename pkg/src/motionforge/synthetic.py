"""Synthetic fixtures: a small chain body model plus matching motion,
camera track, reference frames, and denoiser family.

The chain uses dyadic coordinates and weights (exact in binary floating
point) so identity-pose and round-trip tests can assert bitwise
equality. Joint j sits at (0, j*L, 0); each joint owns four vertices and
two triangles; part ids cycle through the taxonomy.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .body import BodyModel, PoseFrame, VertexFrame, pose, save_model
from .camera import (
    CameraTrack,
    DEFAULT_CROP_SIDE,
    Extrinsics,
    Intrinsics,
    TrackFrame,
    reparameterize_intrinsics,
    save_reference_frames,
    save_track,
)
from .errors import SchemaError
from .motion import (
    MotionSequence,
    PipelineManifest,
    flatten,
    resample,
    save_family,
    save_motion,
)

__all__ = [
    "chain_model",
    "model_from_spec",
    "chain_motion",
    "chain_track",
    "reference_for",
    "write_demo_corpus",
]


def chain_model(
    n_joints: int = 3,
    segment_length: float = 0.25,
    half_width: float = 0.125,
    n_betas: int = 0,
) -> BodyModel:
    """Kinematic chain: parent[j] = j-1, four vertices and two triangles
    per joint.

    The two side vertices of joint j are bound rigidly to it and define
    the regressed joint position exactly; the two tip vertices blend
    0.75/0.25 with the child joint (fully with j at the chain end).
    """
    if n_joints < 1:
        raise SchemaError(f"chain needs at least one joint, got {n_joints}")
    nj, L, w = n_joints, float(segment_length), float(half_width)
    nv = 4 * nj
    template = np.zeros((nv, 3))
    weights = np.zeros((nv, nj))
    regressor = np.zeros((nj, nv))
    faces = np.zeros((2 * nj, 3), dtype=np.int64)
    for j in range(nj):
        v = 4 * j
        template[v + 0] = (-w, j * L, 0.0)
        template[v + 1] = (w, j * L, 0.0)
        template[v + 2] = (0.0, j * L + 0.5 * L, -w)
        template[v + 3] = (0.0, j * L + 0.5 * L, w)
        weights[v + 0, j] = 1.0
        weights[v + 1, j] = 1.0
        if j + 1 < nj:
            weights[v + 2, j] = 0.75
            weights[v + 2, j + 1] = 0.25
            weights[v + 3, j] = 0.75
            weights[v + 3, j + 1] = 0.25
        else:
            weights[v + 2, j] = 1.0
            weights[v + 3, j] = 1.0
        regressor[j, v + 0] = 0.5
        regressor[j, v + 1] = 0.5
        faces[2 * j] = (v + 0, v + 2, v + 1)
        faces[2 * j + 1] = (v + 1, v + 2, v + 3)
    parent = np.arange(-1, nj - 1, dtype=np.int64)
    parts = np.arange(nj, dtype=np.int64) % 6
    basis = None
    if n_betas > 0:
        basis = np.zeros((nv, 3, n_betas))
        for b in range(n_betas):
            scale = 2.0 ** -(3 + b // 2)
            if b % 2 == 0:
                basis[:, 1, b] = scale  # uniform growth along the chain axis
            else:
                basis[:, 0, b] = scale * np.sign(template[:, 0])  # widen
    return BodyModel(template, faces, regressor, weights, parent, parts, basis)


def model_from_spec(data: dict) -> BodyModel:
    """Expand a synthetic-spec document, e.g.
    {"generator": "chain", "n_joints": 3}."""
    if not isinstance(data, dict):
        raise SchemaError("synthetic spec: expected a JSON object")
    gen = data.get("generator")
    if gen != "chain":
        raise SchemaError(f"synthetic spec: unknown generator {gen!r}")
    return chain_model(
        n_joints=int(data.get("n_joints", 3)),
        segment_length=float(data.get("segment_length", 0.25)),
        half_width=float(data.get("half_width", 0.125)),
        n_betas=int(data.get("n_betas", 0)),
    )


def chain_motion(
    n_joints: int = 3,
    frame_count: int = 138,
    fps: float = 23.0,
    manifest: PipelineManifest | None = None,
) -> MotionSequence:
    """Deterministic swaying motion in front of the camera (subject near
    z = 3 m, chain centered vertically)."""
    if manifest is None:
        manifest = PipelineManifest(
            full_prompt="a simple figure sways from side to side",
            motion_prompt="sway side to side",
            semantic_prompt="a simple figure",
            source="synthetic",
        )
    frames = []
    denom = max(frame_count - 1, 1)
    for k in range(frame_count):
        phase = 2.0 * np.pi * k / denom
        go = np.array([0.0, 0.4 * np.sin(phase), 0.0])
        bp = np.zeros(3 * (n_joints - 1))
        for j in range(n_joints - 1):
            bp[3 * j + 2] = 0.5 * np.sin(phase + 0.7 * (j + 1))
        tr = np.array(
            [
                0.15 * np.sin(phase),
                -0.3125 + 0.05 * np.sin(2.0 * phase),
                3.0 + 0.2 * np.cos(phase),
            ]
        )
        frames.append(PoseFrame(go, bp, tr))
    return MotionSequence(float(fps), tuple(frames), np.zeros(0), manifest)


def chain_track(
    frame_count: int = 49,
    width: int = 120,
    height: int = 160,
    crop_side: float = DEFAULT_CROP_SIDE,
    base_focal: float = 2200.0,
) -> CameraTrack:
    """Identity-extrinsics track whose per-frame intrinsics come from a
    drifting detection box, exercising the square-crop
    reparameterization."""
    base = Intrinsics(
        fx=base_focal, fy=base_focal,
        cx=crop_side / 2.0, cy=crop_side / 2.0,
        width=int(crop_side), height=int(crop_side),
    )
    frames = []
    denom = max(frame_count - 1, 1)
    for k in range(frame_count):
        phase = 2.0 * np.pi * k / denom
        side = 64.0
        bx = width / 2.0 + 20.0 * np.sin(phase) - side / 2.0
        by = height / 2.0 + 10.0 * np.cos(phase) - side / 2.0
        bbox = (bx, by, side, side)
        intr = reparameterize_intrinsics(base, bbox, width, height, crop_side)
        frames.append(TrackFrame(intr, Extrinsics.identity(), np.asarray(bbox)))
    return CameraTrack(float(crop_side), tuple(frames))


def reference_for(
    model: BodyModel,
    motion: MotionSequence,
    offset=(0.0625, -0.03125, 0.25),
) -> list[VertexFrame]:
    """Reference vertex frames: the same motion posed with a constant
    translation offset, standing in for an estimator's camera-frame
    output."""
    off = np.asarray(offset, dtype=np.float64)
    betas = motion.betas if motion.betas.size else None
    out = []
    for f in motion.frames:
        shifted = PoseFrame(f.global_orient, f.body_pose, f.translation + off)
        out.append(pose(model, shifted, betas))
    return out


def write_demo_corpus(
    out_dir: str | Path,
    n_joints: int = 3,
    source_frames: int = 138,
    source_fps: float = 23.0,
    target_frames: int = 49,
    target_fps: float = 8.0,
    width: int = 120,
    height: int = 160,
    with_reference: bool = True,
    with_family: bool = True,
) -> dict[str, Path]:
    """Write the full fixture corpus and a ready-to-run config file.

    Returns the paths keyed by role (model, motion, track, config, ...).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = chain_model(n_joints)
    motion = chain_motion(n_joints, source_frames, source_fps)
    track = chain_track(target_frames, width, height)

    paths = {
        "model": out_dir / "model.json",
        "motion": out_dir / "motion.json",
        "track": out_dir / "track.json",
        "config": out_dir / "config.json",
    }
    save_model(model, paths["model"])
    save_motion(motion, paths["motion"])
    save_track(track, paths["track"])

    config = {
        "paths": {
            "model": "model.json",
            "model_format": "model-json",
            "motion": "motion.json",
            "camera_track": "track.json",
            "output_dir": "out",
        },
        "render": {
            "target_frame_count": target_frames,
            "target_fps": target_fps,
            "frame_formats": ["png", "ppm"],
        },
        "seed": 0,
        "workers": 1,
    }

    if with_reference:
        resampled = resample(motion, target_frames, target_fps)
        paths["reference"] = out_dir / "reference.json"
        save_reference_frames(reference_for(model, resampled), paths["reference"])
        config["reference"] = {"vertices": "reference.json"}

    if with_family:
        base = flatten(motion)
        members = [base, base + 8.0, base - 8.0, base + 16.0]
        paths["family"] = out_dir / "family.json"
        save_family(members, paths["family"])
        config["editing"] = {
            "t_edit": 0.5,
            "steps": 8,
            "denoiser": {"kind": "linear-family", "family": "family.json"},
        }

    paths["config"].write_text(json.dumps(config, sort_keys=True, indent=1) + "\n")
    return paths
