"""Camera model, projection, reference alignment, view perturbation.

Convention: right-handed, camera looks down +z, y down in pixels. A
reference camera exported by an estimator working in camera coordinates
has R = I, T = 0 and carries the subject placement in the vertex data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .blobs import decode_array, encode_array
from .body import VertexFrame
from .errors import ContractError, SchemaError
from .rotations import axis_angle_to_matrix

__all__ = [
    "Intrinsics",
    "Extrinsics",
    "TrackFrame",
    "CameraTrack",
    "Points2D",
    "project",
    "reparameterize_intrinsics",
    "align_frame",
    "align_to_reference",
    "perturb",
    "reference_stop_step",
    "track_violations",
    "load_track",
    "save_track",
    "load_reference_frames",
    "save_reference_frames",
    "DEFAULT_NEAR",
    "DEFAULT_CROP_SIDE",
]

DEFAULT_NEAR = 1e-3
DEFAULT_CROP_SIDE = 512.0

_ORTHO_TOL = 1e-9


def _frozen(arr, dtype=np.float64):
    # Always copy: ascontiguousarray would alias (and freeze) caller arrays.
    out = np.array(arr, dtype=dtype, order="C", copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels on a width x height frame."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ContractError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if self.width <= 0 or self.height <= 0:
            raise ContractError(f"frame dims must be positive, got {self.width}x{self.height}")
        if not (0.0 <= self.cx <= self.width and 0.0 <= self.cy <= self.height):
            raise ContractError(
                f"principal point ({self.cx}, {self.cy}) outside frame {self.width}x{self.height}"
            )


@dataclass(frozen=True, eq=False)
class Extrinsics:
    """World-to-camera rigid transform: q = R p + T."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(self.R, dtype=np.float64)
        t = np.ascontiguousarray(self.T, dtype=np.float64)
        if r.shape != (3, 3):
            raise ContractError(f"R must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise ContractError(f"T must have shape (3,), got {t.shape}")
        dev = float(np.abs(r.T @ r - np.eye(3)).max())
        if dev > _ORTHO_TOL:
            raise ContractError(f"R not orthonormal (deviation {dev:.3e})")
        det = float(np.linalg.det(r))
        if abs(det - 1.0) > _ORTHO_TOL:
            raise ContractError(f"det(R) = {det:.12f}, expected 1")
        object.__setattr__(self, "R", _frozen(r))
        object.__setattr__(self, "T", _frozen(t))

    @staticmethod
    def identity() -> "Extrinsics":
        return Extrinsics(np.eye(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class TrackFrame:
    intrinsics: Intrinsics
    extrinsics: Extrinsics
    bbox: np.ndarray  # (x, y, w, h) in pixels

    def __post_init__(self):
        b = np.ascontiguousarray(self.bbox, dtype=np.float64)
        if b.shape != (4,):
            raise ContractError(f"bbox must have 4 entries, got {b.shape}")
        x, y, w, h = b
        fw, fh = self.intrinsics.width, self.intrinsics.height
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > fw or y + h > fh:
            raise ContractError(f"bbox {b.tolist()} outside frame {fw}x{fh}")
        object.__setattr__(self, "bbox", _frozen(b))


@dataclass(frozen=True, eq=False)
class CameraTrack:
    crop_side: float
    frames: tuple[TrackFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 1:
            raise ContractError("camera track has no frames")
        if not self.crop_side > 0:
            raise ContractError(f"crop_side must be positive, got {self.crop_side}")

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class Points2D:
    """Projected vertices: xy is (N, 2) with NaN rows where no pixel was
    emitted; visible means in front of the camera and inside
    [0, width) x [0, height)."""

    xy: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        xy = np.ascontiguousarray(self.xy, dtype=np.float64)
        vis = np.ascontiguousarray(self.visible, dtype=bool)
        if xy.ndim != 2 or xy.shape[1] != 2 or vis.shape != (xy.shape[0],):
            raise ContractError(f"inconsistent Points2D shapes {xy.shape} / {vis.shape}")
        object.__setattr__(self, "xy", _frozen(xy))
        object.__setattr__(self, "visible", _frozen(vis, bool))


# ---------------------------------------------------------------------------
# operations

def camera_space(vertices: np.ndarray, extr: Extrinsics) -> np.ndarray:
    """Apply the world-to-camera transform to (N, 3) points."""
    return vertices @ extr.R.T + extr.T


def project(
    vertices: VertexFrame, intr: Intrinsics, extr: Extrinsics, near: float = DEFAULT_NEAR
) -> Points2D:
    """Pinhole projection of the mesh vertices.

    Points closer than `near` (or behind the camera) get no pixel and are
    not visible.
    """
    if not near > 0:
        raise ContractError(f"near plane must be positive, got {near}")
    v = vertices.vertices
    if not np.all(np.isfinite(v)):
        raise ContractError("vertices contain non-finite values")
    q = camera_space(v, extr)
    in_front = q[:, 2] >= near
    xy = np.full((v.shape[0], 2), np.nan)
    z = np.where(in_front, q[:, 2], 1.0)
    px = intr.fx * q[:, 0] / z + intr.cx
    py = intr.fy * q[:, 1] / z + intr.cy
    xy[in_front, 0] = px[in_front]
    xy[in_front, 1] = py[in_front]
    visible = (
        in_front
        & (px >= 0.0) & (px < intr.width)
        & (py >= 0.0) & (py < intr.height)
    )
    return Points2D(xy, visible)


def reparameterize_intrinsics(
    base: Intrinsics,
    bbox: Sequence[float],
    frame_width: int,
    frame_height: int,
    crop_side: float | None = None,
) -> Intrinsics:
    """Carry square-crop intrinsics over to a bbox inside the full frame.

    The estimator reports focal lengths for a square crop of side S.
    Focal lengths are rescaled to the box size and the principal point is
    moved to the box center:

        fx' = fx * w / S,  fy' = fy * h / S,  (cx', cy') = bbox center.
    """
    s = float(crop_side) if crop_side is not None else float(base.width)
    if not s > 0:
        raise ContractError(f"crop side must be positive, got {s}")
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise ContractError(f"degenerate bbox (w={w}, h={h})")
    if x < 0 or y < 0 or x + w > frame_width or y + h > frame_height:
        raise ContractError(
            f"bbox {(x, y, w, h)} outside frame {frame_width}x{frame_height}"
        )
    return Intrinsics(
        fx=base.fx * (w / s),
        fy=base.fy * (h / s),
        cx=x + w / 2.0,
        cy=y + h / 2.0,
        width=int(frame_width),
        height=int(frame_height),
    )


def _yaw_angle(offset: np.ndarray) -> float | None:
    # Heading in the horizontal (x, z) plane; undefined for near-vertical
    # offsets.
    if math.hypot(float(offset[0]), float(offset[2])) < 1e-9:
        return None
    return math.atan2(float(offset[0]), float(offset[2]))


def align_frame(
    gen: VertexFrame,
    ref_pelvis: np.ndarray,
    pelvis_joint: int = 0,
    *,
    yaw: float | None = None,
) -> VertexFrame:
    """Translate one frame so its pelvis lands exactly on ref_pelvis,
    optionally pre-rotating by `yaw` about the vertical axis through the
    pelvis."""
    pelvis = gen.joints[pelvis_joint]
    verts = gen.vertices
    joints = gen.joints
    if yaw is not None and yaw != 0.0:
        r = axis_angle_to_matrix(np.array([0.0, yaw, 0.0]))
        verts = (verts - pelvis) @ r.T + pelvis
        joints = (joints - pelvis) @ r.T + pelvis
        pelvis = joints[pelvis_joint]
    delta = np.asarray(ref_pelvis, dtype=np.float64) - pelvis
    if yaw is None and not np.any(delta):
        return gen
    verts = verts + delta
    joints = joints + delta
    # Pin the pelvis bitwise; the additive path can differ in the last ulp.
    joints[pelvis_joint] = ref_pelvis
    return VertexFrame(verts, joints)


def align_to_reference(
    gen: Sequence[VertexFrame],
    ref: Sequence[VertexFrame],
    pelvis_joint: int = 0,
    align_yaw: bool = False,
    heading_joint: int = 1,
) -> list[VertexFrame]:
    """Per-frame pelvis alignment of a generated sequence onto reference
    frames that live in the camera coordinate frame.

    Pure translation by default. With align_yaw the generated frame is
    first rotated about the vertical axis so the pelvis-to-heading_joint
    direction matches the reference heading (skipped when either heading
    is degenerate).
    """
    if len(gen) != len(ref):
        raise ContractError(f"frame-count mismatch: {len(gen)} generated vs {len(ref)} reference")
    if len(gen) == 0:
        return []
    nj = gen[0].joints.shape[0]
    if not (0 <= pelvis_joint < nj and pelvis_joint < ref[0].joints.shape[0]):
        raise ContractError(f"pelvis joint {pelvis_joint} out of range")
    out = []
    for g, r in zip(gen, ref):
        yaw = None
        if align_yaw:
            a = _yaw_angle(g.joints[heading_joint] - g.joints[pelvis_joint])
            b = _yaw_angle(r.joints[heading_joint] - r.joints[pelvis_joint])
            if a is not None and b is not None:
                yaw = b - a
        out.append(align_frame(g, r.joints[pelvis_joint], pelvis_joint, yaw=yaw))
    return out


def perturb(extr: Extrinsics, delta_rot: Sequence[float], delta_t: Sequence[float]) -> Extrinsics:
    """Compose a small view change onto the extrinsics:
    R' = R(delta_rot) · R, T' = T + delta_t."""
    dr = np.ascontiguousarray(delta_rot, dtype=np.float64)
    dt = np.ascontiguousarray(delta_t, dtype=np.float64)
    if dr.shape != (3,) or dt.shape != (3,):
        raise ContractError("perturbation deltas must be 3-vectors")
    if float(np.linalg.norm(dr)) >= math.pi:
        raise ContractError(f"|delta_rot| = {float(np.linalg.norm(dr)):.6f} rad, must be < pi")
    return Extrinsics(axis_angle_to_matrix(dr) @ extr.R, extr.T + dt)


def reference_stop_step(total_steps: int, stop_fraction: float) -> int:
    """Denoising step at which an external driver should stop the
    reference pass: ceil(total * fraction) clamped to [1, total].

    Advisory metadata only; recorded into run manifests. The 1e-9 slack
    absorbs float representation of clean decimal fractions.
    """
    if total_steps < 1:
        raise ContractError(f"total_steps must be >= 1, got {total_steps}")
    if not (0.0 < stop_fraction <= 1.0):
        raise ContractError(f"stop_fraction must be in (0, 1], got {stop_fraction}")
    step = math.ceil(total_steps * stop_fraction - 1e-9)
    return max(1, min(int(total_steps), step))


# ---------------------------------------------------------------------------
# file formats

_FRAME_KEYS = ("R", "T", "fx", "fy", "cx", "cy", "width", "height", "bbox")


def track_violations(data: object) -> list[str]:
    """Schema/invariant violations for a parsed camera-track document."""
    out: list[str] = []
    if not isinstance(data, dict):
        return ["document: expected a JSON object"]
    crop = data.get("crop_side")
    if not isinstance(crop, (int, float)) or not crop > 0:
        out.append(f"crop_side: expected a positive number, got {crop!r}")
    frames = data.get("frames")
    if not isinstance(frames, list) or len(frames) == 0:
        out.append("frames: expected a non-empty list")
        return out
    for i, fr in enumerate(frames):
        if not isinstance(fr, dict):
            out.append(f"frames[{i}]: expected an object")
            continue
        missing = [k for k in _FRAME_KEYS if k not in fr]
        if missing:
            out.append(f"frames[{i}]: missing keys {missing}")
            continue
        r = np.asarray(fr["R"], dtype=np.float64)
        if r.shape != (9,):
            out.append(f"frames[{i}].R: expected 9 numbers (row-major)")
            continue
        r = r.reshape(3, 3)
        dev = float(np.abs(r.T @ r - np.eye(3)).max())
        if dev > _ORTHO_TOL:
            out.append(f"frames[{i}].R: not orthonormal (deviation {dev:.3e})")
        elif abs(float(np.linalg.det(r)) - 1.0) > _ORTHO_TOL:
            out.append(f"frames[{i}].R: det {float(np.linalg.det(r)):.9f}, expected 1")
        if np.asarray(fr["T"], dtype=np.float64).shape != (3,):
            out.append(f"frames[{i}].T: expected 3 numbers")
        w, h = fr["width"], fr["height"]
        if not (isinstance(w, (int, float)) and isinstance(h, (int, float)) and w > 0 and h > 0):
            out.append(f"frames[{i}]: invalid frame dims {w!r}x{h!r}")
            continue
        if not (fr["fx"] > 0 and fr["fy"] > 0):
            out.append(f"frames[{i}]: focal lengths must be positive")
        if not (0 <= fr["cx"] <= w and 0 <= fr["cy"] <= h):
            out.append(f"frames[{i}]: principal point outside frame")
        bbox = np.asarray(fr["bbox"], dtype=np.float64)
        if bbox.shape != (4,):
            out.append(f"frames[{i}].bbox: expected 4 numbers")
        else:
            x, y, bw, bh = bbox
            if bw <= 0 or bh <= 0 or x < 0 or y < 0 or x + bw > w or y + bh > h:
                out.append(f"frames[{i}].bbox: {bbox.tolist()} outside frame {w}x{h}")
    return out


def load_track(path: str | Path) -> CameraTrack:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    violations = track_violations(data)
    if violations:
        raise SchemaError(f"{path}: {violations[0]}", violations)
    frames = []
    for fr in data["frames"]:
        intr = Intrinsics(
            fx=float(fr["fx"]), fy=float(fr["fy"]),
            cx=float(fr["cx"]), cy=float(fr["cy"]),
            width=int(fr["width"]), height=int(fr["height"]),
        )
        extr = Extrinsics(
            np.asarray(fr["R"], dtype=np.float64).reshape(3, 3),
            np.asarray(fr["T"], dtype=np.float64),
        )
        frames.append(TrackFrame(intr, extr, np.asarray(fr["bbox"], dtype=np.float64)))
    return CameraTrack(float(data["crop_side"]), tuple(frames))


def save_track(track: CameraTrack, path: str | Path) -> None:
    doc = {
        "crop_side": track.crop_side,
        "frames": [
            {
                "R": fr.extrinsics.R.reshape(-1).tolist(),
                "T": fr.extrinsics.T.tolist(),
                "fx": fr.intrinsics.fx,
                "fy": fr.intrinsics.fy,
                "cx": fr.intrinsics.cx,
                "cy": fr.intrinsics.cy,
                "width": fr.intrinsics.width,
                "height": fr.intrinsics.height,
                "bbox": fr.bbox.tolist(),
            }
            for fr in track.frames
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_reference_frames(path: str | Path) -> list[VertexFrame]:
    """Reference vertex frames (camera coordinates) for alignment."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    frames = data.get("frames")
    if not isinstance(frames, list) or not frames:
        raise SchemaError(f"{path}: frames: expected a non-empty list")
    out = []
    for i, fr in enumerate(frames):
        if not isinstance(fr, dict) or "vertices" not in fr or "joints" not in fr:
            raise SchemaError(f"{path}: frames[{i}]: expected vertices and joints blobs")
        v = decode_array(fr["vertices"], f"frames[{i}].vertices")
        j = decode_array(fr["joints"], f"frames[{i}].joints")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(j))):
            raise SchemaError(f"{path}: frames[{i}]: non-finite values")
        out.append(VertexFrame(v, j))
    return out


def save_reference_frames(frames: Sequence[VertexFrame], path: str | Path) -> None:
    doc = {
        "frames": [
            {"vertices": encode_array(f.vertices), "joints": encode_array(f.joints)}
            for f in frames
        ]
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
