"""Part-colored software rasterizer for conditioning videos.

Deterministic by construction: pixel-center sampling, no anti-aliasing,
documented tie rules (nearer depth wins, equal depth goes to the lower
triangle index), flat shading per triangle. Output is byte-stable across
runs and triangle submission order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .body import BodyModel, part_labels, pose, PART_NAMES
from .camera import (
    CameraTrack,
    DEFAULT_NEAR,
    Extrinsics,
    Intrinsics,
    Points2D,
    align_frame,
    camera_space,
)
from .errors import ContractError
from .motion import MotionSequence

__all__ = [
    "Palette",
    "LightingConfig",
    "ConditioningVideo",
    "default_palette",
    "default_lighting",
    "edge_function",
    "rasterize_triangles",
    "rasterize_frame",
    "render_video",
    "write_png",
    "write_ppm",
    "save_frames",
    "save_points_jsonl",
]


@dataclass(frozen=True, eq=False)
class Palette:
    """RGB color per part id plus the background color; all pairwise
    distinct so part identity survives into the pixels."""

    colors: np.ndarray  # (n_parts, 3) uint8
    background: np.ndarray  # (3,) uint8

    def __post_init__(self):
        c = np.ascontiguousarray(self.colors, dtype=np.uint8)
        bg = np.ascontiguousarray(self.background, dtype=np.uint8)
        if c.ndim != 2 or c.shape != (len(PART_NAMES), 3):
            raise ContractError(f"palette must cover {len(PART_NAMES)} parts, got shape {c.shape}")
        if bg.shape != (3,):
            raise ContractError("background must be an RGB triple")
        rows = [tuple(row) for row in c] + [tuple(bg)]
        if len(set(rows)) != len(rows):
            raise ContractError("palette colors must be pairwise distinct")
        c.setflags(write=False)
        bg.setflags(write=False)
        object.__setattr__(self, "colors", c)
        object.__setattr__(self, "background", bg)

    @staticmethod
    def from_names(mapping: dict) -> "Palette":
        missing = [n for n in PART_NAMES if n not in mapping]
        if missing or "background" not in mapping:
            raise ContractError(f"palette mapping missing entries: {missing + ['background'] if 'background' not in mapping else missing}")
        colors = np.array([mapping[n] for n in PART_NAMES], dtype=np.uint8)
        return Palette(colors, np.array(mapping["background"], dtype=np.uint8))


def default_palette() -> Palette:
    return Palette.from_names(
        {
            "head": (255, 255, 0),
            "torso": (255, 0, 0),
            "left_arm": (0, 255, 0),
            "right_arm": (0, 255, 255),
            "left_leg": (0, 0, 255),
            "right_leg": (255, 0, 255),
            "background": (0, 0, 0),
        }
    )


@dataclass(frozen=True, eq=False)
class LightingConfig:
    """One directional light in camera space plus an ambient floor."""

    direction: np.ndarray  # (3,) unit vector
    ambient: float = 0.4

    def __post_init__(self):
        d = np.ascontiguousarray(self.direction, dtype=np.float64)
        if d.shape != (3,):
            raise ContractError("light direction must be a 3-vector")
        if abs(float(np.linalg.norm(d)) - 1.0) > 1e-9:
            raise ContractError(f"light direction must be unit norm, got |l| = {float(np.linalg.norm(d)):.12f}")
        if not (0.0 <= self.ambient <= 1.0):
            raise ContractError(f"ambient must be in [0, 1], got {self.ambient}")
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)


def default_lighting() -> LightingConfig:
    # Head-on light pointing from the camera into the scene.
    return LightingConfig(np.array([0.0, 0.0, -1.0]), ambient=0.4)


@dataclass(frozen=True, eq=False)
class ConditioningVideo:
    frames: np.ndarray  # (N, H, W, 3) uint8
    width: int
    height: int
    fps: float
    points: tuple[Points2D, ...]

    def __post_init__(self):
        f = np.ascontiguousarray(self.frames, dtype=np.uint8)
        if f.ndim != 4 or f.shape[0] < 1 or f.shape[3] != 3:
            raise ContractError(f"frames must be (N, H, W, 3), got {f.shape}")
        if f.shape[1] != self.height or f.shape[2] != self.width:
            raise ContractError("frame dims do not match width/height")
        if len(self.points) != f.shape[0]:
            raise ContractError("points must cover every frame")
        f.setflags(write=False)
        object.__setattr__(self, "frames", f)
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]


# ---------------------------------------------------------------------------
# rasterization core

def edge_function(ax, ay, bx, by, px, py):
    """Doubled signed area of triangle (a, b, p); positive when p lies
    left of the directed edge a->b."""
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def rasterize_triangles(
    xy: np.ndarray,
    z: np.ndarray,
    triangles: np.ndarray,
    colors: np.ndarray,
    width: int,
    height: int,
    background: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffered fill of screen-space triangles.

    xy is (N, 2) pixel coordinates, z the positive camera-space depth per
    vertex, colors one RGB row per triangle. Coverage is the inclusive
    edge-function test at pixel centers (i+0.5, j+0.5) after reordering
    each triangle counter-clockwise; depth at a pixel interpolates 1/z
    barycentrically (perspective-correct), larger 1/z wins, exact ties go
    to the lower triangle index. Returns (image, winner) where winner is
    the per-pixel triangle index (-1 for background).
    """
    if width <= 0 or height <= 0:
        raise ContractError(f"zero-area image ({width}x{height})")
    xy = np.asarray(xy, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
    if triangles.shape[0] != colors.shape[0]:
        raise ContractError("one color per triangle required")
    if triangles.size and np.any(z[triangles.reshape(-1)] <= 0.0):
        raise ContractError("triangle vertices must lie in front of the camera")

    zinv_buf = np.zeros((height, width))
    winner = np.full((height, width), -1, dtype=np.int64)

    for t in range(triangles.shape[0]):
        ia, ib, ic = triangles[t]
        ax, ay = xy[ia]
        bx, by = xy[ib]
        cx, cy = xy[ic]
        za, zb, zc = z[ia], z[ib], z[ic]
        area2 = edge_function(ax, ay, bx, by, cx, cy)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            bx, by, cx, cy = cx, cy, bx, by
            zb, zc = zc, zb
            area2 = -area2
        x0 = max(0, math.ceil(min(ax, bx, cx) - 0.5))
        x1 = min(width - 1, math.floor(max(ax, bx, cx) - 0.5))
        y0 = max(0, math.ceil(min(ay, by, cy) - 0.5))
        y1 = min(height - 1, math.floor(max(ay, by, cy) - 0.5))
        if x0 > x1 or y0 > y1:
            continue
        px = np.arange(x0, x1 + 1) + 0.5
        py = (np.arange(y0, y1 + 1) + 0.5)[:, None]
        e0 = edge_function(bx, by, cx, cy, px, py)
        e1 = edge_function(cx, cy, ax, ay, px, py)
        e2 = edge_function(ax, ay, bx, by, px, py)
        covered = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
        if not covered.any():
            continue
        zinv = (e0 / area2) / za + (e1 / area2) / zb + (e2 / area2) / zc
        region_z = zinv_buf[y0 : y1 + 1, x0 : x1 + 1]
        region_w = winner[y0 : y1 + 1, x0 : x1 + 1]
        take = covered & ((zinv > region_z) | ((zinv == region_z) & (t < region_w)))
        region_z[take] = zinv[take]
        region_w[take] = t

    image = np.empty((height, width, 3), dtype=np.uint8)
    image[:] = np.asarray(background, dtype=np.uint8)
    hit = winner >= 0
    if hit.any():
        image[hit] = colors[winner[hit]]
    return image, winner


def majority_part(tri_labels: np.ndarray) -> np.ndarray:
    """Per-triangle part id: the label held by at least two of the three
    vertices, or the lowest label when all three differ."""
    s = np.sort(np.asarray(tri_labels, dtype=np.int64), axis=1)
    return np.where(s[:, 0] == s[:, 1], s[:, 0], np.where(s[:, 1] == s[:, 2], s[:, 1], s[:, 0]))


def shade_colors(
    cam_verts: np.ndarray,
    triangles: np.ndarray,
    base_colors: np.ndarray,
    light: LightingConfig,
) -> np.ndarray:
    """Flat shading: intensity = ambient + (1-ambient) * max(0, n·l) with
    the face normal flipped toward the camera (n_z <= 0)."""
    a = cam_verts[triangles[:, 0]]
    b = cam_verts[triangles[:, 1]]
    c = cam_verts[triangles[:, 2]]
    n = np.cross(b - a, c - a)
    flip = n[:, 2] > 0.0
    n[flip] = -n[flip]
    norms = np.linalg.norm(n, axis=1)
    lam = np.zeros(len(triangles))
    ok = norms > 0.0
    lam[ok] = np.maximum(0.0, (n[ok] / norms[ok, None]) @ light.direction)
    intensity = light.ambient + (1.0 - light.ambient) * lam
    return np.floor(base_colors.astype(np.float64) * intensity[:, None] + 0.5).astype(np.uint8)


def rasterize_frame(
    mesh,
    faces: np.ndarray,
    labels: np.ndarray,
    intr: Intrinsics,
    extr: Extrinsics,
    palette: Palette | None = None,
    light: LightingConfig | None = None,
    near: float = DEFAULT_NEAR,
) -> np.ndarray:
    """Render one posed mesh to an RGB image.

    Triangles with any vertex closer than the near plane are dropped
    whole (no polygon clipping); uncovered pixels take the background
    color.
    """
    palette = palette if palette is not None else default_palette()
    light = light if light is not None else default_lighting()
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    labels = np.asarray(labels, dtype=np.int64)
    verts = mesh.vertices if hasattr(mesh, "vertices") else np.asarray(mesh, dtype=np.float64)
    if labels.shape[0] != verts.shape[0]:
        raise ContractError(f"labels cover {labels.shape[0]} vertices, mesh has {verts.shape[0]}")

    q = camera_space(verts, extr)
    keep = np.all(q[faces, 2] >= near, axis=1) if faces.size else np.zeros(0, dtype=bool)
    kept = faces[keep]
    if kept.size == 0:
        image = np.empty((intr.height, intr.width, 3), dtype=np.uint8)
        image[:] = palette.background
        return image

    zs = q[:, 2]
    xy = np.empty((verts.shape[0], 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        xy[:, 0] = intr.fx * q[:, 0] / zs + intr.cx
        xy[:, 1] = intr.fy * q[:, 1] / zs + intr.cy

    base = palette.colors[majority_part(labels[kept])]
    shaded = shade_colors(q, kept, base, light)
    image, _ = rasterize_triangles(xy, zs, kept, shaded, intr.width, intr.height, palette.background)
    return image


# ---------------------------------------------------------------------------
# video assembly

_WORKER_PAYLOAD: dict = {}


def _render_one(payload: dict, i: int):
    from .camera import project  # local import keeps fork payload light

    vf = pose(payload["model"], payload["frames"][i], payload["betas"])
    if payload["ref_pelvis"] is not None:
        vf = align_frame(vf, payload["ref_pelvis"][i], payload["pelvis_joint"])
    tf = payload["track"].frames[i]
    pts = project(vf, tf.intrinsics, tf.extrinsics, payload["near"])
    img = rasterize_frame(
        vf, payload["model"].faces, payload["labels"],
        tf.intrinsics, tf.extrinsics, payload["palette"], payload["light"], payload["near"],
    )
    return img, pts


def _init_pool(payload):
    _WORKER_PAYLOAD["p"] = payload


def _pool_task(i):
    return _render_one(_WORKER_PAYLOAD["p"], i)


def render_video(
    motion: MotionSequence,
    model: BodyModel,
    track: CameraTrack,
    palette: Palette | None = None,
    light: LightingConfig | None = None,
    reference: Sequence | None = None,
    pelvis_joint: int = 0,
    near: float = DEFAULT_NEAR,
    workers: int = 1,
) -> ConditioningVideo:
    """Pose, align (when reference frames are given), project, rasterize
    every frame. Frames may render on worker processes; output order is
    by frame index either way."""
    k = motion.frame_count
    if track.frame_count != k:
        raise ContractError(
            f"count mismatch: {k} motion frames vs {track.frame_count} track frames (resample first)"
        )
    dims = {(f.intrinsics.width, f.intrinsics.height) for f in track.frames}
    if len(dims) != 1:
        raise ContractError(f"track mixes frame dims: {sorted(dims)}")
    width, height = dims.pop()
    ref_pelvis = None
    if reference is not None:
        if len(reference) != k:
            raise ContractError(f"count mismatch: {k} motion frames vs {len(reference)} reference frames")
        nj = reference[0].joints.shape[0]
        if not 0 <= pelvis_joint < min(nj, model.n_joints):
            raise ContractError(f"pelvis joint {pelvis_joint} out of range")
        ref_pelvis = np.stack([r.joints[pelvis_joint] for r in reference])

    payload = {
        "model": model,
        "frames": motion.frames,
        "betas": motion.betas if motion.betas.size else None,
        "track": track,
        "palette": palette if palette is not None else default_palette(),
        "light": light if light is not None else default_lighting(),
        "ref_pelvis": ref_pelvis,
        "pelvis_joint": pelvis_joint,
        "near": near,
        "labels": part_labels(model),
    }

    n_workers = min(int(workers), k) if workers else 1
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers, initializer=_init_pool, initargs=(payload,)) as pool:
            results = list(pool.map(_pool_task, range(k), chunksize=max(1, k // (4 * n_workers))))
    else:
        results = [_render_one(payload, i) for i in range(k)]

    frames = np.stack([r[0] for r in results])
    points = tuple(r[1] for r in results)
    return ConditioningVideo(frames, width, height, motion.fps, points)


# ---------------------------------------------------------------------------
# disk formats

def write_png(image: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), mode="RGB").save(str(path), format="PNG")


def write_ppm(image: np.ndarray, path: str | Path) -> None:
    """Binary P6; zero-dependency fallback format."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def save_frames(video: ConditioningVideo, out_dir: str | Path, formats: Sequence[str] = ("png",)) -> list[Path]:
    """frame_%04d.<ext> per frame; returns the written paths in order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(video.frame_count):
        for fmt in formats:
            p = out_dir / f"frame_{i:04d}.{fmt}"
            if fmt == "png":
                write_png(video.frames[i], p)
            elif fmt == "ppm":
                write_ppm(video.frames[i], p)
            else:
                raise ContractError(f"unknown frame format {fmt!r}")
            written.append(p)
    return written


def save_points_jsonl(video: ConditioningVideo, path: str | Path) -> None:
    """One record per frame and vertex: {frame, vertex, x, y, visible};
    x/y are null when the vertex got no pixel."""
    with open(path, "w") as fh:
        for i, pts in enumerate(video.points):
            for v in range(pts.xy.shape[0]):
                x, y = pts.xy[v]
                rec = {
                    "frame": i,
                    "vertex": v,
                    "x": None if math.isnan(x) else float(x),
                    "y": None if math.isnan(y) else float(y),
                    "visible": bool(pts.visible[v]),
                }
                fh.write(json.dumps(rec) + "\n")
