"""Motion sequences: loading, resampling, flattening, SDEdit-style editing.

A sequence is an ordered list of PoseFrame at a fixed fps plus shared
shape coefficients. Editing works in flattened pose-vector space: noise
is injected there, not on rotation manifolds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .body import PoseFrame
from .errors import ContractError, SchemaError
from .schedule import NoiseSchedule, forward_noise

__all__ = [
    "MAX_BETAS",
    "MotionSequence",
    "PipelineManifest",
    "DenoiserInterface",
    "ConstantDenoiser",
    "LinearFamilyDenoiser",
    "motion_violations",
    "load_motion",
    "save_motion",
    "load_family",
    "save_family",
    "resample",
    "flatten",
    "unflatten",
    "sdedit",
]

MAX_BETAS = 10


@dataclass(frozen=True)
class PipelineManifest:
    """Prompt metadata passed through from the upstream text pipeline."""

    full_prompt: str = ""
    motion_prompt: str = ""
    semantic_prompt: str = ""
    source: str = ""


@dataclass(frozen=True, eq=False)
class MotionSequence:
    fps: float
    frames: tuple[PoseFrame, ...]
    betas: np.ndarray
    manifest: PipelineManifest | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        b = np.ascontiguousarray(self.betas, dtype=np.float64)
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)
        if len(self.frames) < 1:
            raise ContractError("empty sequence")
        if not self.fps > 0:
            raise ContractError(f"fps must be positive, got {self.fps}")
        if b.ndim != 1 or b.shape[0] > MAX_BETAS:
            raise ContractError(f"betas must be a vector of length <= {MAX_BETAS}")
        d0 = self.frames[0].body_pose.shape[0]
        for i, f in enumerate(self.frames):
            if f.body_pose.shape[0] != d0:
                raise ContractError(f"frames[{i}]: pose length mismatch ({f.body_pose.shape[0]} vs {d0})")

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def n_joints(self) -> int:
        return self.frames[0].n_joints


class DenoiserInterface(Protocol):
    """Callable (noisy (K, D) array, timestep t in [0,1]) -> clean (K, D)."""

    def __call__(self, noisy: np.ndarray, t: float) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# file format

def motion_violations(data: object) -> list[str]:
    """Schema violations for a parsed motion document, with field paths."""
    out: list[str] = []
    if not isinstance(data, dict):
        return ["document: expected a JSON object"]
    fps = data.get("fps")
    if not isinstance(fps, (int, float)) or not fps > 0:
        out.append(f"fps: expected a positive number, got {fps!r}")
    betas = data.get("betas", [])
    if not isinstance(betas, list) or len(betas) > MAX_BETAS:
        out.append(f"betas: expected a list of at most {MAX_BETAS} numbers")
    frames = data.get("frames")
    if not isinstance(frames, list) or len(frames) == 0:
        out.append("frames: empty sequence")
        return out
    d0 = None
    for i, fr in enumerate(frames):
        if not isinstance(fr, dict):
            out.append(f"frames[{i}]: expected an object")
            continue
        for key, want in (("global_orient", 3), ("transl", 3)):
            v = fr.get(key)
            if not isinstance(v, list) or len(v) != want:
                out.append(f"frames[{i}].{key}: expected {want} numbers")
        bp = fr.get("body_pose")
        if not isinstance(bp, list) or len(bp) % 3 != 0:
            got = len(bp) if isinstance(bp, list) else bp
            out.append(f"frames[{i}].body_pose: pose length mismatch (length {got} is not a multiple of 3)")
            continue
        if d0 is None:
            d0 = len(bp)
        elif len(bp) != d0:
            out.append(f"frames[{i}].body_pose: pose length mismatch ({len(bp)} vs {d0})")
        for key in ("global_orient", "body_pose", "transl"):
            v = fr.get(key)
            if isinstance(v, list) and not all(
                isinstance(x, (int, float)) and np.isfinite(x) for x in v
            ):
                out.append(f"frames[{i}].{key}: non-finite or non-numeric values")
    man = data.get("manifest")
    if man is not None:
        if not isinstance(man, dict):
            out.append("manifest: expected an object")
        else:
            source = str(man.get("source", ""))
            if "t2m" in source.lower() and not str(man.get("motion_prompt", "")):
                out.append("manifest.motion_prompt: empty for a sequence with t2m provenance")
    return out


def load_motion(path: str | Path) -> MotionSequence:
    """Load a motion file; raises SchemaError with a field path on the
    first violation."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    violations = motion_violations(data)
    if violations:
        raise SchemaError(f"{path}: {violations[0]}", violations)
    frames = tuple(
        PoseFrame(
            np.asarray(fr["global_orient"], dtype=np.float64),
            np.asarray(fr["body_pose"], dtype=np.float64),
            np.asarray(fr["transl"], dtype=np.float64),
        )
        for fr in data["frames"]
    )
    manifest = None
    if data.get("manifest") is not None:
        m = data["manifest"]
        manifest = PipelineManifest(
            full_prompt=str(m.get("full_prompt", "")),
            motion_prompt=str(m.get("motion_prompt", "")),
            semantic_prompt=str(m.get("semantic_prompt", "")),
            source=str(m.get("source", "")),
        )
    return MotionSequence(float(data["fps"]), frames, np.asarray(data.get("betas", []), dtype=np.float64), manifest)


def save_motion(motion: MotionSequence, path: str | Path) -> None:
    """Write the canonical motion-file form (stable across runs)."""
    doc = {
        "fps": motion.fps,
        "betas": motion.betas.tolist(),
        "frames": [
            {
                "global_orient": f.global_orient.tolist(),
                "body_pose": f.body_pose.tolist(),
                "transl": f.translation.tolist(),
            }
            for f in motion.frames
        ],
    }
    if motion.manifest is not None:
        doc["manifest"] = {
            "full_prompt": motion.manifest.full_prompt,
            "motion_prompt": motion.manifest.motion_prompt,
            "semantic_prompt": motion.manifest.semantic_prompt,
            "source": motion.manifest.source,
        }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# resampling and packing

def resample_index(k: int, source_count: int, target_count: int) -> int:
    """Source index for output frame k: round half away from zero of
    k·(K−1)/(T−1), evaluated in exact integer arithmetic."""
    if target_count == 1:
        return 0
    num = k * (source_count - 1)
    den = target_count - 1
    return (2 * num + den) // (2 * den)


def resample(motion: MotionSequence, target_frame_count: int, target_fps: float) -> MotionSequence:
    """Nearest-index resampling over frame indices with pinned endpoints.

    No interpolation: output frames reference source PoseFrame objects.
    """
    if target_frame_count < 1:
        raise ContractError(f"target_frame_count must be >= 1, got {target_frame_count}")
    k = motion.frame_count
    frames = tuple(
        motion.frames[resample_index(i, k, target_frame_count)]
        for i in range(target_frame_count)
    )
    return MotionSequence(float(target_fps), frames, motion.betas, motion.manifest)


def flatten(motion: MotionSequence) -> np.ndarray:
    """(K, D) pose-vector array: global_orient ‖ body_pose ‖ translation
    per row."""
    return np.stack(
        [
            np.concatenate([f.global_orient, f.body_pose, f.translation])
            for f in motion.frames
        ]
    )


def unflatten(vectors: np.ndarray, like: MotionSequence) -> MotionSequence:
    """Inverse of flatten; ``like`` supplies fps, betas, manifest, and the
    per-frame field widths."""
    vectors = np.asarray(vectors, dtype=np.float64)
    bp_len = like.frames[0].body_pose.shape[0]
    d = 6 + bp_len
    if vectors.ndim != 2 or vectors.shape[1] != d:
        raise ContractError(
            f"pose vectors must have shape (K, {d}), got {vectors.shape}"
        )
    frames = tuple(
        PoseFrame(row[:3], row[3 : 3 + bp_len], row[3 + bp_len :]) for row in vectors
    )
    return MotionSequence(like.fps, frames, like.betas, like.manifest)


# ---------------------------------------------------------------------------
# editing

def sdedit(
    motion: MotionSequence,
    t_edit: float,
    denoiser: DenoiserInterface,
    steps: int,
    rng: np.random.Generator,
    schedule: NoiseSchedule | None = None,
) -> MotionSequence:
    """Re-noise the flattened sequence to t_edit and regenerate.

    The denoiser is called at `steps` uniformly spaced timesteps from
    t_edit down toward 0; each update carries the current residual noise
    estimate to the next timestep (deterministic given the initial
    noise), and the final step lands on the clean prediction at t=0.
    t_edit=0 skips the whole process and returns the input unchanged.
    """
    if not (0.0 <= t_edit <= 1.0):
        raise ContractError(f"t_edit {t_edit} outside [0, 1]")
    if steps < 1:
        raise ContractError(f"steps must be >= 1, got {steps}")
    if t_edit == 0.0:
        return MotionSequence(motion.fps, motion.frames, motion.betas, motion.manifest)
    sched = schedule if schedule is not None else NoiseSchedule("cosine")
    x0 = flatten(motion)
    ts = np.linspace(t_edit, 0.0, steps + 1)
    x = forward_noise(x0, t_edit, sched, rng)
    for i in range(steps):
        pred = np.asarray(denoiser(x, float(ts[i])), dtype=np.float64)
        if pred.shape != x.shape:
            raise ContractError(
                f"denoiser returned shape {pred.shape}, expected {x.shape}"
            )
        if not np.all(np.isfinite(pred)):
            raise ContractError("denoiser returned non-finite values")
        ab_cur = sched.alpha_bar(float(ts[i]))
        ab_next = sched.alpha_bar(float(ts[i + 1]))
        eps_hat = (x - np.sqrt(ab_cur) * pred) / max(np.sqrt(1.0 - ab_cur), 1e-12)
        x = np.sqrt(ab_next) * pred + np.sqrt(max(1.0 - ab_next, 0.0)) * eps_hat
    return unflatten(x, like=motion)


class ConstantDenoiser:
    """Always predicts one fixed sequence; a trivial test oracle."""

    def __init__(self, target: np.ndarray):
        self.target = np.asarray(target, dtype=np.float64)

    def __call__(self, noisy: np.ndarray, t: float) -> np.ndarray:
        return self.target.copy()


class LinearFamilyDenoiser:
    """Least-squares selection over a finite family of candidate
    sequences.

    Given x at timestep t, returns the member m minimizing
    ‖sqrt(ᾱ(t))·m − x‖². With well-separated members this recovers
    in-family data exactly, which makes it a usable oracle denoiser and
    the built-in CLI plugin.
    """

    def __init__(self, members: Sequence[np.ndarray], schedule: NoiseSchedule | None = None):
        if len(members) == 0:
            raise ContractError("denoiser family has no members")
        self.members = [np.asarray(m, dtype=np.float64) for m in members]
        shape0 = self.members[0].shape
        for i, m in enumerate(self.members):
            if m.shape != shape0:
                raise ContractError(f"family member {i} has shape {m.shape}, expected {shape0}")
        self.schedule = schedule if schedule is not None else NoiseSchedule("cosine")

    def __call__(self, noisy: np.ndarray, t: float) -> np.ndarray:
        root_ab = np.sqrt(self.schedule.alpha_bar(float(t)))
        scores = [float(np.sum((root_ab * m - noisy) ** 2)) for m in self.members]
        return self.members[int(np.argmin(scores))].copy()


def save_family(members: Sequence[np.ndarray], path: str | Path) -> None:
    from .blobs import encode_array

    doc = {"members": [encode_array(np.asarray(m, dtype=np.float64)) for m in members]}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_family(path: str | Path) -> list[np.ndarray]:
    from .blobs import decode_array

    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    members = data.get("members")
    if not isinstance(members, list) or not members:
        raise SchemaError(f"{path}: members: expected a non-empty list")
    return [decode_array(m, f"members[{i}]") for i, m in enumerate(members)]
