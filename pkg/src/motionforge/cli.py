"""Command-line pipeline: render conditioning videos, edit motion or
camera, validate input files.

Exit codes: 0 ok, 2 config error, 3 input missing, 4 contract violation,
5 internal error. Failures print one machine-readable JSON record on
stderr. A run directory is complete iff it contains manifest.json; the
manifest is written atomically after every other output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .body import load_model, model_violations
from .camera import (
    CameraTrack,
    TrackFrame,
    load_reference_frames,
    load_track,
    perturb,
    reference_stop_step,
    track_violations,
)
from .config import load_config, resolve_path
from .errors import ConfigError, ContractError, InputMissingError, MotionForgeError, SchemaError
from .external import ExternalProcessDenoiser
from .motion import (
    LinearFamilyDenoiser,
    flatten,
    load_family,
    load_motion,
    motion_violations,
    resample,
    save_motion,
    sdedit,
)
from .render import LightingConfig, Palette, render_video, save_frames, save_points_jsonl
from .schedule import NoiseSchedule

__all__ = ["main"]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _require_inputs(pairs: list[tuple[str, Path | None]]) -> None:
    for name, p in pairs:
        if p is not None and not p.exists():
            raise InputMissingError(f"{name} file not found: {p}")


def _palette(cfg: dict) -> Palette:
    return Palette.from_names(cfg["render"]["palette"])


def _lighting(cfg: dict) -> LightingConfig:
    block = cfg["render"]["lighting"]
    d = np.asarray(block["direction"], dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise ConfigError("render.lighting.direction: zero vector")
    return LightingConfig(d / norm, float(block["ambient"]))


def _schedule(cfg: dict) -> NoiseSchedule:
    return NoiseSchedule(cfg["schedule"]["noise_schedule"]["preset"])


def _workers(cfg: dict) -> int:
    return cfg["workers"] if cfg["workers"] is not None else (os.cpu_count() or 1)


def _config_echo(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def _write_manifest(out_dir: Path, doc: dict) -> Path:
    target = out_dir / "manifest.json"
    payload = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def _render_and_export(cfg: dict, command: str, motion, extra_inputs: dict, extra_outputs: list[Path], track: CameraTrack | None = None) -> int:
    """Shared tail of render/edit commands: resample, render, write
    frames + points + manifest."""
    model_path = resolve_path(cfg, cfg["paths"]["model"])
    track_path = resolve_path(cfg, cfg["paths"]["camera_track"])
    ref_path = resolve_path(cfg, cfg["reference"]["vertices"])
    out_dir = resolve_path(cfg, cfg["paths"]["output_dir"])
    if out_dir is None:
        raise ConfigError("paths.output_dir is required")

    model = load_model(model_path, cfg["paths"]["model_format"])
    if track is None:
        track = load_track(track_path)
    reference = load_reference_frames(ref_path) if ref_path is not None else None

    rc = cfg["render"]
    if rc["target_frame_count"] is not None or rc["target_fps"] is not None:
        count = rc["target_frame_count"] if rc["target_frame_count"] is not None else motion.frame_count
        fps = rc["target_fps"] if rc["target_fps"] is not None else motion.fps
        motion = resample(motion, count, fps)
    if rc["resolution"] is not None:
        w, h = rc["resolution"]
        tw, th = track.frames[0].intrinsics.width, track.frames[0].intrinsics.height
        if (w, h) != (tw, th):
            raise ConfigError(f"render.resolution {w}x{h} does not match track frames {tw}x{th}")

    video = render_video(
        motion,
        model,
        track,
        palette=_palette(cfg),
        light=_lighting(cfg),
        reference=reference,
        pelvis_joint=cfg["reference"]["pelvis_joint"],
        near=rc["near"],
        workers=_workers(cfg),
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    written = save_frames(video, out_dir, rc["frame_formats"])
    points_path = out_dir / "points.jsonl"
    save_points_jsonl(video, points_path)
    written.append(points_path)
    written.extend(extra_outputs)

    inputs = {
        "model": model_path,
        "motion": resolve_path(cfg, cfg["paths"]["motion"]),
        "camera_track": track_path,
        **extra_inputs,
    }
    if ref_path is not None:
        inputs["reference"] = ref_path
    manifest = {
        "command": command,
        "tool": {"name": "motionforge", "version": __version__},
        "seed": cfg["seed"],
        "config": _config_echo(cfg),
        "prompts": None
        if motion.manifest is None
        else {
            "full_prompt": motion.manifest.full_prompt,
            "motion_prompt": motion.manifest.motion_prompt,
            "semantic_prompt": motion.manifest.semantic_prompt,
            "source": motion.manifest.source,
        },
        "inputs": {
            name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items() if p is not None
        },
        "outputs": {p.name: _sha256(p) for p in written},
        "render": {
            "width": video.width,
            "height": video.height,
            "fps": video.fps,
            "frame_count": video.frame_count,
        },
        "reference_stop_step": {
            "total_steps": cfg["reference"]["total_steps"],
            "stop_fraction": cfg["reference"]["stop_fraction"],
            "step": reference_stop_step(cfg["reference"]["total_steps"], cfg["reference"]["stop_fraction"]),
        },
        "vdm_metadata": dict(cfg["vdm"]),
    }
    _write_manifest(out_dir, manifest)
    print(json.dumps({
        "status": "ok",
        "command": command,
        "frames": video.frame_count,
        "out_dir": str(out_dir),
        "manifest": "manifest.json",
    }))
    return 0


def _load_cmd_inputs(cfg: dict):
    for key in ("model", "motion", "camera_track", "output_dir"):
        if cfg["paths"][key] is None:
            raise ConfigError(f"paths.{key} is required")
    pairs = [
        ("model", resolve_path(cfg, cfg["paths"]["model"])),
        ("motion", resolve_path(cfg, cfg["paths"]["motion"])),
        ("camera_track", resolve_path(cfg, cfg["paths"]["camera_track"])),
        ("reference", resolve_path(cfg, cfg["reference"]["vertices"])),
    ]
    _require_inputs(pairs)
    return load_motion(resolve_path(cfg, cfg["paths"]["motion"]))


def cmd_render(cfg: dict) -> int:
    motion = _load_cmd_inputs(cfg)
    return _render_and_export(cfg, "render", motion, {}, [])


def _build_denoiser(cfg: dict, motion):
    block = cfg["editing"]["denoiser"]
    if block["kind"] == "linear-family":
        family_path = resolve_path(cfg, block["family"])
        if family_path is None:
            raise ConfigError("editing.denoiser.family is required for the linear-family denoiser")
        _require_inputs([("denoiser family", family_path)])
        members = load_family(family_path)
        want = flatten(motion).shape
        for i, m in enumerate(members):
            if m.shape != want:
                raise SchemaError(f"family member {i} has shape {m.shape}, motion flattens to {want}")
        return LinearFamilyDenoiser(members, _schedule(cfg)), {"denoiser_family": family_path}
    command = block["command"]
    if not command:
        raise ConfigError("editing.denoiser.command is required for the external denoiser")
    return ExternalProcessDenoiser(list(command)), {}


def cmd_edit_motion(cfg: dict) -> int:
    if cfg["editing"]["t_edit"] is None:
        raise ConfigError("editing.t_edit is required for edit-motion")
    motion = _load_cmd_inputs(cfg)
    denoiser, extra_inputs = _build_denoiser(cfg, motion)
    try:
        rng = np.random.default_rng(cfg["seed"])
        edited = sdedit(
            motion,
            float(cfg["editing"]["t_edit"]),
            denoiser,
            int(cfg["editing"]["steps"]),
            rng,
            schedule=_schedule(cfg),
        )
    finally:
        if hasattr(denoiser, "close"):
            denoiser.close()
    out_dir = resolve_path(cfg, cfg["paths"]["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    edited_path = out_dir / "edited_motion.json"
    save_motion(edited, edited_path)
    return _render_and_export(cfg, "edit-motion", edited, extra_inputs, [edited_path])


def cmd_edit_camera(cfg: dict) -> int:
    cam = cfg["editing"]["camera"]
    if cam is None:
        raise ConfigError("editing.camera deltas are required for edit-camera")
    motion = _load_cmd_inputs(cfg)
    track = load_track(resolve_path(cfg, cfg["paths"]["camera_track"]))
    perturbed = CameraTrack(
        track.crop_side,
        tuple(
            TrackFrame(fr.intrinsics, perturb(fr.extrinsics, cam["delta_rot"], cam["delta_t"]), fr.bbox)
            for fr in track.frames
        ),
    )
    return _render_and_export(cfg, "edit-camera", motion, {}, [], track=perturbed)


def cmd_validate(args) -> int:
    report: dict[str, list[str]] = {}
    checks = [
        ("model", args.model),
        ("motion", args.motion),
        ("track", args.track),
        ("reference", args.reference),
    ]
    for name, value in checks:
        if value is None:
            continue
        p = Path(value)
        if not p.exists():
            raise InputMissingError(f"{name} file not found: {p}")
        report[name] = _validate_file(name, p, args.model_format)
    print(json.dumps({"violations": report}, sort_keys=True, indent=2))
    return 0 if all(not v for v in report.values()) else 4


def _validate_file(kind: str, path: Path, model_format: str) -> list[str]:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        return [f"not valid JSON ({exc})"]
    if kind == "model":
        if model_format == "synthetic-spec":
            try:
                load_model(path, "synthetic-spec")
                return []
            except SchemaError as exc:
                return exc.violations
        from .blobs import decode_array

        try:
            template = decode_array(data["template"], "template")
            faces = decode_array(data["faces"], "faces").astype(np.int64)
            regressor = decode_array(data["regressor"], "regressor")
            weights = decode_array(data["weights"], "weights")
            parent = np.asarray(data["parents"], dtype=np.int64)
            parts = np.asarray(data["parts"], dtype=np.int64)
            basis = None if data.get("shape_basis") is None else decode_array(data["shape_basis"], "shape_basis")
        except (SchemaError, KeyError, TypeError, ValueError) as exc:
            return [f"malformed model document: {exc}"]
        return model_violations(template, faces, regressor, weights, parent, parts, basis)
    if kind == "motion":
        return motion_violations(data)
    if kind == "track":
        return track_violations(data)
    # reference file: loading performs the full check
    try:
        load_reference_frames(path)
        return []
    except SchemaError as exc:
        return exc.violations


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="motionforge",
        description="Render part-colored body-motion conditioning videos and run motion/camera edits.",
    )
    ap.add_argument("--version", action="version", version=f"motionforge {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_run(name: str, help_text: str):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="pipeline config file (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="seed override")
        sp.add_argument("--workers", type=int, default=None, help="frame-render worker count")
        sp.add_argument("--out", default=None, help="output directory override")
        return sp

    add_run("render", "pose, align, project, rasterize a motion file")
    add_run("edit-motion", "re-noise and regenerate the motion, then render it")
    add_run("edit-camera", "render under perturbed camera extrinsics")

    vp = sub.add_parser("validate", help="schema/invariant report for input files")
    vp.add_argument("--model", default=None)
    vp.add_argument("--model-format", default="model-json", choices=["model-json", "synthetic-spec"])
    vp.add_argument("--motion", default=None)
    vp.add_argument("--track", default=None)
    vp.add_argument("--reference", default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        cfg = load_config(args.config, seed=args.seed, workers=args.workers, out_dir=args.out)
        if args.command == "render":
            return cmd_render(cfg)
        if args.command == "edit-motion":
            return cmd_edit_motion(cfg)
        return cmd_edit_camera(cfg)
    except MotionForgeError as exc:
        record = {"error": {"code": exc.code, "message": str(exc)}}
        if isinstance(exc, SchemaError) and len(exc.violations) > 1:
            record["error"]["violations"] = exc.violations
        print(json.dumps(record), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - defensive
        print(json.dumps({"error": {"code": "internal-error", "message": f"{type(exc).__name__}: {exc}"}}), file=sys.stderr)
        return 5


if __name__ == "__main__":
    raise SystemExit(main())
