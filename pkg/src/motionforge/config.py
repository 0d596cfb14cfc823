"""Pipeline configuration: defaults, config file, MOTIONFORGE_* overrides,
flag overrides — later sources win in that order."""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

from .errors import ConfigError, InputMissingError

__all__ = ["DEFAULTS", "ENV_PREFIX", "load_config", "resolve_path"]

ENV_PREFIX = "MOTIONFORGE_"


def _default_palette_mapping() -> dict:
    return {
        "head": [255, 255, 0],
        "torso": [255, 0, 0],
        "left_arm": [0, 255, 0],
        "right_arm": [0, 255, 255],
        "left_leg": [0, 0, 255],
        "right_leg": [255, 0, 255],
        "background": [0, 0, 0],
    }


DEFAULTS: dict = {
    "paths": {
        "model": None,
        "model_format": "model-json",
        "motion": None,
        "camera_track": None,
        "output_dir": None,
    },
    "render": {
        "resolution": None,  # [width, height]; must match the track when set
        "palette": _default_palette_mapping(),
        "lighting": {"direction": [0.0, 0.0, -1.0], "ambient": 0.4},
        "target_frame_count": None,
        "target_fps": None,
        "frame_formats": ["png", "ppm"],
        "near": 1e-3,
    },
    "schedule": {
        "timestep": {"mean": 0.9, "std": 0.2, "lo": 0.6, "hi": 1.0},
        "noise_schedule": {"preset": "cosine"},
    },
    "editing": {
        "t_edit": None,
        "steps": 8,
        "denoiser": {"kind": "linear-family", "family": None, "command": None},
        "camera": None,  # {"delta_rot": [x,y,z], "delta_t": [x,y,z]}
    },
    "reference": {
        "vertices": None,
        "pelvis_joint": 0,
        "stop_fraction": 0.3,
        "total_steps": 50,
    },
    "vdm": {"guidance_scale": 4.0, "pose_guidance_scale": 2.0},
    "seed": 0,
    "workers": None,  # null -> logical cores
}


def _deep_copy(obj):
    return json.loads(json.dumps(obj))


def _merge(base: dict, override: dict, trail: str) -> None:
    for key, value in override.items():
        here = f"{trail}.{key}" if trail else key
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(base[key], dict) and base[key] and isinstance(value, dict):
            _merge(base[key], value, here)
        else:
            base[key] = value


def _env_overrides(env: dict) -> dict:
    out: dict = {}
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        trail = name[len(ENV_PREFIX):].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        for part in trail[:-1]:
            node = node.setdefault(part, {})
        node[trail[-1]] = value
    # The env namespace is shared with unrelated tooling (e.g. a
    # MOTIONFORGE_PYTHON interpreter override); only sections we own are
    # config overrides.
    return {k: v for k, v in out.items() if k in DEFAULTS}


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _validate(cfg: dict) -> None:
    p = cfg["paths"]
    _require(p["model_format"] in ("model-json", "synthetic-spec"),
             f"paths.model_format: unknown format {p['model_format']!r}")

    r = cfg["render"]
    if r["resolution"] is not None:
        ok = (isinstance(r["resolution"], list) and len(r["resolution"]) == 2
              and all(isinstance(v, int) and v > 0 for v in r["resolution"]))
        _require(ok, f"render.resolution: expected [width, height], got {r['resolution']!r}")
    _require(isinstance(r["frame_formats"], list) and r["frame_formats"]
             and all(f in ("png", "ppm") for f in r["frame_formats"]),
             f"render.frame_formats: expected a subset of ['png', 'ppm'], got {r['frame_formats']!r}")
    if r["target_frame_count"] is not None:
        _require(isinstance(r["target_frame_count"], int) and r["target_frame_count"] >= 1,
                 f"render.target_frame_count: expected a positive integer, got {r['target_frame_count']!r}")
    if r["target_fps"] is not None:
        _require(_is_num(r["target_fps"]) and r["target_fps"] > 0,
                 f"render.target_fps: expected a positive number, got {r['target_fps']!r}")
    _require(_is_num(r["near"]) and r["near"] > 0, "render.near: expected a positive number")
    _require(_is_num(r["lighting"]["ambient"]) and 0.0 <= r["lighting"]["ambient"] <= 1.0,
             "render.lighting.ambient: expected a number in [0, 1]")

    ts = cfg["schedule"]["timestep"]
    for key in ("mean", "std", "lo", "hi"):
        _require(_is_num(ts[key]), f"schedule.timestep.{key}: expected a number")
    _require(0.0 <= ts["lo"] < ts["hi"] <= 1.0,
             f"schedule.timestep: range [{ts['lo']}, {ts['hi']}] must be a sub-interval of [0, 1]")
    _require(ts["std"] > 0, "schedule.timestep.std: must be positive")
    _require(cfg["schedule"]["noise_schedule"]["preset"] in ("cosine", "linear"),
             f"schedule.noise_schedule.preset: unknown preset {cfg['schedule']['noise_schedule']['preset']!r}")

    e = cfg["editing"]
    if e["t_edit"] is not None:
        _require(_is_num(e["t_edit"]) and 0.0 <= e["t_edit"] <= 1.0,
                 f"editing.t_edit: {e['t_edit']!r} outside [0, 1]")
    _require(isinstance(e["steps"], int) and e["steps"] >= 1,
             f"editing.steps: expected a positive integer, got {e['steps']!r}")
    _require(e["denoiser"]["kind"] in ("linear-family", "external"),
             f"editing.denoiser.kind: unknown kind {e['denoiser']['kind']!r}")
    if e["camera"] is not None:
        cam = e["camera"]
        ok = (isinstance(cam, dict)
              and isinstance(cam.get("delta_rot"), list) and len(cam["delta_rot"]) == 3
              and isinstance(cam.get("delta_t"), list) and len(cam["delta_t"]) == 3
              and all(_is_num(v) for v in cam["delta_rot"] + cam["delta_t"]))
        _require(ok, "editing.camera: expected {delta_rot: [x,y,z], delta_t: [x,y,z]}")
        norm = math.sqrt(sum(v * v for v in cam["delta_rot"]))
        _require(norm < math.pi, f"editing.camera.delta_rot: |delta_rot| = {norm:.6f} rad, must be < pi")

    ref = cfg["reference"]
    _require(isinstance(ref["pelvis_joint"], int) and ref["pelvis_joint"] >= 0,
             "reference.pelvis_joint: expected a non-negative integer")
    _require(_is_num(ref["stop_fraction"]) and 0.0 < ref["stop_fraction"] <= 1.0,
             f"reference.stop_fraction: expected a ratio in (0, 1], got {ref['stop_fraction']!r}")
    _require(isinstance(ref["total_steps"], int) and ref["total_steps"] >= 1,
             "reference.total_steps: expected a positive integer")

    for key in ("guidance_scale", "pose_guidance_scale"):
        _require(_is_num(cfg["vdm"][key]) and cfg["vdm"][key] > 0,
                 f"vdm.{key}: expected a positive number")

    _require(isinstance(cfg["seed"], int), f"seed: expected an integer, got {cfg['seed']!r}")
    if cfg["workers"] is not None:
        _require(isinstance(cfg["workers"], int) and cfg["workers"] >= 1,
                 f"workers: expected a positive integer, got {cfg['workers']!r}")


def load_config(
    path: str | Path | None,
    env: dict | None = None,
    seed: int | None = None,
    workers: int | None = None,
    out_dir: str | None = None,
) -> dict:
    """Merged, validated config dict.

    Precedence: built-in defaults < config file < MOTIONFORGE_* env vars
    < explicit flags. Relative paths in the file stay relative; resolve
    them against the config file's directory via resolve_path.
    """
    cfg = _deep_copy(DEFAULTS)
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        base_dir = path.parent
        if not path.exists():
            raise InputMissingError(f"config file not found: {path}")
        try:
            file_cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: config is not valid JSON ({exc})") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        _merge(cfg, file_cfg, "")
    overrides = _env_overrides(env if env is not None else dict(os.environ))
    if overrides:
        _merge(cfg, overrides, "")
    if seed is not None:
        cfg["seed"] = seed
    if workers is not None:
        cfg["workers"] = workers
    if out_dir is not None:
        cfg["paths"]["output_dir"] = out_dir
    _validate(cfg)
    cfg["_base_dir"] = str(base_dir)
    return cfg


def resolve_path(cfg: dict, value: str | None) -> Path | None:
    """Resolve a configured path against the config file's directory."""
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else Path(cfg["_base_dir"]) / p
