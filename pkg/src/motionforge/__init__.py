"""motionforge: geometric core for motion-conditioned video generation.

Poses SMPL-family body models from text-to-motion output, aligns them to
reference camera tracks, renders part-colored conditioning videos, and
provides the diffusion-side scheduling utilities (truncated-normal
timestep sampling, conditioning gating, SDEdit-style motion editing,
camera perturbation).
"""

__version__ = "0.1.0"

from .body import (
    PART_NAMES,
    BodyModel,
    PoseFrame,
    VertexFrame,
    joint_transforms,
    load_model,
    part_labels,
    pose,
    save_model,
    smpl_part_of_joint,
)
from .camera import (
    DEFAULT_CROP_SIDE,
    DEFAULT_NEAR,
    CameraTrack,
    Extrinsics,
    Intrinsics,
    Points2D,
    TrackFrame,
    align_frame,
    align_to_reference,
    camera_space,
    load_reference_frames,
    load_track,
    perturb,
    project,
    reference_stop_step,
    reparameterize_intrinsics,
    save_reference_frames,
    save_track,
)
from .errors import (
    ConfigError,
    ContractError,
    InputMissingError,
    MotionForgeError,
    SchemaError,
)
from .external import ExternalProcessDenoiser
from .motion import (
    ConstantDenoiser,
    DenoiserInterface,
    LinearFamilyDenoiser,
    MotionSequence,
    PipelineManifest,
    flatten,
    load_family,
    load_motion,
    resample,
    resample_index,
    save_family,
    save_motion,
    sdedit,
    unflatten,
)
from .render import (
    ConditioningVideo,
    LightingConfig,
    Palette,
    default_lighting,
    default_palette,
    rasterize_frame,
    rasterize_triangles,
    render_video,
    save_frames,
    save_points_jsonl,
    write_png,
    write_ppm,
)
from .schedule import (
    NoiseSchedule,
    TimestepSamplerConfig,
    conditioning_active,
    forward_noise,
    sample_timestep,
    sample_timesteps,
)

__all__ = [
    "__version__",
    "PART_NAMES",
    "BodyModel",
    "PoseFrame",
    "VertexFrame",
    "joint_transforms",
    "load_model",
    "part_labels",
    "pose",
    "save_model",
    "smpl_part_of_joint",
    "DEFAULT_CROP_SIDE",
    "DEFAULT_NEAR",
    "CameraTrack",
    "Extrinsics",
    "Intrinsics",
    "Points2D",
    "TrackFrame",
    "align_frame",
    "align_to_reference",
    "camera_space",
    "load_reference_frames",
    "load_track",
    "perturb",
    "project",
    "reference_stop_step",
    "reparameterize_intrinsics",
    "save_reference_frames",
    "save_track",
    "ConfigError",
    "ContractError",
    "InputMissingError",
    "MotionForgeError",
    "SchemaError",
    "ExternalProcessDenoiser",
    "ConstantDenoiser",
    "DenoiserInterface",
    "LinearFamilyDenoiser",
    "MotionSequence",
    "PipelineManifest",
    "flatten",
    "load_family",
    "load_motion",
    "resample",
    "resample_index",
    "save_family",
    "save_motion",
    "sdedit",
    "unflatten",
    "ConditioningVideo",
    "LightingConfig",
    "Palette",
    "default_lighting",
    "default_palette",
    "rasterize_frame",
    "rasterize_triangles",
    "render_video",
    "save_frames",
    "save_points_jsonl",
    "write_png",
    "write_ppm",
    "NoiseSchedule",
    "TimestepSamplerConfig",
    "conditioning_active",
    "forward_noise",
    "sample_timestep",
    "sample_timesteps",
]
