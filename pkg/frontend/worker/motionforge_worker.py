#!/usr/bin/env python3
"""Stdio worker behind the Node bindings.

Speaks the framed protocol documented in src/protocol.ts: u32le payload
length, then u32le header length, UTF-8 JSON header, zero padding to an
8-byte boundary, then 8-aligned binary blobs described by the header's
"arrays" list (offsets relative to the blob area). One response frame per
request frame, in order. Failures never cross as exceptions; they become
{ok: false, code, message} with the pipeline's exit-code taxonomy
(2 config, 3 missing input, 4 contract, 5 internal).

Only the public motionforge API is used here.
"""

import json
import os
import struct
import sys

import numpy as np

import motionforge as mf

ABI_VERSION = 1

_DTYPES = {
    "float64": np.dtype("<f8"),
    "float32": np.dtype("<f4"),
    "uint8": np.dtype("u1"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}


class DescriptorError(Exception):
    """Request blob descriptor does not match its data. Crosses as code 4."""


def _align8(n: int) -> int:
    return (n + 7) & ~7


def _read_exact(stream, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        piece = stream.read(n - got)
        if not piece:
            return None
        chunks.append(piece)
        got += len(piece)
    return b"".join(chunks)


def read_frame(stream) -> tuple[dict, dict[str, np.ndarray]] | None:
    head = _read_exact(stream, 4)
    if head is None:
        return None
    (payload_len,) = struct.unpack("<I", head)
    payload = _read_exact(stream, payload_len)
    if payload is None:
        raise EOFError("stream closed mid-frame")
    (header_len,) = struct.unpack("<I", payload[:4])
    header = json.loads(payload[4 : 4 + header_len].decode("utf-8"))
    blob_start = _align8(4 + header_len)
    arrays: dict[str, np.ndarray] = {}
    for spec in header.get("arrays", []):
        arrays[spec["name"]] = _decode_array(payload, blob_start, spec)
    return header, arrays


def _decode_array(payload: bytes, blob_start: int, spec: dict) -> np.ndarray:
    name = spec.get("name", "?")
    dtype = _DTYPES.get(spec.get("dtype"))
    if dtype is None:
        raise DescriptorError(f"array {name}: dtype must be one of {sorted(_DTYPES)}")
    shape = tuple(spec.get("shape", ()))
    if any((not isinstance(d, int)) or d < 0 for d in shape):
        raise DescriptorError(f"array {name}: bad shape {shape}")
    count = 1
    for d in shape:
        count *= d
    nbytes = spec.get("nbytes")
    if nbytes != count * dtype.itemsize:
        raise DescriptorError(
            f"array {name}: nbytes {nbytes} does not match shape {shape} of {spec['dtype']}"
        )
    offset = spec.get("offset")
    if not isinstance(offset, int) or offset < 0 or offset % 8 != 0:
        raise DescriptorError(f"array {name}: blob offset {offset} not 8-aligned")
    start = blob_start + offset
    if start + nbytes > len(payload):
        raise DescriptorError(f"array {name}: blob overruns the payload")
    strides = spec.get("strides")
    if strides is not None:
        expect = []
        acc = 1
        for d in reversed(shape):
            expect.append(acc)
            acc *= d
        expect.reverse()
        if list(strides) != expect:
            raise DescriptorError(
                f"array {name}: strides {list(strides)} are not C-contiguous for shape {shape}"
            )
    arr = np.frombuffer(payload, dtype=dtype, count=count, offset=start)
    return arr.reshape(shape)


def write_frame(stream, header: dict, arrays: list[tuple[str, np.ndarray]] = ()) -> None:
    specs = []
    blobs = []
    cursor = 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _DTYPE_NAMES:
            raise TypeError(f"cannot send dtype {arr.dtype}")
        specs.append(
            {
                "name": name,
                "dtype": _DTYPE_NAMES[arr.dtype],
                "shape": list(arr.shape),
                "offset": cursor,
                "nbytes": arr.nbytes,
            }
        )
        blobs.append(arr)
        cursor = _align8(cursor + arr.nbytes)
    doc = dict(header)
    doc["arrays"] = specs
    header_bytes = json.dumps(doc, separators=(",", ":")).encode("utf-8")
    blob_start = _align8(4 + len(header_bytes))
    payload_len = (blob_start + cursor) if blobs else (4 + len(header_bytes))
    out = bytearray(4 + payload_len)
    struct.pack_into("<I", out, 0, payload_len)
    struct.pack_into("<I", out, 4, len(header_bytes))
    out[8 : 8 + len(header_bytes)] = header_bytes
    pos = 4 + blob_start
    for spec, arr in zip(specs, blobs):
        pos = 4 + blob_start + spec["offset"]
        out[pos : pos + arr.nbytes] = arr.tobytes()
    stream.write(bytes(out))
    stream.flush()


# ---------------------------------------------------------------------------
# model cache

_MODEL_CACHE: dict[tuple, object] = {}


def _load_model(path: str):
    real = os.path.realpath(path)
    st = os.stat(real)
    key = (real, st.st_mtime_ns, st.st_size)
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = mf.load_model(real)
        _MODEL_CACHE.clear()  # one model at a time keeps the footprint flat
        _MODEL_CACHE[key] = model
    return model


# ---------------------------------------------------------------------------
# ops

def _require(arrays: dict, name: str, dtype: str) -> np.ndarray:
    arr = arrays.get(name)
    if arr is None:
        raise DescriptorError(f"missing array {name!r}")
    if _DTYPE_NAMES[arr.dtype] != dtype:
        raise DescriptorError(f"array {name}: expected {dtype}, got {_DTYPE_NAMES[arr.dtype]}")
    return arr


def _sampler_config(args: dict) -> "mf.TimestepSamplerConfig":
    return mf.TimestepSamplerConfig(
        mean=float(args.get("mean", 0.9)),
        std=float(args.get("std", 0.2)),
        lo=float(args.get("lo", 0.6)),
        hi=float(args.get("hi", 1.0)),
    )


def op_abi_version(args, arrays):
    return {"version": ABI_VERSION}, []


def op_process_stats(args, arrays):
    stats = {}
    with open("/proc/self/status", "r", encoding="ascii") as fh:
        for line in fh:
            if line.startswith(("VmRSS:", "VmHWM:")):
                key, value = line.split(":", 1)
                stats[key] = int(value.strip().split()[0])
    return {"vm_rss_kb": stats.get("VmRSS", -1), "vm_hwm_kb": stats.get("VmHWM", -1)}, []


def op_echo(args, arrays):
    return {}, list(arrays.items())


def op_sample_timesteps(args, arrays):
    n = int(args["n"])
    if n < 0:
        raise DescriptorError(f"n must be non-negative, got {n}")
    rng = np.random.default_rng(int(args["seed"]))
    t = mf.sample_timesteps(_sampler_config(args), n, rng)
    return {}, [("t", t)]


def op_conditioning_active(args, arrays):
    active = mf.conditioning_active(float(args["t"]), _sampler_config(args))
    return {"active": bool(active)}, []


def op_forward_noise(args, arrays):
    x0 = _require(arrays, "x", "float64")
    sched = mf.NoiseSchedule(preset=str(args.get("preset", "cosine")))
    rng = np.random.default_rng(int(args["seed"]))
    xt = mf.forward_noise(x0, float(args["t"]), sched, rng)
    return {}, [("x_t", xt)]


def op_pose(args, arrays):
    model = _load_model(str(args["model_path"]))
    frame = mf.PoseFrame(
        _require(arrays, "global_orient", "float64"),
        _require(arrays, "body_pose", "float64"),
        _require(arrays, "translation", "float64"),
    )
    betas = args.get("betas")
    posed = mf.pose(model, frame, None if betas is None else np.asarray(betas, dtype=np.float64))
    return {}, [("vertices", posed.vertices), ("joints", posed.joints)]


# track rows: R row-major (9), T (3), fx fy cx cy (4), width height (2), bbox (4)
TRACK_ROW_WIDTH = 22


def _build_motion(args, arrays) -> "mf.MotionSequence":
    vectors = _require(arrays, "motion", "float64")
    if vectors.ndim != 2:
        raise DescriptorError(f"array motion: expected 2 dims, got {vectors.ndim}")
    frames = []
    for row in vectors:
        frames.append(mf.PoseFrame(row[:3], row[3:-3], row[-3:]))
    betas = np.asarray(args.get("betas") or [], dtype=np.float64)
    return mf.MotionSequence(float(args["fps"]), tuple(frames), betas)


def _build_track(args, arrays) -> "mf.CameraTrack":
    rows = _require(arrays, "track", "float64")
    if rows.ndim != 2 or rows.shape[1] != TRACK_ROW_WIDTH:
        raise DescriptorError(
            f"array track: expected shape (K, {TRACK_ROW_WIDTH}), got {tuple(rows.shape)}"
        )
    frames = []
    for row in rows:
        intr = mf.Intrinsics(
            fx=float(row[12]),
            fy=float(row[13]),
            cx=float(row[14]),
            cy=float(row[15]),
            width=int(round(row[16])),
            height=int(round(row[17])),
        )
        extr = mf.Extrinsics(row[:9].reshape(3, 3), row[9:12])
        frames.append(mf.TrackFrame(intrinsics=intr, extrinsics=extr, bbox=row[18:22]))
    return mf.CameraTrack(crop_side=float(args["crop_side"]), frames=tuple(frames))


def _build_reference(arrays) -> list | None:
    if "ref_vertices" not in arrays and "ref_joints" not in arrays:
        return None
    verts = _require(arrays, "ref_vertices", "float64")
    joints = _require(arrays, "ref_joints", "float64")
    if verts.ndim != 3 or verts.shape[2] != 3:
        raise DescriptorError(f"array ref_vertices: expected (K, V, 3), got {tuple(verts.shape)}")
    if joints.ndim != 3 or joints.shape[2] != 3 or joints.shape[0] != verts.shape[0]:
        raise DescriptorError(f"array ref_joints: expected (K, J, 3), got {tuple(joints.shape)}")
    return [mf.VertexFrame(v, j) for v, j in zip(verts, joints)]


def op_render_video(args, arrays):
    model = _load_model(str(args["model_path"]))
    motion = _build_motion(args, arrays)
    track = _build_track(args, arrays)
    target = args.get("target_frame_count")
    if target is not None:
        motion = mf.resample(motion, int(target), float(args.get("target_fps", motion.fps)))
    video = mf.render_video(
        motion,
        model,
        track,
        reference=_build_reference(arrays),
        pelvis_joint=int(args.get("pelvis_joint", 0)),
        near=float(args.get("near", mf.DEFAULT_NEAR)),
        workers=int(args.get("workers", 1)),
    )
    return {"fps": video.fps}, [("frames", video.frames)]


OPS = {
    "abi_version": op_abi_version,
    "process_stats": op_process_stats,
    "echo": op_echo,
    "sample_timesteps": op_sample_timesteps,
    "conditioning_active": op_conditioning_active,
    "forward_noise": op_forward_noise,
    "pose": op_pose,
    "render_video": op_render_video,
}


def _error_code(exc: Exception) -> int:
    if isinstance(exc, DescriptorError):
        return 4
    if isinstance(exc, FileNotFoundError):
        return 3
    if isinstance(exc, mf.MotionForgeError):
        return exc.exit_code
    if isinstance(exc, (KeyError, TypeError, ValueError)):
        return 4  # malformed request
    return 5


def serve() -> int:
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    while True:
        try:
            frame = read_frame(stdin)
        except EOFError:
            return 1
        except DescriptorError as exc:
            write_frame(stdout, {"ok": False, "code": 4, "message": str(exc)})
            continue
        if frame is None:
            return 0
        header, arrays = frame
        op = header.get("op")
        handler = OPS.get(op)
        try:
            if handler is None:
                raise DescriptorError(f"unknown op {op!r}")
            result, out_arrays = handler(header.get("args") or {}, arrays)
            write_frame(stdout, {"ok": True, "result": result}, out_arrays)
        except Exception as exc:  # never let an op failure kill the stream
            write_frame(
                stdout,
                {"ok": False, "code": _error_code(exc), "message": f"{type(exc).__name__}: {exc}"},
            )


if __name__ == "__main__":
    sys.exit(serve())
