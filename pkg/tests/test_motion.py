import json
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionforge import (
    ConstantDenoiser,
    ContractError,
    ExternalProcessDenoiser,
    LinearFamilyDenoiser,
    MotionSequence,
    NoiseSchedule,
    PipelineManifest,
    PoseFrame,
    SchemaError,
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
from motionforge.synthetic import chain_motion


def simple_motion(n_joints=3, frame_count=10, fps=10.0):
    return chain_motion(n_joints, frame_count=frame_count, fps=fps)


# ---------------------------------------------------------------------------
# sequence contract

def test_empty_sequence_rejected():
    with pytest.raises(ContractError, match="empty sequence"):
        MotionSequence(10.0, (), np.zeros(0))


def test_pose_length_mismatch_rejected():
    a = PoseFrame(np.zeros(3), np.zeros(6), np.zeros(3))
    b = PoseFrame(np.zeros(3), np.zeros(9), np.zeros(3))
    with pytest.raises(ContractError, match=r"pose length mismatch"):
        MotionSequence(10.0, (a, b), np.zeros(0))


def test_bad_fps_and_betas_rejected():
    f = PoseFrame(np.zeros(3), np.zeros(6), np.zeros(3))
    with pytest.raises(ContractError):
        MotionSequence(0.0, (f,), np.zeros(0))
    with pytest.raises(ContractError):
        MotionSequence(10.0, (f,), np.zeros(11))


# ---------------------------------------------------------------------------
# file round trip

def test_motion_round_trip_is_lossless(tmp_path):
    motion = simple_motion(frame_count=7)
    p = tmp_path / "motion.json"
    save_motion(motion, p)
    back = load_motion(p)
    assert back.fps == motion.fps
    assert back.frame_count == motion.frame_count
    assert np.array_equal(flatten(back), flatten(motion))
    assert back.manifest == motion.manifest


def test_motion_canonical_form_is_stable(tmp_path):
    motion = simple_motion(frame_count=5)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_motion(motion, p1)
    save_motion(load_motion(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_empty_frames(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"fps": 10.0, "frames": []}))
    with pytest.raises(SchemaError, match="empty sequence"):
        load_motion(p)


def test_load_rejects_mismatched_pose_lengths(tmp_path):
    p = tmp_path / "m.json"
    fr = {"global_orient": [0, 0, 0], "transl": [0, 0, 0]}
    p.write_text(json.dumps({
        "fps": 10.0,
        "frames": [dict(fr, body_pose=[0] * 6), dict(fr, body_pose=[0] * 9)],
    }))
    with pytest.raises(SchemaError, match=r"frames\[1\].body_pose: pose length mismatch"):
        load_motion(p)


def test_load_rejects_non_multiple_of_three(tmp_path):
    p = tmp_path / "m.json"
    fr = {"global_orient": [0, 0, 0], "transl": [0, 0, 0], "body_pose": [0] * 7}
    p.write_text(json.dumps({"fps": 10.0, "frames": [fr]}))
    with pytest.raises(SchemaError, match="multiple of 3"):
        load_motion(p)


def test_load_rejects_non_finite_values(tmp_path):
    p = tmp_path / "m.json"
    fr = {"global_orient": [0, 0, 0], "transl": [0, 0, 0], "body_pose": [0] * 6}
    doc = {"fps": 10.0, "frames": [dict(fr, transl=[0.0, None, 0.0])]}
    p.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match=r"frames\[0\].transl"):
        load_motion(p)


def test_load_rejects_missing_motion_prompt_for_t2m(tmp_path):
    p = tmp_path / "m.json"
    fr = {"global_orient": [0, 0, 0], "transl": [0, 0, 0], "body_pose": [0] * 6}
    doc = {
        "fps": 10.0,
        "frames": [fr],
        "manifest": {"full_prompt": "x", "motion_prompt": "", "source": "t2m-stage"},
    }
    p.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="motion_prompt"):
        load_motion(p)
    doc["manifest"]["motion_prompt"] = "wave"
    p.write_text(json.dumps(doc))
    assert load_motion(p).manifest.motion_prompt == "wave"


def test_load_rejects_garbage_json(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{nope")
    with pytest.raises(SchemaError, match="not valid JSON"):
        load_motion(p)


# ---------------------------------------------------------------------------
# resampling

def test_resample_index_reference_points():
    # 138 source frames to 49 outputs
    assert resample_index(0, 138, 49) == 0
    assert resample_index(24, 138, 49) == 69
    assert resample_index(48, 138, 49) == 137
    # single output always takes frame 0
    assert resample_index(0, 138, 1) == 0


def test_resample_index_half_rounds_away_from_zero():
    # k*(K-1)/(T-1) = 1.5 at k=1, K=4, T=3
    assert resample_index(1, 4, 3) == 2


def test_resample_upsamples_by_repeating():
    assert [resample_index(k, 3, 5) for k in range(5)] == [0, 1, 1, 2, 2]


def test_resample_97_to_49_is_exact_decimation():
    assert [resample_index(k, 97, 49) for k in range(49)] == [2 * k for k in range(49)]


def test_resample_identity_when_counts_match():
    motion = simple_motion(frame_count=9)
    out = resample(motion, 9, motion.fps)
    assert all(a is b for a, b in zip(out.frames, motion.frames))


def test_resample_endpoints_and_metadata():
    motion = chain_motion(3, frame_count=138, fps=23.0,
                          manifest=PipelineManifest("p", "m", "s", "src"))
    out = resample(motion, 49, 8.0)
    assert out.frame_count == 49
    assert out.fps == 8.0
    assert out.frames[0] is motion.frames[0]
    assert out.frames[-1] is motion.frames[-1]
    assert out.manifest is motion.manifest
    assert np.array_equal(out.betas, motion.betas)


def test_resample_rejects_bad_count():
    with pytest.raises(ContractError):
        resample(simple_motion(), 0, 8.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(1, 400))
def test_resample_index_properties(source, target):
    idx = [resample_index(k, source, target) for k in range(target)]
    assert idx[0] == 0
    assert idx[-1] == (source - 1 if target > 1 else 0)
    assert all(0 <= i < source for i in idx)
    assert all(b >= a for a, b in zip(idx, idx[1:]))
    if target > 1:
        # nearest-index: |idx - k(K-1)/(T-1)| <= 1/2
        for k, i in enumerate(idx):
            assert abs(i - k * (source - 1) / (target - 1)) <= 0.5 + 1e-12


# ---------------------------------------------------------------------------
# flatten / unflatten

def test_flatten_width_for_24_joints():
    motion = chain_motion(24, frame_count=4)
    vecs = flatten(motion)
    assert vecs.shape == (4, 75)


def test_flatten_layout():
    motion = simple_motion(frame_count=3)
    vecs = flatten(motion)
    f1 = motion.frames[1]
    assert np.array_equal(vecs[1, :3], f1.global_orient)
    assert np.array_equal(vecs[1, 3:-3], f1.body_pose)
    assert np.array_equal(vecs[1, -3:], f1.translation)


def test_unflatten_round_trip_bitwise():
    motion = simple_motion(frame_count=6)
    back = unflatten(flatten(motion), like=motion)
    assert np.array_equal(flatten(back), flatten(motion))
    assert back.fps == motion.fps
    assert back.manifest is motion.manifest


def test_unflatten_rejects_wrong_width():
    motion = simple_motion()
    with pytest.raises(ContractError, match="shape"):
        unflatten(np.zeros((4, 13)), like=motion)
    with pytest.raises(ContractError):
        unflatten(np.zeros(12), like=motion)


# ---------------------------------------------------------------------------
# sdedit

def test_sdedit_zero_strength_returns_input_bitwise(rng):
    motion = simple_motion()
    out = sdedit(motion, 0.0, ConstantDenoiser(np.zeros_like(flatten(motion))), 4, rng)
    assert np.array_equal(flatten(out), flatten(motion))


def test_sdedit_constant_denoiser_lands_on_target(rng):
    motion = simple_motion(frame_count=5)
    target = flatten(motion) + 1.5
    out = sdedit(motion, 0.7, ConstantDenoiser(target), 6, rng)
    assert np.array_equal(flatten(out), target)


def test_sdedit_full_strength_constant_denoiser(rng):
    motion = simple_motion(frame_count=5)
    target = flatten(motion) - 2.0
    out = sdedit(motion, 1.0, ConstantDenoiser(target), 4, rng)
    assert np.array_equal(flatten(out), target)


def test_sdedit_in_family_recovery_is_exact():
    motion = simple_motion(frame_count=12)
    base = flatten(motion)
    members = [base, base + 8.0, base - 8.0, base + 16.0]
    den = LinearFamilyDenoiser(members)
    out = sdedit(motion, 0.5, den, 8, np.random.default_rng(0))
    assert float(np.abs(flatten(out) - base).max()) == 0.0


def test_sdedit_selects_nearest_family_member():
    motion = simple_motion(frame_count=12)
    base = flatten(motion)
    members = [base + 8.0, base, base - 8.0]
    # noisy start near member 2
    den = LinearFamilyDenoiser(members)
    shifted = unflatten(base - 8.0, like=motion)
    out = sdedit(shifted, 0.4, den, 5, np.random.default_rng(1))
    assert np.array_equal(flatten(out), base - 8.0)


def test_sdedit_deterministic_under_seed():
    motion = simple_motion()
    den = ConstantDenoiser(flatten(motion))
    a = sdedit(motion, 0.8, den, 10, np.random.default_rng(42))
    b = sdedit(motion, 0.8, den, 10, np.random.default_rng(42))
    assert np.array_equal(flatten(a), flatten(b))


def test_sdedit_respects_schedule_argument():
    motion = simple_motion()
    base = flatten(motion)
    den = LinearFamilyDenoiser([base], NoiseSchedule("linear"))
    out = sdedit(motion, 0.5, den, 4, np.random.default_rng(2), NoiseSchedule("linear"))
    assert np.array_equal(flatten(out), base)


def test_sdedit_contract_violations(rng):
    motion = simple_motion()
    ok = ConstantDenoiser(flatten(motion))
    with pytest.raises(ContractError):
        sdedit(motion, 1.5, ok, 4, rng)
    with pytest.raises(ContractError):
        sdedit(motion, 0.5, ok, 0, rng)

    def wrong_shape(noisy, t):
        return noisy[:, :4]

    with pytest.raises(ContractError, match="shape"):
        sdedit(motion, 0.5, wrong_shape, 4, rng)

    def with_nan(noisy, t):
        out = noisy.copy()
        out[0, 0] = np.nan
        return out

    with pytest.raises(ContractError, match="non-finite"):
        sdedit(motion, 0.5, with_nan, 4, rng)


# ---------------------------------------------------------------------------
# denoiser family files

def test_family_round_trip(tmp_path):
    motion = simple_motion(frame_count=4)
    base = flatten(motion)
    members = [base, base + 1.0]
    p = tmp_path / "family.json"
    save_family(members, p)
    back = load_family(p)
    assert len(back) == 2
    assert np.array_equal(back[0], base)
    assert np.array_equal(back[1], base + 1.0)


def test_family_rejects_empty_and_garbage(tmp_path):
    p = tmp_path / "family.json"
    p.write_text(json.dumps({"members": []}))
    with pytest.raises(SchemaError):
        load_family(p)
    p.write_text("[1,")
    with pytest.raises(SchemaError):
        load_family(p)
    with pytest.raises(ContractError):
        LinearFamilyDenoiser([])


def test_family_rejects_mixed_shapes():
    with pytest.raises(ContractError, match="shape"):
        LinearFamilyDenoiser([np.zeros((3, 5)), np.zeros((4, 5))])


# ---------------------------------------------------------------------------
# external plugin

ECHO_PLUGIN = """
import json, sys
print(json.dumps({"protocol": "motionforge-denoiser", "version": 1}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"sequence": req["sequence"]}), flush=True)
"""

SHIFT_PLUGIN = """
import json, sys
print(json.dumps({"protocol": "motionforge-denoiser", "version": 1}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    seq = [[v + 1.0 for v in row] for row in req["sequence"]]
    print(json.dumps({"sequence": seq}), flush=True)
"""

ERROR_PLUGIN = """
import json, sys
print(json.dumps({"protocol": "motionforge-denoiser", "version": 1}), flush=True)
for line in sys.stdin:
    print(json.dumps({"error": "cannot denoise that"}), flush=True)
"""


def plugin_command(body):
    return [sys.executable, "-c", body]


def test_external_plugin_echos_payload():
    with ExternalProcessDenoiser(plugin_command(ECHO_PLUGIN)) as den:
        x = np.arange(12.0).reshape(3, 4)
        out = den(x, 0.5)
        assert np.array_equal(out, x)
        out2 = den(x + 1.0, 0.25)
        assert np.array_equal(out2, x + 1.0)


def test_external_plugin_transform_applies():
    with ExternalProcessDenoiser(plugin_command(SHIFT_PLUGIN)) as den:
        x = np.zeros((2, 3))
        assert np.array_equal(den(x, 0.9), np.ones((2, 3)))


def test_external_plugin_error_surfaces():
    with ExternalProcessDenoiser(plugin_command(ERROR_PLUGIN)) as den:
        with pytest.raises(ContractError, match="cannot denoise that"):
            den(np.zeros((1, 3)), 0.5)


def test_external_plugin_bad_handshake_rejected():
    bad = 'print(\'{"protocol": "other", "version": 1}\', flush=True)'
    with pytest.raises(ContractError, match="protocol"):
        ExternalProcessDenoiser(plugin_command(bad))
    not_json = "print('hello', flush=True)"
    with pytest.raises(ContractError, match="handshake"):
        ExternalProcessDenoiser(plugin_command(not_json))
    wrong_version = 'print(\'{"protocol": "motionforge-denoiser", "version": 2}\', flush=True)'
    with pytest.raises(ContractError, match="version"):
        ExternalProcessDenoiser(plugin_command(wrong_version))


def test_external_plugin_drives_sdedit():
    motion = simple_motion(frame_count=4)
    target = flatten(motion)
    body = f"""
import json, sys
print(json.dumps({{"protocol": "motionforge-denoiser", "version": 1}}), flush=True)
target = {target.tolist()!r}
for line in sys.stdin:
    json.loads(line)
    print(json.dumps({{"sequence": target}}), flush=True)
"""
    with ExternalProcessDenoiser(plugin_command(body)) as den:
        out = sdedit(motion, 0.6, den, 4, np.random.default_rng(0))
    assert np.array_equal(flatten(out), target)
