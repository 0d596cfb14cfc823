"""Body model loading and linear blend skinning.

The model is SMPL-family: a rest-pose template mesh, a sparse joint
regressor, per-vertex skinning weights over a rooted joint tree, and an
optional linear shape basis. Posing applies shape displacement, regresses
joints, composes per-joint rigid transforms along the tree, and blends
them with the skinning weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blobs import decode_array, encode_array
from .errors import ContractError, SchemaError
from .rotations import axis_angle_stack_to_matrices, axis_angle_to_matrix

__all__ = [
    "PART_NAMES",
    "ROOT_SENTINEL",
    "BodyModel",
    "PoseFrame",
    "VertexFrame",
    "smpl_part_of_joint",
    "model_violations",
    "load_model",
    "save_model",
    "pose",
    "joint_transforms",
    "part_labels",
]

# Body part taxonomy used for coloring. Six parts; ids are indices into
# PART_NAMES.
PART_NAMES = ("head", "torso", "left_arm", "right_arm", "left_leg", "right_leg")

ROOT_SENTINEL = -1

# Joint-to-part assignment for the standard 24-joint skeleton
# (pelvis=0, hips=1/2, spine=3/6/9, knees=4/5, ankles=7/8, feet=10/11,
# neck=12, collars=13/14, head=15, shoulders=16/17, elbows=18/19,
# wrists=20/21, hands=22/23).
_SMPL24_PARTS = {
    "head": (12, 15),
    "torso": (0, 3, 6, 9, 13, 14),
    "left_arm": (16, 18, 20, 22),
    "right_arm": (17, 19, 21, 23),
    "left_leg": (1, 4, 7, 10),
    "right_leg": (2, 5, 8, 11),
}


def smpl_part_of_joint() -> np.ndarray:
    """Part id per joint for the 24-joint skeleton."""
    out = np.full(24, -1, dtype=np.int64)
    for part_id, name in enumerate(PART_NAMES):
        for j in _SMPL24_PARTS[name]:
            out[j] = part_id
    return out


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    # Always copy: ascontiguousarray would alias (and freeze) caller arrays.
    out = np.array(arr, dtype=dtype, order="C", copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class BodyModel:
    """Immutable posing model.

    ``parent[0]`` is the root sentinel (-1); every other entry indexes the
    joint's parent. ``part_of_joint`` maps joints to PART_NAMES ids.
    ``shape_basis`` has shape (n_vertices, 3, n_betas) when present.
    """

    template_vertices: np.ndarray
    faces: np.ndarray
    joint_regressor: np.ndarray
    skinning_weights: np.ndarray
    parent: np.ndarray
    part_of_joint: np.ndarray
    shape_basis: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "template_vertices", _frozen(self.template_vertices, np.float64))
        object.__setattr__(self, "faces", _frozen(self.faces, np.int64))
        object.__setattr__(self, "joint_regressor", _frozen(self.joint_regressor, np.float64))
        object.__setattr__(self, "skinning_weights", _frozen(self.skinning_weights, np.float64))
        object.__setattr__(self, "parent", _frozen(self.parent, np.int64))
        object.__setattr__(self, "part_of_joint", _frozen(self.part_of_joint, np.int64))
        if self.shape_basis is not None:
            object.__setattr__(self, "shape_basis", _frozen(self.shape_basis, np.float64))

    @property
    def n_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def n_joints(self) -> int:
        return self.parent.shape[0]

    @property
    def n_betas(self) -> int:
        return 0 if self.shape_basis is None else self.shape_basis.shape[2]


@dataclass(frozen=True, eq=False)
class PoseFrame:
    """One pose: root orientation, per-joint rotations, root translation.

    ``body_pose`` concatenates axis-angle vectors for joints 1..n-1, so
    its length is 3*(n_joints-1).
    """

    global_orient: np.ndarray
    body_pose: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        go = np.ascontiguousarray(self.global_orient, dtype=np.float64)
        bp = np.ascontiguousarray(self.body_pose, dtype=np.float64)
        tr = np.ascontiguousarray(self.translation, dtype=np.float64)
        if go.shape != (3,):
            raise ContractError(f"global_orient must have shape (3,), got {go.shape}")
        if bp.ndim != 1 or bp.shape[0] % 3 != 0:
            raise ContractError(f"body_pose length must be a multiple of 3, got {bp.shape}")
        if tr.shape != (3,):
            raise ContractError(f"translation must have shape (3,), got {tr.shape}")
        for name, a in (("global_orient", go), ("body_pose", bp), ("translation", tr)):
            if not np.all(np.isfinite(a)):
                raise ContractError(f"{name} contains non-finite values")
        object.__setattr__(self, "global_orient", _frozen(go, np.float64))
        object.__setattr__(self, "body_pose", _frozen(bp, np.float64))
        object.__setattr__(self, "translation", _frozen(tr, np.float64))

    @property
    def n_joints(self) -> int:
        return 1 + self.body_pose.shape[0] // 3


@dataclass(frozen=True, eq=False)
class VertexFrame:
    """Posed surface: world-space vertices (n_vertices, 3) and joints
    (n_joints, 3)."""

    vertices: np.ndarray
    joints: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        j = np.ascontiguousarray(self.joints, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ContractError(f"vertices must have shape (N, 3), got {v.shape}")
        if j.ndim != 2 or j.shape[1] != 3:
            raise ContractError(f"joints must have shape (J, 3), got {j.shape}")
        object.__setattr__(self, "vertices", _frozen(v, np.float64))
        object.__setattr__(self, "joints", _frozen(j, np.float64))


# ---------------------------------------------------------------------------
# validation

def _tree_violations(parent: np.ndarray) -> list[str]:
    out = []
    n = parent.shape[0]
    if n == 0:
        return ["parent: joint count is zero"]
    if parent[0] != ROOT_SENTINEL:
        out.append(f"parent[0]: root must be {ROOT_SENTINEL}, got {parent[0]}")
    roots = np.flatnonzero(parent == ROOT_SENTINEL)
    if roots.size > 1:
        out.append(f"parent: multiple roots at indices {roots.tolist()}")
    for j in range(1, n):
        p = int(parent[j])
        if p < 0 or p >= n:
            out.append(f"parent[{j}]: index {p} out of range")
        elif p == j:
            out.append(f"parent[{j}]: joint is its own parent")
    if out:
        return out
    # Cycle check: walking up from any joint must reach the root.
    for j in range(1, n):
        seen = set()
        k = j
        while k != 0:
            if k in seen:
                out.append(f"parent: cyclic tree at joint {j}")
                break
            seen.add(k)
            k = int(parent[k])
        if out:
            break
    return out


def model_violations(
    template: np.ndarray,
    faces: np.ndarray,
    regressor: np.ndarray,
    weights: np.ndarray,
    parent: np.ndarray,
    part_of_joint: np.ndarray,
    shape_basis: np.ndarray | None,
) -> list[str]:
    """All schema/invariant violations for raw model arrays."""
    out = []
    nv = template.shape[0] if template.ndim == 2 else -1
    nj = parent.shape[0]
    if template.ndim != 2 or template.shape[1] != 3:
        out.append(f"template: expected shape (N_v, 3), got {template.shape}")
    elif not np.all(np.isfinite(template)):
        out.append("template: contains non-finite values")
    if faces.ndim != 2 or faces.shape[1] != 3:
        out.append(f"faces: expected shape (F, 3), got {faces.shape}")
    elif nv >= 0:
        bad = np.flatnonzero((faces < 0).any(axis=1) | (faces >= nv).any(axis=1))
        if bad.size:
            out.append(f"faces[{int(bad[0])}]: vertex index out of range [0, {nv})")
    out.extend(_tree_violations(parent))
    if regressor.shape != (nj, nv):
        out.append(f"regressor: expected shape ({nj}, {nv}), got {regressor.shape}")
    else:
        sums = regressor.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-6)
        if bad.size:
            k = int(bad[0])
            out.append(f"regressor row {k} does not sum to 1 (sum {sums[k]:.6f})")
    if weights.shape != (nv, nj):
        out.append(f"weights: expected shape ({nv}, {nj}), got {weights.shape}")
    else:
        if np.any(weights < 0):
            k = int(np.flatnonzero((weights < 0).any(axis=1))[0])
            out.append(f"weights row {k} has negative entries")
        sums = weights.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-6)
        if bad.size:
            k = int(bad[0])
            out.append(f"weights row {k} not stochastic (sum {sums[k]:.6f})")
    if part_of_joint.shape != (nj,):
        out.append(f"parts: expected length {nj}, got {part_of_joint.shape}")
    else:
        bad = np.flatnonzero((part_of_joint < 0) | (part_of_joint >= len(PART_NAMES)))
        if bad.size:
            out.append(f"parts[{int(bad[0])}]: part id out of range [0, {len(PART_NAMES)})")
    if shape_basis is not None:
        if shape_basis.ndim != 3 or shape_basis.shape[:2] != (nv, 3):
            out.append(
                f"shape_basis: expected shape ({nv}, 3, N_beta), got {shape_basis.shape}"
            )
        elif not np.all(np.isfinite(shape_basis)):
            out.append("shape_basis: contains non-finite values")
    return out


# ---------------------------------------------------------------------------
# file formats

def _load_model_json(path: Path) -> BodyModel:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("n_verts", "n_joints", "template", "faces", "regressor", "weights", "parents", "parts"):
        if key not in data:
            raise SchemaError(f"{path}: missing key {key!r}")
    template = decode_array(data["template"], "template")
    faces_f = decode_array(data["faces"], "faces")
    if not np.all(faces_f == np.round(faces_f)):
        raise SchemaError("faces: non-integer index values")
    faces = faces_f.astype(np.int64)
    regressor = decode_array(data["regressor"], "regressor")
    weights = decode_array(data["weights"], "weights")
    parent = np.asarray(data["parents"], dtype=np.int64)
    parts = np.asarray(data["parts"], dtype=np.int64)
    basis = None
    if data.get("shape_basis") is not None:
        basis = decode_array(data["shape_basis"], "shape_basis")
    if template.shape[0] != int(data["n_verts"]):
        raise SchemaError(
            f"n_verts is {data['n_verts']} but template has {template.shape[0]} rows"
        )
    if parent.shape[0] != int(data["n_joints"]):
        raise SchemaError(
            f"n_joints is {data['n_joints']} but parents has {parent.shape[0]} entries"
        )
    violations = model_violations(template, faces, regressor, weights, parent, parts, basis)
    if violations:
        raise SchemaError(f"{path}: {violations[0]}", violations)
    return BodyModel(template, faces, regressor, weights, parent, parts, basis)


def _load_synthetic_spec(path: Path) -> BodyModel:
    # Local import: synthetic depends on this module for the dataclasses.
    from .synthetic import model_from_spec

    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_spec(data)


def load_model(path: str | Path, format: str = "model-json") -> BodyModel:
    """Load a body model.

    ``format`` is "model-json" (template/regressor/weights as base64
    float64 blobs) or "synthetic-spec" (a generator description expanded
    in memory; useful for fixtures).
    """
    path = Path(path)
    if format == "model-json":
        return _load_model_json(path)
    if format == "synthetic-spec":
        return _load_synthetic_spec(path)
    raise ContractError(f"unknown model format {format!r}")


def save_model(model: BodyModel, path: str | Path) -> None:
    """Write a model in the model-json format (canonical key order)."""
    data = {
        "n_verts": model.n_vertices,
        "n_joints": model.n_joints,
        "template": encode_array(model.template_vertices),
        "faces": encode_array(model.faces),
        "regressor": encode_array(model.joint_regressor),
        "weights": encode_array(model.skinning_weights),
        "parents": model.parent.tolist(),
        "parts": model.part_of_joint.tolist(),
        "shape_basis": None if model.shape_basis is None else encode_array(model.shape_basis),
    }
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# posing

def _topological_order(parent: np.ndarray) -> list[int]:
    n = parent.shape[0]
    order = [0]
    placed = np.zeros(n, dtype=bool)
    placed[0] = True
    remaining = set(range(1, n))
    while remaining:
        progressed = [j for j in remaining if placed[parent[j]]]
        if not progressed:
            raise ContractError("joint tree is not rooted (cycle or orphan)")
        for j in sorted(progressed):
            order.append(j)
            placed[j] = True
            remaining.discard(j)
    return order


def _shaped_template(model: BodyModel, betas) -> np.ndarray:
    if betas is None:
        return model.template_vertices
    b = np.ascontiguousarray(betas, dtype=np.float64)
    if b.ndim != 1:
        raise ContractError(f"betas must be one-dimensional, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ContractError("betas contain non-finite values")
    if b.shape[0] > model.n_betas:
        raise ContractError(
            f"model has {model.n_betas} shape coefficients, got {b.shape[0]}"
        )
    if b.shape[0] == 0:
        return model.template_vertices
    basis = model.shape_basis[:, :, : b.shape[0]]
    return model.template_vertices + np.einsum("vcb,b->vc", basis, b)


def joint_transforms(
    model: BodyModel, frame: PoseFrame, betas=None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-joint rigid transforms produced by a pose.

    Returns ``(rot, trans, posed_joints)``: a vertex fully bound to joint
    j maps to ``rot[j] @ v + trans[j] + frame.translation``, and
    ``posed_joints`` are the joint positions before translation.
    """
    if frame.n_joints != model.n_joints:
        raise ContractError(
            f"pose has {frame.n_joints} joints, model has {model.n_joints}"
        )
    v_shaped = _shaped_template(model, betas)
    rest_joints = model.joint_regressor @ v_shaped

    local = np.empty((model.n_joints, 3, 3))
    local[0] = axis_angle_to_matrix(frame.global_orient)
    if model.n_joints > 1:
        local[1:] = axis_angle_stack_to_matrices(frame.body_pose.reshape(-1, 3))

    world_r = np.empty_like(local)
    world_t = np.empty((model.n_joints, 3))
    for j in _topological_order(model.parent):
        if j == 0:
            world_r[0] = local[0]
            world_t[0] = rest_joints[0]
        else:
            p = int(model.parent[j])
            world_r[j] = world_r[p] @ local[j]
            world_t[j] = world_r[p] @ (rest_joints[j] - rest_joints[p]) + world_t[p]

    skin_t = world_t - np.einsum("jab,jb->ja", world_r, rest_joints)
    return world_r, skin_t, world_t


def pose(model: BodyModel, frame: PoseFrame, betas=None) -> VertexFrame:
    """Pose the model: shape, regress joints, compose the tree, skin.

    With the identity pose and zero translation the output vertices equal
    the (shaped) template.
    """
    v_shaped = _shaped_template(model, betas)
    world_r, skin_t, world_t = joint_transforms(model, frame, betas)

    w = model.skinning_weights
    blend_r = np.einsum("vj,jab->vab", w, world_r)
    blend_t = w @ skin_t
    verts = np.einsum("vab,vb->va", blend_r, v_shaped) + blend_t + frame.translation
    joints = world_t + frame.translation
    return VertexFrame(verts, joints)


def part_labels(model: BodyModel) -> np.ndarray:
    """Part id per vertex: argmax skinning weight, mapped through
    part_of_joint. Weight ties resolve to the lowest joint index."""
    dominant = np.argmax(model.skinning_weights, axis=1)
    return model.part_of_joint[dominant]
