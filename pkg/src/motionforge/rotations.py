"""Axis-angle rotation helpers.

All rotations in pose vectors are axis-angle: the direction is the
rotation axis, the norm is the angle in radians.
"""

from __future__ import annotations

import numpy as np

__all__ = ["skew", "axis_angle_to_matrix", "axis_angle_stack_to_matrices"]

# Below this angle sin/cos lose precision; the truncated series is exact
# to double precision there.
_SERIES_THRESHOLD = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix of a 3-vector."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    return np.array(
        [
            [0.0, -z, y],
            [z, 0.0, -x],
            [-y, x, 0.0],
        ]
    )


def axis_angle_to_matrix(v: np.ndarray) -> np.ndarray:
    """Rodrigues formula, (3,) axis-angle -> (3, 3) rotation matrix.

    For angles below 1e-8 rad the closed form degrades (axis = v/theta
    divides by ~0), so the second-order series I + K + K^2/2 built from
    the unnormalized vector is used instead. At v = 0 this returns the
    identity exactly.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"axis-angle vector must have shape (3,), got {v.shape}")
    theta = float(np.linalg.norm(v))
    if theta < _SERIES_THRESHOLD:
        k = skew(v)
        return np.eye(3) + k + 0.5 * (k @ k)
    k = skew(v / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def axis_angle_stack_to_matrices(vs: np.ndarray) -> np.ndarray:
    """(J, 3) axis-angle rows -> (J, 3, 3) rotation matrices."""
    vs = np.asarray(vs, dtype=np.float64)
    out = np.empty((vs.shape[0], 3, 3))
    for j in range(vs.shape[0]):
        out[j] = axis_angle_to_matrix(vs[j])
    return out
