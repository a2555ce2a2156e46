"""Rigid transforms, axis-angle rotations, and point-set distances.

Conventions:
  - positions are metres in a right-handed, z-up world frame
  - 3-d rotations are rotation vectors (unit axis * angle, radians);
    canonical form keeps the angle in [0, pi]
  - a Transform applies rotation first, then translation
  - everything is float64; all functions are pure
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Below this angle Rodrigues terms switch to their series expansions.
_TINY_ANGLE = 1e-9


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """(3,) float64 vector."""
    return np.array([x, y, z], dtype=np.float64)


def unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return np.asarray(v, dtype=np.float64) / n


# ---------------------------------------------------------------------------
# Rotation vectors
# ---------------------------------------------------------------------------

def canonicalize_rotvec(r: np.ndarray) -> np.ndarray:
    """Wrap a rotation vector to magnitude <= pi (same rotation)."""
    r = np.asarray(r, dtype=np.float64)
    angle = float(np.linalg.norm(r))
    if angle <= np.pi:
        return r.copy()
    axis = r / angle
    theta = np.remainder(angle, 2.0 * np.pi)
    if theta > np.pi:
        return axis * (theta - 2.0 * np.pi)  # flips axis via negative angle
    return axis * theta


def rotvec_to_matrix(r: np.ndarray) -> np.ndarray:
    """Rodrigues formula; proper orthogonal output.

    Angles below 1e-9 use the 2nd-order series to avoid dividing by ~0.
    Spelled out componentwise: this sits on the kinematics hot path.
    """
    x, y, z = (float(v) for v in r)
    sq = x * x + y * y + z * z
    angle = np.sqrt(sq)
    if angle < _TINY_ANGLE:
        # I + K + K^2/2 with K = skew(r)
        return np.array([
            [1.0 - 0.5 * (y * y + z * z), -z + 0.5 * x * y, y + 0.5 * x * z],
            [z + 0.5 * x * y, 1.0 - 0.5 * (x * x + z * z), -x + 0.5 * y * z],
            [-y + 0.5 * x * z, x + 0.5 * y * z, 1.0 - 0.5 * (x * x + y * y)],
        ])
    a = np.sin(angle) / angle
    b = (1.0 - np.cos(angle)) / sq
    return np.array([
        [1.0 - b * (y * y + z * z), b * x * y - a * z, b * x * z + a * y],
        [b * x * y + a * z, 1.0 - b * (x * x + z * z), b * y * z - a * x],
        [b * x * z - a * y, b * y * z + a * x, 1.0 - b * (x * x + y * y)],
    ])


def matrix_to_rotvec(m: np.ndarray) -> np.ndarray:
    """Inverse Rodrigues; returns the canonical (angle <= pi) rotation vector."""
    cos_angle = (m[0, 0] + m[1, 1] + m[2, 2] - 1.0) * 0.5
    cos_angle = min(1.0, max(-1.0, float(cos_angle)))
    angle = float(np.arccos(cos_angle))
    axial = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    if angle < _TINY_ANGLE:
        return 0.5 * axial
    if angle > np.pi - 1e-6:
        # Near pi the axial part vanishes; recover |axis_i| from the
        # diagonal (a_i^2 = (m_ii - cos) / (1 - cos)) and the signs from
        # the off-diagonal symmetric part, anchored at the largest entry.
        a_sq = np.clip((np.diagonal(m) - cos_angle) / (1.0 - cos_angle), 0.0, None)
        axis = np.sqrt(a_sq)
        i = int(np.argmax(axis))
        if axis[i] == 0.0:
            return vec3(np.pi, 0.0, 0.0)
        sym = 0.5 * (m + m.T)
        for j in range(3):
            if j != i and sym[i, j] < 0.0:
                axis[j] = -axis[j]
        if axial[i] < 0.0:
            axis = -axis
        return canonicalize_rotvec(unit(axis) * angle)
    return axial * (angle / (2.0 * np.sin(angle)))


def rotate(r: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Rotate point p by rotation vector r."""
    return rotvec_to_matrix(r) @ np.asarray(p, dtype=np.float64)


def rotvec_compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation vector of (a then applied after b): R(a) @ R(b)."""
    return matrix_to_rotvec(rotvec_to_matrix(a) @ rotvec_to_matrix(b))


def rotvec_difference(target: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Rotation vector taking `current` to `target`: rotvec(R_t @ R_c^T).

    This is the group-consistent replacement for componentwise subtraction
    of rotation vectors, which is not well-defined across charts.
    """
    return matrix_to_rotvec(rotvec_to_matrix(target) @ rotvec_to_matrix(current).T)


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

@dataclass
class Transform:
    """Rigid transform: p -> R(rotation) @ p + translation."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = rotvec_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def copy(self) -> "Transform":
        return Transform(self.translation.copy(), self.rotation.copy())


def transform(tx: float = 0.0, ty: float = 0.0, tz: float = 0.0,
              rx: float = 0.0, ry: float = 0.0, rz: float = 0.0) -> Transform:
    """Shorthand constructor from six scalars."""
    return Transform(vec3(tx, ty, tz), vec3(rx, ry, rz))


def compose(a: Transform, b: Transform) -> Transform:
    """a o b: apply b first, then a."""
    ra = rotvec_to_matrix(a.rotation)
    rb = rotvec_to_matrix(b.rotation)
    return Transform(a.translation + ra @ b.translation,
                     matrix_to_rotvec(ra @ rb))


def invert(t: Transform) -> Transform:
    r_inv = rotvec_to_matrix(t.rotation).T
    return Transform(-(r_inv @ t.translation), canonicalize_rotvec(-t.rotation))


def apply(t: Transform, p: np.ndarray) -> np.ndarray:
    """Transform point p: rotated then translated."""
    return rotvec_to_matrix(t.rotation) @ np.asarray(p, dtype=np.float64) + t.translation


# ---------------------------------------------------------------------------
# Point-set distance
# ---------------------------------------------------------------------------

def point_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance via sqrt of the summed squared difference.

    The package's canonical distance: chamfer and every observation/reward
    distance go through this same arithmetic, so singleton chamfer equals
    point_distance bit-exactly (np.linalg.norm's BLAS path may differ in the
    last ulp and is avoided).
    """
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt((d * d).sum()))


def points_to_point_distances(pts: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Distances from each row of pts (K,3) to point p, point_distance arithmetic."""
    d = np.asarray(pts, dtype=np.float64) - np.asarray(p, dtype=np.float64)[None, :]
    return np.sqrt((d * d).sum(axis=1))


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbour distance between point sets.

    0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|). For singleton sets this
    equals point_distance(a, b) exactly.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty point set")
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    return float(0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean()))
