"""Rigid transforms and their tangent space.

Pose holds a camera-to-world rotation and translation.  Twists are plain
6-vectors ordered (omega, v): rotation part in radians first, translation
part in scene units second.  se3_exp uses the Rodrigues formula plus the
V-matrix for translation; small angles switch to series expansions so
gradients of near-identity updates stay exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SMALL_ANGLE = 1e-8


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray      # (3, 3) orthonormal, det +1
    translation: np.ndarray   # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("non-finite pose")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation is not orthonormal within 1e-6")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must have det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        if np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 1e-9:
            raise ValueError("last row of a rigid transform must be 0 0 0 1")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        """self then other in self's frame: matrix(self) @ matrix(other)."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)


def hat(omega: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix with hat(w) @ x = w x x."""
    wx, wy, wz = omega
    return np.array([[0.0, -wz, wy],
                     [wz, 0.0, -wx],
                     [-wy, wx, 0.0]])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(omega)
    k = hat(omega)
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(rotation: np.ndarray) -> np.ndarray:
    r = np.asarray(rotation, dtype=np.float64)
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta > np.pi - 1e-6:
        raise ValueError("rotation angle too close to pi for a stable log")
    v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < _SMALL_ANGLE:
        return 0.5 * v * (1.0 + theta * theta / 6.0)
    return theta / (2.0 * np.sin(theta)) * v


def se3_exp(xi: np.ndarray) -> Pose:
    """Twist (omega, v) to Pose.  Translation goes through the V matrix."""
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    omega, v = xi[:3], xi[3:]
    theta = np.linalg.norm(omega)
    k = hat(omega)
    if theta < _SMALL_ANGLE:
        b = 0.5 - theta * theta / 24.0
        c = 1.0 / 6.0 - theta * theta / 120.0
    else:
        b = (1.0 - np.cos(theta)) / (theta * theta)
        c = (theta - np.sin(theta)) / (theta ** 3)
    vmat = np.eye(3) + b * k + c * (k @ k)
    return Pose(so3_exp(omega), vmat @ v)


def se3_log(pose: Pose) -> np.ndarray:
    omega = so3_log(pose.rotation)
    theta = np.linalg.norm(omega)
    k = hat(omega)
    if theta < _SMALL_ANGLE:
        vinv = np.eye(3) - 0.5 * k + (k @ k) / 12.0
    else:
        coef = (1.0 / (theta * theta)
                - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta)))
        vinv = np.eye(3) - 0.5 * k + coef * (k @ k)
    return np.concatenate([omega, vinv @ pose.translation])


def rotation_error_deg(a: Pose, b: Pose) -> float:
    """Geodesic angle between the two rotations, degrees.  Symmetric."""
    cos_theta = (np.trace(b.rotation.T @ a.rotation) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos_theta, -1.0, 1.0))))


def translation_error(a: Pose, b: Pose) -> float:
    return float(np.linalg.norm(a.translation - b.translation))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera at eye looking toward target (camera -z axis), world-up hint."""
    eye = np.asarray(eye, dtype=np.float64)
    back = eye - np.asarray(target, dtype=np.float64)
    n = np.linalg.norm(back)
    if n < 1e-12:
        raise ValueError("eye and target coincide")
    back = back / n
    right = np.cross(np.asarray(up, dtype=np.float64), back)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        raise ValueError("view direction is parallel to the up vector")
    right = right / rn
    return Pose(np.stack([right, np.cross(back, right), back], axis=1), eye)


def perturb_pose(pose: Pose, rot_deg: float, trans: float,
                 rng: np.random.Generator) -> Pose:
    """Compose a random right-perturbation with exactly known error sizes.

    The rotation angle is uniform in [0, rot_deg] about a random axis and the
    translation offset uniform in [0, trans] along a random direction, so
    rotation_error/translation_error against the input equal the draws.
    """
    axis = _random_unit(rng)
    angle = np.radians(rng.uniform(0.0, rot_deg))
    direction = _random_unit(rng)
    shift = rng.uniform(0.0, trans)
    return pose.compose(Pose(so3_exp(axis * angle), direction * shift))


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-6:
            return v / n
