"""Spatial (6D) vector algebra: rotations, poses, motion/wrench transforms.

Conventions used across the whole package:
  * 6D motion vectors are ordered (linear velocity, angular velocity).
  * 6D wrenches are ordered (force, moment).
  * A quantity "at frame A" means: taken at the origin of A, with all
    components expressed in A's orientation.
  * The wrench transform from B to A has the block form
        [ R          0 ]
        [ S(p) R     R ]
    with R the rotation of B relative to A and p the position of B's origin
    in A coordinates, so the lever-arm offset p is expressed in the target
    frame.  Its transpose maps motion vectors from A to B (power duality).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHONORMALITY_TOL = 1e-9
SKEW_TOL = 1e-8


class NotSkewSymmetric(ValueError):
    """Raised when vee() receives a matrix that is not skew-symmetric."""


def skew(v) -> np.ndarray:
    """3x3 skew-symmetric matrix S(v) such that S(v) @ u == cross(v, u)."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(a) -> np.ndarray:
    """Inverse of skew(): extract v from S(v).

    Rejects input whose symmetric part exceeds the tolerance, since silently
    averaging a non-skew matrix hides upstream bugs.
    """
    a = np.asarray(a, dtype=float).reshape(3, 3)
    defect = np.abs(a + a.T).max()
    if defect >= SKEW_TOL:
        raise NotSkewSymmetric(f"matrix is not skew-symmetric (|A + A^T| = {defect:.3e})")
    return np.array([a[2, 1], a[0, 2], a[1, 0]])


def sk_project(a) -> np.ndarray:
    """Skew-symmetric part (A - A^T)/2 of a 3x3 matrix."""
    a = np.asarray(a, dtype=float).reshape(3, 3)
    return 0.5 * (a - a.T)


def rotation_exp(w) -> np.ndarray:
    """Rotation matrix exp(S(w)) via Rodrigues' formula."""
    x, y, z = np.asarray(w, dtype=float).reshape(3)
    theta = math.sqrt(x * x + y * y + z * z)
    s = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    if theta < 1e-12:
        return np.eye(3) + s + 0.5 * (s @ s)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / theta**2
    return np.eye(3) + a * s + b * (s @ s)


def rotation_log(r) -> np.ndarray:
    """Axis-angle vector w with exp(S(w)) == R, |w| in [0, pi]."""
    r = np.asarray(r, dtype=float).reshape(3, 3)
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta < 1e-10:
        return vee(sk_project(r))
    if theta > np.pi - 1e-6:
        # near pi the antisymmetric part degenerates; recover axis from R + I
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(m), 0.0, None))
        k = int(np.argmax(axis))
        axis = m[:, k] / max(axis[k], 1e-12)
        axis /= np.linalg.norm(axis)
        w = axis * theta
        # fix sign using the antisymmetric part when it is not exactly zero
        v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        if v @ w < 0:
            w = -w
        return w
    return theta / (2.0 * np.sin(theta)) * np.array(
        [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]
    )


def rpy_to_matrix(rpy) -> np.ndarray:
    """Rotation from roll-pitch-yaw (extrinsic x-y-z): R = Rz(y) Ry(p) Rx(r)."""
    r, p, y = np.asarray(rpy, dtype=float).reshape(3)
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry_ = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry_ @ rx


def matrix_to_rpy(r) -> np.ndarray:
    """Roll-pitch-yaw angles inverting rpy_to_matrix (pitch in [-pi/2, pi/2])."""
    r = np.asarray(r, dtype=float).reshape(3, 3)
    pitch = np.arctan2(-r[2, 0], np.hypot(r[2, 1], r[2, 2]))
    if abs(abs(pitch) - np.pi / 2) < 1e-9:
        # gimbal lock: fold yaw into roll
        yaw = 0.0
        roll = np.arctan2(np.sign(pitch) * r[0, 1], r[1, 1])
    else:
        roll = np.arctan2(r[2, 1], r[2, 2])
        yaw = np.arctan2(r[1, 0], r[0, 0])
    return np.array([roll, pitch, yaw])


def orthonormalize(r) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float).reshape(3, 3))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def check_rotation(r, tol=ORTHONORMALITY_TOL) -> np.ndarray:
    """Validate orthonormality and unit determinant; returns the array."""
    r = np.asarray(r, dtype=float).reshape(3, 3)
    if np.abs(r @ r.T - np.eye(3)).max() > tol:
        raise ValueError("rotation matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("rotation matrix determinant is not +1")
    return r


@dataclass(frozen=True)
class FramePose:
    """Pose of a frame: origin position and orientation (rotation matrix)."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))

    @staticmethod
    def identity() -> "FramePose":
        return FramePose(np.zeros(3), np.eye(3))

    @staticmethod
    def from_xyz_rpy(xyz, rpy) -> "FramePose":
        return FramePose(np.asarray(xyz, dtype=float), rpy_to_matrix(rpy))

    def compose(self, other: "FramePose") -> "FramePose":
        """this ∘ other: pose of other's frame given in this frame's parent."""
        return FramePose(self.position + self.rotation @ other.position,
                         self.rotation @ other.rotation)

    def inverse(self) -> "FramePose":
        rt = self.rotation.T
        return FramePose(-rt @ self.position, rt)

    def transform_point(self, p) -> np.ndarray:
        return self.position + self.rotation @ np.asarray(p, dtype=float).reshape(3)

    def orthonormalized(self) -> "FramePose":
        return FramePose(self.position, orthonormalize(self.rotation))


@dataclass(frozen=True)
class Wrench:
    """6D force/moment pair tagged with the frame it is expressed in."""

    force: np.ndarray
    moment: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float).reshape(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])

    @staticmethod
    def from_vector(v, frame="world") -> "Wrench":
        v = np.asarray(v, dtype=float).reshape(6)
        return Wrench(v[:3], v[3:], frame)


class SpatialTransform:
    """Coordinate change for 6D vectors between two frames.

    Built from the pose of the source frame expressed in the target frame.
    `wrench_matrix` maps wrenches source -> target; `motion_matrix` maps
    motion vectors source -> target; the two are related by duality:
    wrench_matrix == motion_matrix(inverse).T.
    """

    def __init__(self, pose_of_source_in_target: FramePose, source="B", target="A"):
        self.pose = pose_of_source_in_target
        self.source = source
        self.target = target

    @staticmethod
    def from_pose(pose: FramePose, source="B", target="A") -> "SpatialTransform":
        return SpatialTransform(pose, source, target)

    def wrench_matrix(self) -> np.ndarray:
        r, p = self.pose.rotation, self.pose.position
        x = np.zeros((6, 6))
        x[:3, :3] = r
        x[3:, :3] = skew(p) @ r
        x[3:, 3:] = r
        return x

    def motion_matrix(self) -> np.ndarray:
        r, p = self.pose.rotation, self.pose.position
        x = np.zeros((6, 6))
        x[:3, :3] = r
        x[:3, 3:] = skew(p) @ r
        x[3:, 3:] = r
        return x

    def inverse(self) -> "SpatialTransform":
        return SpatialTransform(self.pose.inverse(), source=self.target, target=self.source)

    def compose(self, inner: "SpatialTransform") -> "SpatialTransform":
        """Transform going inner.source -> self.target (self ∘ inner)."""
        return SpatialTransform(self.pose.compose(inner.pose),
                                source=inner.source, target=self.target)


def wrench_transform_matrix(target_pose: FramePose, source_pose: FramePose) -> np.ndarray:
    """6x6 wrench transform between two frames given in common coordinates."""
    rel = target_pose.inverse().compose(source_pose)
    return SpatialTransform(rel).wrench_matrix()


def transform_wrench(x: SpatialTransform, w: Wrench) -> Wrench:
    """Re-express a wrench in the transform's target frame."""
    if w.frame != x.source:
        raise ValueError(f"wrench is expressed in {w.frame!r}, transform expects {x.source!r}")
    v = x.wrench_matrix() @ w.as_vector()
    return Wrench.from_vector(v, frame=x.target)


@dataclass(frozen=True)
class SpatialInertia:
    """Rigid-body inertia: mass, CoM offset, rotational inertia about the CoM.

    The rotational inertia is expressed in the body-frame axes. The 6x6 form
    is taken about the body-frame origin with (linear, angular) ordering.
    """

    mass: float
    com: np.ndarray
    inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float).reshape(3))
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float).reshape(3, 3))

    def matrix6(self) -> np.ndarray:
        m, c = self.mass, self.com
        sc = skew(c)
        out = np.zeros((6, 6))
        out[:3, :3] = m * np.eye(3)
        out[:3, 3:] = -m * sc
        out[3:, :3] = m * sc
        out[3:, 3:] = self.inertia - m * sc @ sc
        return out

    def validate(self):
        """Physical-consistency checks; raises ValueError on violation."""
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if np.abs(self.inertia - self.inertia.T).max() > 1e-12:
            raise ValueError("rotational inertia must be symmetric")
        eigs = np.linalg.eigvalsh(self.inertia)
        if eigs[0] <= 0.0:
            raise ValueError("rotational inertia must be positive definite")
        a, b, c = np.sort(eigs)
        if c > a + b + 1e-12:
            raise ValueError("principal moments violate the triangle inequality")
        return self
