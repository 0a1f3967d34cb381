"""Rigid-body state of N spheres and explicit Euler stepping.

Orientation is a scalar-first unit quaternion (s, px, py, pz).  Velocity and
force vectors are flat 6N arrays ordered (x, y, z, rx, ry, rz) per particle.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class ParticleSet:
    centers: np.ndarray
    quats: np.ndarray
    radius: np.ndarray
    radius_collision: np.ndarray
    viscosity: float = 1.0
    gid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.centers = np.array(self.centers, dtype=float).reshape(-1, 3)
        n = self.centers.shape[0]
        if self.quats is None:
            self.quats = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        self.quats = np.array(self.quats, dtype=float).reshape(n, 4)
        self.radius = np.broadcast_to(np.asarray(self.radius, dtype=float), (n,)).copy()
        self.radius_collision = np.broadcast_to(
            np.asarray(self.radius_collision, dtype=float), (n,)).copy()
        if self.gid is None:
            self.gid = np.arange(n)
        self.gid = np.asarray(self.gid, dtype=np.int64).reshape(n)
        if np.any(self.radius <= 0):
            raise ValueError("radii must be positive")
        if np.any(self.radius_collision < self.radius):
            raise ValueError("collision radius must be >= radius")
        if not np.array_equal(np.sort(self.gid), np.arange(n)):
            raise ValueError("global indices must be a permutation of 0..N-1")
        if self.viscosity <= 0:
            raise ValueError("viscosity must be positive")

    @classmethod
    def create(cls, centers, radius, radius_collision=None, viscosity=1.0,
               quats=None, rng=None):
        """Build a set; with ``rng`` the global indices are a random permutation."""
        centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        if radius_collision is None:
            radius_collision = radius
        gid = None if rng is None else rng.permutation(len(centers))
        return cls(centers, quats, radius, radius_collision, viscosity, gid)

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    def copy(self) -> "ParticleSet":
        return replace(self, centers=self.centers.copy(), quats=self.quats.copy(),
                       radius=self.radius.copy(),
                       radius_collision=self.radius_collision.copy(),
                       gid=self.gid.copy())

    def to_configuration(self) -> np.ndarray:
        return np.hstack([self.centers, self.quats]).ravel()

    def with_configuration(self, C) -> "ParticleSet":
        C = np.asarray(C, dtype=float)
        if C.shape != (7 * self.n,):
            raise ValueError(f"configuration must have length {7 * self.n}, got {C.shape}")
        C = C.reshape(self.n, 7)
        q = C[:, 3:] / np.linalg.norm(C[:, 3:], axis=1, keepdims=True)
        out = self.copy()
        out.centers = C[:, :3].copy()
        out.quats = q
        return out


def psi_matrix(q) -> np.ndarray:
    """4x3 map from angular velocity to quaternion rate, 0.5 [-p^T; s I - [p]x]."""
    s, px, py, pz = q
    return 0.5 * np.array([
        [-px, -py, -pz],
        [s, pz, -py],
        [-pz, s, px],
        [py, -px, s],
    ])


def _quat_rates(quats, omega):
    s = quats[:, :1]
    p = quats[:, 1:]
    ds = -np.sum(p * omega, axis=1, keepdims=True)
    dp = s * omega - np.cross(p, omega)
    return 0.5 * np.hstack([ds, dp])


def kinematic_map_apply(C, U) -> np.ndarray:
    """Configuration rate G U for a 7N configuration and 6N velocity."""
    C = np.asarray(C, dtype=float)
    U = np.asarray(U, dtype=float)
    if C.ndim != 1 or C.size % 7:
        raise ValueError("configuration length must be a multiple of 7")
    n = C.size // 7
    if U.shape != (6 * n,):
        raise ValueError(f"velocity must have length {6 * n}, got {U.shape}")
    C = C.reshape(n, 7)
    U = U.reshape(n, 6)
    out = np.empty((n, 7))
    out[:, :3] = U[:, :3]
    out[:, 3:] = _quat_rates(C[:, 3:], U[:, 3:])
    return out.ravel()


def step_configuration(P: ParticleSet, U, dt: float) -> ParticleSet:
    """One explicit Euler step; quaternions are renormalized afterwards."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    U = np.asarray(U, dtype=float)
    if U.shape != (6 * P.n,):
        raise ValueError(f"velocity must have length {6 * P.n}, got {U.shape}")
    bad = ~np.all(np.isfinite(U.reshape(P.n, 6)), axis=1)
    if bad.any():
        raise FloatingPointError(f"non-finite velocity for particle {int(np.argmax(bad))}")
    U = U.reshape(P.n, 6)
    out = P.copy()
    out.centers = P.centers + U[:, :3] * dt
    q = P.quats + _quat_rates(P.quats, U[:, 3:]) * dt
    out.quats = q / np.linalg.norm(q, axis=1, keepdims=True)
    return out


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (body to lab)."""
    s, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - s * z), 2 * (x * z + s * y)],
        [2 * (x * y + s * z), 1 - 2 * (x * x + z * z), 2 * (y * z - s * x)],
        [2 * (x * z - s * y), 2 * (y * z + s * x), 1 - 2 * (x * x + y * y)],
    ])
