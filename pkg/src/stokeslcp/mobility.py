"""Mobility backends: maps from 6N forces/torques to 6N rigid velocities.

A backend is bound to a configuration with ``backend.operator(P, rng)``; the
returned operator is a fixed linear map for that configuration so repeated
applications inside one LCP solve all see the same M.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import ParticleSet


def local_drag_apply(P: ParticleSet, F) -> np.ndarray:
    """Isolated-sphere Stokes drag, no coupling between particles."""
    F = np.asarray(F, dtype=float).reshape(P.n, 6)
    eta = P.viscosity
    a = P.radius[:, None]
    U = np.empty_like(F)
    U[:, :3] = F[:, :3] / (6 * np.pi * eta * a)
    U[:, 3:] = F[:, 3:] / (8 * np.pi * eta * a ** 3)
    return U.ravel()


def rpy_matrix(centers, radius, eta=1.0) -> np.ndarray:
    """Dense 3N x 3N translational RPY mobility for unequal radii.

    Three branches: disjoint spheres, partial overlap and one sphere inside the
    other (Zuk, Wajnryb, Mizerski, Szymczak 2014).  Positive definite for any
    configuration with distinct centers.
    """
    c = np.asarray(centers, dtype=float)
    a = np.asarray(radius, dtype=float)
    n = len(c)
    d = c[:, None, :] - c[None, :, :]
    r = np.linalg.norm(d, axis=-1)
    off = ~np.eye(n, dtype=bool)
    if np.any(r[off] == 0):
        raise ValueError("coincident sphere centers in RPY mobility")
    rs = np.where(off, r, 1.0)
    rr = d / rs[..., None]
    ai = a[:, None] * np.ones((1, n))
    aj = a[None, :] * np.ones((n, 1))
    s2 = ai ** 2 + aj ** 2

    far = rs > ai + aj
    inside = rs <= np.abs(ai - aj)
    f = np.empty((n, n))
    g = np.empty((n, n))
    # disjoint
    f_far = (1 + s2 / (3 * rs ** 2)) / (8 * np.pi * eta * rs)
    g_far = (1 - s2 / rs ** 2) / (8 * np.pi * eta * rs)
    # partial overlap
    pre = 1.0 / (6 * np.pi * eta * ai * aj)
    dm = (ai - aj) ** 2
    f_mid = pre * (16 * rs ** 3 * (ai + aj) - (dm + 3 * rs ** 2) ** 2) / (32 * rs ** 3)
    g_mid = pre * 3 * (dm - rs ** 2) ** 2 / (32 * rs ** 3)
    # engulfed
    f_in = 1.0 / (6 * np.pi * eta * np.maximum(ai, aj))
    f[:] = np.where(far, f_far, np.where(inside, f_in, f_mid))
    g[:] = np.where(far, g_far, np.where(inside, 0.0, g_mid))
    np.fill_diagonal(f, 1.0 / (6 * np.pi * eta * a))
    np.fill_diagonal(g, 0.0)
    blocks = f[..., None, None] * np.eye(3) + g[..., None, None] * rr[..., :, None] * rr[..., None, :]
    return blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)


def rpy_apply(P: ParticleSet, F) -> np.ndarray:
    """RPY translation coupling plus diagonal isolated-sphere rotation."""
    F = np.asarray(F, dtype=float).reshape(P.n, 6)
    U = np.empty_like(F)
    U[:, :3] = (rpy_matrix(P.centers, P.radius, P.viscosity) @ F[:, :3].ravel()).reshape(-1, 3)
    U[:, 3:] = F[:, 3:] / (8 * np.pi * P.viscosity * P.radius[:, None] ** 3)
    return U.ravel()


@dataclass
class MobilityOperator:
    """A mobility map frozen at one configuration."""
    n_particles: int
    _apply: callable
    stats: dict = field(default_factory=dict)

    def __call__(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        if F.shape != (6 * self.n_particles,):
            raise ValueError(f"force vector must have length {6 * self.n_particles}, got {F.shape}")
        return self._apply(F)


class MobilityBackend:
    name = "abstract"
    supports_torque = True
    solve_tol = 0.0

    def operator(self, P: ParticleSet, rng=None) -> MobilityOperator:
        raise NotImplementedError


class LocalDrag(MobilityBackend):
    name = "local"

    def operator(self, P, rng=None):
        P = P.copy()
        return MobilityOperator(P.n, lambda F: local_drag_apply(P, F))


class RPY(MobilityBackend):
    name = "rpy"

    def operator(self, P, rng=None):
        Mt = rpy_matrix(P.centers, P.radius, P.viscosity)
        rot = 1.0 / (8 * np.pi * P.viscosity * P.radius[:, None] ** 3)
        n = P.n

        def apply(F):
            F = F.reshape(n, 6)
            U = np.empty_like(F)
            U[:, :3] = (Mt @ F[:, :3].ravel()).reshape(-1, 3)
            U[:, 3:] = F[:, 3:] * rot
            return U.ravel()

        return MobilityOperator(n, apply)


@dataclass
class SpdReport:
    passed: bool
    worst_symmetry: float
    min_energy: float
    trials: int


def spd_probe(backend: MobilityBackend, P: ParticleSet, trials: int = 10, rng=None,
              sym_tol: float = 1e-10) -> SpdReport:
    """Random-vector check of symmetry and positivity of the bound operator.

    Symmetry is measured relative to ||F1|| ||B F2|| + ||F2|| ||B F1||.
    """
    rng = np.random.default_rng(rng)
    op = backend.operator(P, rng)
    worst, emin = 0.0, np.inf
    for _ in range(trials):
        F1 = rng.normal(size=6 * P.n)
        F2 = rng.normal(size=6 * P.n)
        U1 = op(F1)
        U2 = op(F2)
        scale = np.linalg.norm(F1) * np.linalg.norm(U2) + np.linalg.norm(F2) * np.linalg.norm(U1)
        worst = max(worst, abs(F1 @ U2 - F2 @ U1) / scale)
        emin = min(emin, F1 @ U1 / (np.linalg.norm(F1) * np.linalg.norm(U1)))
    return SpdReport(worst <= sym_tol and emin > 0, worst, emin, trials)


def make_backend(name: str, **kw) -> MobilityBackend:
    if name == "local":
        return LocalDrag()
    if name == "rpy":
        return RPY()
    if name == "bi":
        from .bi import BoundaryIntegral
        return BoundaryIntegral(**kw)
    raise ValueError(f"unknown mobility backend {name!r} (expected local, rpy or bi)")
