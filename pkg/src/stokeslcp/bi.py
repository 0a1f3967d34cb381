"""Second-kind boundary-integral mobility solver for rigid spheres.

Given forces and torques, each sphere carries a density rho matching them and
an unknown correction zeta solving, on every sphere surface,

    zeta + t_out[zeta] + L[zeta] = -(rho + t_out[rho]),

where t_out is the exterior-limit traction of the total single layer (own
sphere through the spectral self-map, neighbours within beta (a_i + a_j)
through exterior VSH evaluation, everything else by direct quadrature) and L
is the completion operator removing the rigid-body null space.  The interior
traction equals t_out + density, so the left side is the interior traction
operator plus L.  Rigid velocities are surface averages of the single-layer
velocity of rho + zeta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.spatial.transform import Rotation

from .kinematics import ParticleSet
from .mobility import MobilityBackend, MobilityOperator
from .vsh import (coef_to_real, exterior_response, get_grid, mode_weights,
                  response_to_real, self_maps)


@njit(cache=True, fastmath=True, error_model="numpy", inline="always")
def _rsqrt(rr):
    # single-precision estimate refined by two Newton steps (full double accuracy)
    y = np.float64(np.float32(1.0) / np.sqrt(np.float32(rr)))
    y = y * (1.5 - 0.5 * rr * y * y)
    return y * (1.5 - 0.5 * rr * y * y)


@njit(cache=True, fastmath=True, error_model="numpy")
def _far_traction(xs, ys, zs, nx, ny, nz, fx, fy, fz, K, ptr, idx, ox, oy, oz):
    """Traction of point forces f at targets with normals n, summed over far spheres."""
    c = -3.0 / (4.0 * math.pi)
    for i in range(ptr.size - 1):
        for k in range(i * K, (i + 1) * K):
            x0 = xs[k]
            x1 = ys[k]
            x2 = zs[k]
            n0 = nx[k]
            n1 = ny[k]
            n2 = nz[k]
            t0 = 0.0
            t1 = 0.0
            t2 = 0.0
            for q in range(ptr[i], ptr[i + 1]):
                j = idx[q]
                for l in range(j * K, (j + 1) * K):
                    r0 = x0 - xs[l]
                    r1 = x1 - ys[l]
                    r2 = x2 - zs[l]
                    inv = _rsqrt(r0 * r0 + r1 * r1 + r2 * r2)
                    inv2 = inv * inv
                    s = (r0 * fx[l] + r1 * fy[l] + r2 * fz[l]) * (r0 * n0 + r1 * n1 + r2 * n2) \
                        * inv2 * inv2 * inv
                    t0 += s * r0
                    t1 += s * r1
                    t2 += s * r2
            ox[k] += c * t0
            oy[k] += c * t1
            oz[k] += c * t2


@njit(cache=True, fastmath=True, error_model="numpy")
def _far_velocity(xs, ys, zs, fx, fy, fz, K, ptr, idx, eta, ox, oy, oz):
    """Stokeslet velocity of point forces f, summed over far spheres."""
    c = 1.0 / (8.0 * math.pi * eta)
    for i in range(ptr.size - 1):
        for k in range(i * K, (i + 1) * K):
            x0 = xs[k]
            x1 = ys[k]
            x2 = zs[k]
            u0 = 0.0
            u1 = 0.0
            u2 = 0.0
            for q in range(ptr[i], ptr[i + 1]):
                j = idx[q]
                for l in range(j * K, (j + 1) * K):
                    r0 = x0 - xs[l]
                    r1 = x1 - ys[l]
                    r2 = x2 - zs[l]
                    inv = _rsqrt(r0 * r0 + r1 * r1 + r2 * r2)
                    s = (r0 * fx[l] + r1 * fy[l] + r2 * fz[l]) * inv * inv * inv
                    u0 += fx[l] * inv + s * r0
                    u1 += fy[l] * inv + s * r1
                    u2 += fz[l] * inv + s * r2
            ox[k] += c * u0
            oy[k] += c * u1
            oz[k] += c * u2


def _soa(a):
    a = a.reshape(-1, 3)
    return np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1]), np.ascontiguousarray(a[:, 2])


@dataclass
class BiConfig:
    p: int = 6
    beta: float = 1.75
    tol: float = 1e-8
    restart: int = 40
    max_iter: int = 400

    def __post_init__(self):
        if not 1.0 < self.beta <= 3.0:
            raise ValueError("beta must lie in (1, 3]")
        if self.p < 2:
            raise ValueError("order p must be >= 2")


class BiSystem:
    """Geometry-dependent tables of one boundary-integral configuration."""

    def __init__(self, P: ParticleSet, cfg: BiConfig, rotations):
        self.P = P
        self.cfg = cfg
        self.grid = g = get_grid(cfg.p)
        self.R = np.asarray(rotations, dtype=float).reshape(P.n, 3, 3)
        N = P.n
        a = P.radius
        if N > 1:
            d = np.linalg.norm(P.centers[:, None] - P.centers[None], axis=-1)
            close = d < a[:, None] + a[None, :]
            np.fill_diagonal(close, False)
            if close.any():
                i, j = np.argwhere(close)[0]
                raise ValueError(f"physical spheres {i} and {j} intersect")
        else:
            d = np.zeros((1, 1))
        self.nrm = np.einsum("nij,kj->nki", self.R, g.points)
        self.X = P.centers[:, None, :] + a[:, None, None] * self.nrm
        self.W = a[:, None] ** 2 * g.weights[None, :]
        self.area = self.W.sum(axis=1)
        y = self.X - P.centers[:, None, :]
        r2 = np.einsum("nki,nki->nk", y, y)
        self.tau = (np.einsum("nk,nk->n", self.W, r2)[:, None, None] * np.eye(3)
                    - np.einsum("nk,nki,nkj->nij", self.W, y, y))
        self.tau_inv = np.linalg.inv(self.tau)
        self._y = y

        near = d < cfg.beta * (a[:, None] + a[None, :])
        np.fill_diagonal(near, False)
        far = ~near
        np.fill_diagonal(far, False)
        self.far = far
        self._ptr = np.concatenate([[0], np.cumsum(far.sum(axis=1))]).astype(np.int64)
        self._idx = np.nonzero(far)[1].astype(np.int64)
        self._xyz = _soa(self.X)
        self._nxyz = _soa(self.nrm)
        self.near_pairs = [(int(i), int(j)) for i, j in np.argwhere(near)]
        self._near_tr = {}
        self._near_x = {}
        for i, j in self.near_pairs:
            xb = (self.X[i] - P.centers[j]) @ self.R[j] / a[j]
            nb = self.nrm[i] @ self.R[j]
            _, Tr, _ = exterior_response(cfg.p, xb, nb)
            # rotate traction rows from body frame of j to lab
            Tr = np.einsum("ab,kbcm->kacm", self.R[j], Tr)
            self._near_tr[(i, j)] = response_to_real(Tr, cfg.p)
            self._near_x[(i, j)] = xb
        self.vel_map, self.trac_map = self_maps(cfg.p)
        self.gmres_iters = 0
        self.gmres_residual = 0.0

    # ---- per-sphere spectral pieces ------------------------------------------
    def expansion(self, dens):
        body = np.einsum("nki,nij->nkj", dens, self.R)
        return self.grid.expansion(body)

    def _apply_self(self, abc, table):
        z = np.stack(abc, -1)                                  # (N, Kh, 3)
        amp = np.einsum("mij,nmj->nmi", table, z)
        body = self.grid.synthesize_amplitudes(amp[..., 0], amp[..., 1], amp[..., 2])
        return np.einsum("nij,nkj->nki", self.R, body)

    def exterior_traction(self, dens, abc=None):
        """Exterior-limit traction of the single layer of ``dens`` on all surfaces."""
        if abc is None:
            abc = self.expansion(dens)
        out = self._apply_self(abc, self.trac_map)
        if self.near_pairs:
            zr = coef_to_real(*abc)
            for (i, j), E in self._near_tr.items():
                out[i] += (E @ zr[j]).reshape(-1, 3)
        if self._idx.size:
            o = np.zeros((3, out.shape[0] * out.shape[1]))
            _far_traction(*self._xyz, *self._nxyz, *_soa(dens * self.W[..., None]),
                          self.grid.size, self._ptr, self._idx, o[0], o[1], o[2])
            out += o.T.reshape(out.shape)
        return out

    def completion(self, dens):
        """L[zeta] = mean density + tau^{-1} (moment) x (x - c), per sphere."""
        Fw = dens * self.W[..., None]
        mean = Fw.sum(axis=1) / self.area[:, None]
        mom = np.einsum("nk,nki->ni", self.W, np.cross(self._y, dens))
        w = np.einsum("nij,nj->ni", self.tau_inv, mom)
        return mean[:, None, :] + np.cross(w[:, None, :], self._y)

    def system_apply(self, zeta):
        return zeta + self.exterior_traction(zeta) + self.completion(zeta)

    def density_from_force_torque(self, FT):
        FT = np.asarray(FT, dtype=float).reshape(self.P.n, 6)
        w = np.einsum("nij,nj->ni", self.tau_inv, FT[:, 3:])
        return FT[:, None, :3] / self.area[:, None, None] + np.cross(w[:, None, :], self._y)

    def velocity(self, dens):
        """Single-layer velocity of ``dens`` at all surface points."""
        P = self.P
        abc = self.expansion(dens)
        out = self._apply_self(abc, self.vel_map) * (P.radius / P.viscosity)[:, None, None]
        if self.near_pairs:
            w = np.tile(mode_weights(self.cfg.p), 3)
            for (i, j), xb in self._near_x.items():
                U, _, _ = exterior_response(self.cfg.p, xb, want_traction=False)
                z = abc[0][j], abc[1][j], abc[2][j]
                u = np.real(U.reshape(len(xb), 3, -1) @ (w * np.concatenate(z)))
                out[i] += (P.radius[j] / P.viscosity) * u @ self.R[j].T
        if self._idx.size:
            o = np.zeros((3, out.shape[0] * out.shape[1]))
            _far_velocity(*self._xyz, *_soa(dens * self.W[..., None]), self.grid.size,
                          self._ptr, self._idx, P.viscosity, o[0], o[1], o[2])
            out += o.T.reshape(out.shape)
        return out

    def rigid_average(self, u):
        """(U, Omega) per sphere from a surface velocity field."""
        U = np.einsum("nk,nki->ni", self.W, u) / self.area[:, None]
        mom = np.einsum("nk,nki->ni", self.W, np.cross(self._y, u))
        return U, np.einsum("nij,nj->ni", self.tau_inv, mom)

    def solve(self, FT):
        N, K = self.P.n, self.grid.size
        rho = self.density_from_force_torque(FT)
        out = np.zeros((N, 6))
        if not np.any(rho):
            return out.ravel()
        b = -(rho + self.exterior_traction(rho)).ravel()
        A = LinearOperator((3 * N * K, 3 * N * K), dtype=float,
                           matvec=lambda v: self.system_apply(v.reshape(N, K, 3)).ravel())
        count = [0]

        def cb(_):
            count[0] += 1

        zeta, info = gmres(A, b, rtol=self.cfg.tol, atol=0.0, restart=self.cfg.restart,
                           maxiter=self.cfg.max_iter, callback=cb, callback_type="pr_norm")
        res = np.linalg.norm(A @ zeta - b) / np.linalg.norm(b)
        self.gmres_iters = count[0]
        self.gmres_residual = float(res)
        if info != 0 and res > 10 * self.cfg.tol:
            raise RuntimeError(f"GMRES did not converge: relative residual {res:.3e} after {count[0]} iterations")
        u = self.velocity(rho + zeta.reshape(N, K, 3))
        U, W = self.rigid_average(u)
        out[:, :3] = U
        out[:, 3:] = W
        return out.ravel()


def random_rotations(n, rng):
    return Rotation.random(n, random_state=rng).as_matrix().reshape(n, 3, 3)


class BoundaryIntegral(MobilityBackend):
    """Spectral boundary-integral mobility (backend key ``bi``)."""
    name = "bi"

    def __init__(self, p=6, beta=1.75, tol=1e-8, restart=40, max_iter=400):
        self.cfg = BiConfig(p, beta, tol, restart, max_iter)
        self.solve_tol = tol
        self.history = []

    def system(self, P, rng=None) -> BiSystem:
        rng = np.random.default_rng(rng)
        return BiSystem(P, self.cfg, random_rotations(P.n, rng))

    def operator(self, P, rng=None) -> MobilityOperator:
        sysm = self.system(P, rng)
        op = MobilityOperator(P.n, None)

        def apply(F):
            U = sysm.solve(F)
            self.history.append((sysm.gmres_iters, sysm.gmres_residual))
            op.stats["gmres_iters"] = op.stats.get("gmres_iters", 0) + sysm.gmres_iters
            op.stats["solves"] = op.stats.get("solves", 0) + 1
            return U

        op._apply = apply
        return op


def solve_mobility_bi(P: ParticleSet, F, cfg: BiConfig | None = None, rng=None):
    cfg = cfg or BiConfig()
    return BoundaryIntegral(cfg.p, cfg.beta, cfg.tol, cfg.restart, cfg.max_iter).operator(P, rng)(F)


def density_from_force_torque(P: ParticleSet, FT, p=6, rotations=None):
    """Per-sphere density (N, K, 3) matching forces and torques."""
    rot = np.tile(np.eye(3), (P.n, 1, 1)) if rotations is None else rotations
    return BiSystem(P, BiConfig(p=p), rot).density_from_force_torque(FT)


def surface_average_rigid_motion(sysm: BiSystem, u):
    return sysm.rigid_average(u)
