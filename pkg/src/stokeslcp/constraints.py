"""Near-pair detection and the sparse collision matrix D.

Column l of D (6N x n_c) maps the scalar force magnitude gamma_l to forces on
the particles it involves.  For a pair (i, j) the unit normal points from j to
i, so +gamma n lands on i and -gamma n on j.  Torque rows are always zero.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .kinematics import ParticleSet

DEFAULT_DELTA_FRAC = 0.3


@dataclass(frozen=True)
class PlaneWall:
    """Half-space boundary {x : (x - point) . normal >= 0}."""
    point: tuple
    normal: tuple

    def unit_normal(self) -> np.ndarray:
        n = np.asarray(self.normal, dtype=float)
        return n / np.linalg.norm(n)


@dataclass
class ConstraintSystem:
    n_particles: int
    i: np.ndarray          # particle index (storage order)
    j: np.ndarray          # partner index, or -1 - wall_id for walls
    phi: np.ndarray
    normals: np.ndarray
    D: sp.csc_matrix

    def __post_init__(self):
        self._DT = self.D.T.tocsr()

    @property
    def n_c(self) -> int:
        return self.phi.size

    @property
    def is_wall(self) -> np.ndarray:
        return self.j < 0


def min_separation_spheres(ci, aci, cj, acj):
    """Surface gap and unit normal (from j toward i) for two spheres."""
    d = np.asarray(ci, dtype=float) - np.asarray(cj, dtype=float)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise ValueError("coincident sphere centers, normal undefined")
    return r - aci - acj, d / r


def detect_near_pairs(P: ParticleSet, delta_frac: float = DEFAULT_DELTA_FRAC):
    """All pairs with gap <= delta_frac (a_ci + a_cj), found with a cell list.

    Returned pairs are storage indices (i, j) with gid[i] < gid[j], sorted by
    global index, so the result does not depend on storage or traversal order.
    """
    n = P.n
    if n < 2:
        return []
    ac = P.radius_collision
    edge = 2.0 * ac.max() * (1.0 + delta_frac)
    cells = np.floor((P.centers - P.centers.min(axis=0)) / edge).astype(np.int64)
    buckets = defaultdict(list)
    for k, key in enumerate(map(tuple, cells)):
        buckets[key].append(k)
    found = []
    offsets = list(product((-1, 0, 1), repeat=3))
    for key, members in buckets.items():
        neigh = []
        for off in offsets:
            other = buckets.get((key[0] + off[0], key[1] + off[1], key[2] + off[2]))
            if other:
                neigh.extend(other)
        neigh = np.asarray(neigh)
        for a in members:
            cand = neigh[neigh > a]
            if cand.size == 0:
                continue
            dist = np.linalg.norm(P.centers[cand] - P.centers[a], axis=1)
            gap = dist - ac[a] - ac[cand]
            ok = gap <= delta_frac * (ac[a] + ac[cand])
            for b in cand[ok]:
                found.append((a, int(b)))
    g = P.gid
    out = [(a, b) if g[a] < g[b] else (b, a) for a, b in found]
    out.sort(key=lambda ab: (g[ab[0]], g[ab[1]]))
    return out


def detect_wall_contacts(P: ParticleSet, walls, delta_frac: float = DEFAULT_DELTA_FRAC):
    """(particle, wall_id) pairs with wall gap <= delta_frac * 2 a_c."""
    out = []
    for w, wall in enumerate(walls):
        n = wall.unit_normal()
        gap = (P.centers - np.asarray(wall.point, dtype=float)) @ n - P.radius_collision
        hit = np.nonzero(gap <= delta_frac * 2.0 * P.radius_collision)[0]
        out.extend((int(k), w) for k in hit[np.argsort(P.gid[hit])])
    return out


def build_constraint_system(P: ParticleSet, pairs, walls=(), wall_contacts=()) -> ConstraintSystem:
    """Assemble Phi, normals and D; pair columns first, then wall columns."""
    n_c = len(pairs) + len(wall_contacts)
    ii = np.empty(n_c, dtype=np.int64)
    jj = np.empty(n_c, dtype=np.int64)
    phi = np.empty(n_c)
    normals = np.empty((n_c, 3))
    rows, cols, vals = [], [], []
    for l, (i, j) in enumerate(pairs):
        if i == j:
            raise ValueError("pair constraint needs two distinct particles")
        phi[l], normals[l] = min_separation_spheres(
            P.centers[i], P.radius_collision[i], P.centers[j], P.radius_collision[j])
        ii[l], jj[l] = i, j
        rows += [6 * i, 6 * i + 1, 6 * i + 2, 6 * j, 6 * j + 1, 6 * j + 2]
        cols += [l] * 6
        vals += list(normals[l]) + list(-normals[l])
    for k, (i, w) in enumerate(wall_contacts):
        l = len(pairs) + k
        wall = walls[w]
        nw = wall.unit_normal()
        phi[l] = (P.centers[i] - np.asarray(wall.point, dtype=float)) @ nw - P.radius_collision[i]
        normals[l] = nw
        ii[l], jj[l] = i, -1 - w
        rows += [6 * i, 6 * i + 1, 6 * i + 2]
        cols += [l] * 3
        vals += list(nw)
    D = sp.csc_matrix((vals, (rows, cols)), shape=(6 * P.n, n_c))
    return ConstraintSystem(P.n, ii, jj, phi, normals, D)


def apply_D(S: ConstraintSystem, gamma) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (S.n_c,):
        raise ValueError(f"gamma must have length {S.n_c}, got {gamma.shape}")
    return S.D @ gamma


def apply_D_transpose(S: ConstraintSystem, U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.shape != (6 * S.n_particles,):
        raise ValueError(f"velocity must have length {6 * S.n_particles}, got {U.shape}")
    return S._DT @ U
