"""Seeded initial configurations with their external force/torque assignments.

Every generator returns a ``Scenario``: the particle set plus an (N, 6) array
of external forces and torques.  Placement is overlap-free at the collision
radii, either by construction (lattices) or by random sequential addition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .kinematics import ParticleSet


@dataclass
class Scenario:
    name: str
    particles: ParticleSet
    external: np.ndarray     # (N, 6) force and torque per particle
    meta: dict


def _quats(n, rng):
    # scalar-first unit quaternions, uniformly random
    q = Rotation.random(n, random_state=rng).as_quat()
    return np.hstack([q[:, 3:], q[:, :3]])


def _rsa_ball(radii_c, R_ball, rng, max_tries=20000):
    """Random sequential addition of spheres (largest first) inside a ball."""
    n = len(radii_c)
    order = np.argsort(-radii_c, kind="stable")
    centers = np.empty((n, 3))
    placed = []
    for k in order:
        rc = radii_c[k]
        lim = R_ball - rc
        if lim <= 0:
            raise ValueError("packing infeasible: particle larger than the cluster")
        for _ in range(max_tries):
            x = rng.uniform(-lim, lim, 3)
            if x @ x > lim * lim:
                continue
            if placed:
                idx = np.asarray(placed)
                d = np.linalg.norm(centers[idx] - x, axis=1)
                if np.any(d < radii_c[idx] + rc):
                    continue
            centers[k] = x
            placed.append(k)
            break
        else:
            raise ValueError(f"packing infeasible: could not place particle {len(placed) + 1} of {n}")
    return centers


def pair_rollover(radius=1.0, separation=6.0, offset=1.0, force=1.0, collision_ratio=1.01,
                  viscosity=1.0, seed=0) -> Scenario:
    """Two equal spheres dragged by +-F along x with a vertical offset."""
    rng = np.random.default_rng(seed)
    a = radius
    centers = np.array([[-0.5 * separation * a, 0.0, 0.0],
                        [0.5 * separation * a, 0.0, offset * a]])
    P = ParticleSet.create(centers, a, collision_ratio * a, viscosity, quats=_quats(2, rng))
    ext = np.zeros((2, 6))
    ext[0, 0], ext[1, 0] = force, -force
    return Scenario("pair_rollover", P, ext, {"separation": separation, "offset": offset})


def sediment_cluster(n, volume_fraction=0.2, radius=1.0, force=1.0, collision_ratio=1.05,
                     viscosity=1.0, seed=0) -> Scenario:
    """Monodisperse spheres in a ball, each pulled by F along -z."""
    if not 0 < volume_fraction < 0.35:
        raise ValueError("random addition cannot reach volume fraction >= 0.35")
    rng = np.random.default_rng(seed)
    a = np.full(n, radius)
    R_ball = radius * (n / volume_fraction) ** (1 / 3)
    centers = _rsa_ball(collision_ratio * a, R_ball, rng)
    P = ParticleSet.create(centers, a, collision_ratio * a, viscosity, quats=_quats(n, rng), rng=rng)
    ext = np.zeros((n, 6))
    ext[:, 2] = -force
    return Scenario("sediment_cluster", P, ext, {"cluster_radius": R_ball})


def lognormal_radii(n, radius, sigma, rng):
    """Log-normal radii with median ``radius`` and log-standard deviation ``sigma``."""
    return radius * np.exp(sigma * rng.standard_normal(n))


def rotor_cluster(n, volume_fraction=0.1, torque=1.0, radius=1.0, radius_sigma=0.3,
                  collision_ratio=1.1, viscosity=1.0, seed=0) -> Scenario:
    """Polydisperse rotors in a ball, constant torque along +z on each."""
    if not 0 < volume_fraction < 0.3:
        raise ValueError("random addition cannot reach volume fraction >= 0.3")
    rng = np.random.default_rng(seed)
    a = lognormal_radii(n, radius, radius_sigma, rng)
    R_ball = (np.sum(a ** 3) / volume_fraction) ** (1 / 3)
    centers = _rsa_ball(collision_ratio * a, R_ball, rng)
    P = ParticleSet.create(centers, a, collision_ratio * a, viscosity, quats=_quats(n, rng), rng=rng)
    ext = np.zeros((n, 6))
    ext[:, 5] = torque
    return Scenario("rotor_cluster", P, ext, {"cluster_radius": R_ball})


def hex_spacing(radius, area_fraction):
    """Nearest-neighbour distance of a triangular lattice of disks at the given area fraction."""
    return radius * np.sqrt(2 * np.pi / (np.sqrt(3) * area_fraction))


def _hex_points(n, d):
    m = int(np.ceil(np.sqrt(n))) + 3
    i, j = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    x = d * (i + 0.5 * j)
    y = d * (np.sqrt(3) / 2) * j
    return np.stack([x.ravel(), y.ravel()], -1)


def _planar(n, area_fraction, radius, collision_ratio, viscosity, seed, metric):
    if not 0 < area_fraction < np.pi / (2 * np.sqrt(3) * collision_ratio ** 2):
        raise ValueError("area fraction too high for non-overlapping collision disks")
    rng = np.random.default_rng(seed)
    d = hex_spacing(radius, area_fraction)
    pts = _hex_points(n, d)
    key = metric(pts)
    order = np.lexsort((np.arctan2(pts[:, 1], pts[:, 0]), np.round(key, 9)))[:n]
    xy = pts[order]
    xy -= xy.mean(axis=0)
    centers = np.hstack([xy, np.zeros((n, 1))])
    P = ParticleSet.create(centers, radius, collision_ratio * radius, viscosity,
                           quats=_quats(n, rng), rng=rng)
    return P, d


def rotor_monolayer(n, area_fraction=0.6, torque=1.0, radius=1.0, collision_ratio=1.1,
                    viscosity=1.0, seed=0) -> Scenario:
    """Disk-shaped triangular lattice on z = 0, torque perpendicular to the layer."""
    P, d = _planar(n, area_fraction, radius, collision_ratio, viscosity, seed,
                   lambda p: np.hypot(p[:, 0], p[:, 1]))
    ext = np.zeros((n, 6))
    ext[:, 5] = torque
    return Scenario("rotor_monolayer", P, ext, {"spacing": d})


def rotor_sheet(n, area_fraction=0.6, torque=1.0, radius=1.0, collision_ratio=1.1,
                viscosity=1.0, seed=0) -> Scenario:
    """Square triangular-lattice sheet on z = 0, torque along +y (in plane)."""
    P, d = _planar(n, area_fraction, radius, collision_ratio, viscosity, seed,
                   lambda p: np.maximum(np.abs(p[:, 0]), np.abs(p[:, 1])))
    ext = np.zeros((n, 6))
    ext[:, 4] = torque
    return Scenario("rotor_sheet", P, ext, {"spacing": d})


def lattice_area_fraction(P: ParticleSet) -> float:
    """Area fraction implied by the mean nearest-neighbour spacing of a planar layer."""
    xy = P.centers[:, :2]
    d = np.linalg.norm(xy[:, None] - xy[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    dnn = d.min(axis=1).mean()
    return float(np.pi * np.mean(P.radius ** 2) / (np.sqrt(3) / 2 * dnn ** 2))


SCENARIOS = {
    "pair_rollover": pair_rollover,
    "sediment_cluster": sediment_cluster,
    "rotor_cluster": rotor_cluster,
    "rotor_monolayer": rotor_monolayer,
    "rotor_sheet": rotor_sheet,
}


def scenario_generate(name, params: dict, seed: int) -> Scenario:
    try:
        fn = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    return fn(**params, seed=seed)
