"""Time stepping with collision resolution.

Each step:
  1. U_nc = M F_ext with the backend bound to the current configuration;
  2. collect near pairs (and wall contacts) and assemble D, Phi;
  3. solve the LCP with M_c = D^T M D and q = Phi/dt + D^T U_nc;
  4. advance with U_nc + M D gamma.
"""
from __future__ import annotations

import configparser
import dataclasses
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .constraints import (PlaneWall, apply_D, apply_D_transpose, build_constraint_system,
                          detect_near_pairs, detect_wall_contacts)
from .cqp import CqpProblem, solve_apgd, solve_bbpgd
from .kinematics import ParticleSet, step_configuration
from .mobility import make_backend
from .scenarios import Scenario, scenario_generate

log = logging.getLogger(__name__)


@dataclass
class SimulationConfig:
    scenario: str = "sediment_cluster"
    n_particles: int = 64
    volume_fraction: float = 0.2
    area_fraction: float = 0.6
    radius: float = 1.0
    radius_sigma: float = 0.3
    collision_ratio: float = 1.05
    force: float = 1.0
    torque: float = 1.0
    separation: float = 6.0
    offset: float = 1.0
    viscosity: float = 1.0
    backend: str = "rpy"
    p: int = 6
    beta: float = 1.75
    krylov_tol: float = 1e-8
    krylov_restart: int = 40
    dt: float = 0.05
    steps: int = 10
    eps_tol: float = 1e-5
    max_iter: int = 1000
    solver: str = "bbpgd"
    bb_mode: str = "bb1"
    delta_frac: float = 0.3
    tol_overlap: float = 1e-3
    settle_steps: int = 100
    seed: int = 0
    output_dir: str = ""
    cadence: int = 1
    wall_z: Optional[float] = None

    def __post_init__(self):
        for name in ("radius", "collision_ratio", "viscosity", "dt", "eps_tol", "krylov_tol",
                     "delta_frac", "tol_overlap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("n_particles", "steps", "max_iter", "cadence", "p", "krylov_restart"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.collision_ratio < 1:
            raise ValueError("collision_ratio must be >= 1")
        if self.solver not in ("bbpgd", "apgd"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.backend not in ("local", "rpy", "bi"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.settle_steps < 0:
            raise ValueError("settle_steps must be >= 0")

    @classmethod
    def from_file(cls, path) -> "SimulationConfig":
        """Read a flat ``key = value`` file (an optional [simulation] header is allowed)."""
        text = open(path).read()
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not text.lstrip().startswith("["):
            text = "[simulation]\n" + text
        cp.read_string(text)
        if not cp.has_section("simulation"):
            raise ValueError(f"{path}: missing [simulation] section")
        return cls.from_mapping(dict(cp["simulation"]))

    @classmethod
    def from_mapping(cls, raw: dict) -> "SimulationConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for k, v in raw.items():
            if k not in kinds:
                raise ValueError(f"unknown config key {k!r}")
            t = kinds[k]
            if isinstance(v, str):
                v = v.strip()
                if "Optional" in str(t):
                    v = None if v.lower() in ("", "none") else float(v)
                elif t in ("int", int):
                    v = int(v)
                elif t in ("float", float):
                    v = float(v)
            kw[k] = v
        return cls(**kw)

    def manifest(self) -> str:
        lines = [f"code_version = {__version__}"]
        for f in dataclasses.fields(self):
            if f.name == "output_dir":   # location, not a run parameter
                continue
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if v is None else format(v, '.17g') if isinstance(v, float) else v}")
        return "\n".join(lines) + "\n"

    def scenario_params(self) -> dict:
        s = self.scenario
        common = dict(radius=self.radius, collision_ratio=self.collision_ratio,
                      viscosity=self.viscosity)
        if s == "pair_rollover":
            return dict(common, separation=self.separation, offset=self.offset, force=self.force)
        if s == "sediment_cluster":
            return dict(common, n=self.n_particles, volume_fraction=self.volume_fraction,
                        force=self.force)
        if s == "rotor_cluster":
            return dict(common, n=self.n_particles, volume_fraction=self.volume_fraction,
                        torque=self.torque, radius_sigma=self.radius_sigma)
        if s in ("rotor_monolayer", "rotor_sheet"):
            return dict(common, n=self.n_particles, area_fraction=self.area_fraction,
                        torque=self.torque)
        raise ValueError(f"unknown scenario {s!r}")

    def make_backend(self):
        if self.backend == "bi":
            return make_backend("bi", p=self.p, beta=self.beta, tol=self.krylov_tol,
                                restart=self.krylov_restart)
        return make_backend(self.backend)

    def walls(self):
        return () if self.wall_z is None else (PlaneWall((0.0, 0.0, self.wall_z), (0.0, 0.0, 1.0)),)


@dataclass
class StepRecord:
    step: int
    time: float
    gid: np.ndarray
    centers: np.ndarray          # state at the start of the step
    quats: np.ndarray
    U: np.ndarray                # (N, 6) velocity applied over the step
    collision_force: np.ndarray  # (N, 3)
    pair_gid: np.ndarray         # (n_c, 2); second entry -1 - wall for walls
    phi: np.ndarray
    gamma: np.ndarray
    normals: np.ndarray
    stats: dict = field(default_factory=dict)


@dataclass
class StepResult:
    particles: ParticleSet
    record: StepRecord


def _rng(seed, step, which):
    return np.random.default_rng([seed, step, which])


def min_gap(P: ParticleSet, walls=(), delta_frac=0.3) -> float:
    """Smallest gap at collision radii among near pairs and wall contacts (inf if none)."""
    pairs = detect_near_pairs(P, delta_frac)
    wc = detect_wall_contacts(P, walls, delta_frac)
    if not pairs and not wc:
        return np.inf
    return float(build_constraint_system(P, pairs, walls, wc).phi.min())


def advance(P: ParticleSet, external, cfg: SimulationConfig, backend, step: int,
            time: float = 0.0, walls=(), streams=(0, 1)) -> StepResult:
    """One explicit step of the collision-constrained dynamics.

    ``streams`` selects the seed streams for the two backend bindings (grid
    orientations for U_nc and for the collision solve differ).
    """
    n = P.n
    ext = np.asarray(external, dtype=float).reshape(6 * n)
    try:
        op_nc = backend.operator(P, _rng(cfg.seed, step, streams[0]))
        U_nc = op_nc(ext) if np.any(ext) else np.zeros(6 * n)

        pairs = detect_near_pairs(P, cfg.delta_frac)
        wc = detect_wall_contacts(P, walls, cfg.delta_frac)
        S = build_constraint_system(P, pairs, walls, wc)
        stats = {"n_constraints": S.n_c, "solver_steps": 0, "mvops": 0, "residual": 0.0,
                 "converged": True, "min_gamma": 0.0, "min_w": 0.0, "gap": 0.0, "n_active": 0}
        gamma = np.zeros(S.n_c)
        U_c = np.zeros(6 * n)
        if S.n_c:
            op_c = backend.operator(P, _rng(cfg.seed, step, streams[1]))
            q = S.phi / cfg.dt + apply_D_transpose(S, U_nc)
            prob = CqpProblem(lambda g: apply_D_transpose(S, op_c(apply_D(S, g))), q,
                              tol=cfg.eps_tol, max_iter=cfg.max_iter)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                if cfg.solver == "bbpgd":
                    gamma, st = solve_bbpgd(prob, cfg.bb_mode)
                else:
                    gamma, st = solve_apgd(prob)
            if not st.converged:
                log.warning("step %d: LCP residual %.3e above tolerance", step, st.residual)
            # certificate: one extra MVOP gives U_c and w = D^T U_c + q together
            U_c = op_c(apply_D(S, gamma))
            w = apply_D_transpose(S, U_c) + q
            stats.update(solver_steps=st.steps, mvops=st.mvops, residual=st.residual,
                         converged=st.converged, min_gamma=float(gamma.min()),
                         min_w=float(w.min()), gap=float(abs(gamma @ w)),
                         n_active=int(np.count_nonzero(gamma > 0)))
            stats["phi_certificate"] = float(np.linalg.norm(np.minimum(gamma, w)))
        U = U_nc + U_c
        Fc = apply_D(S, gamma).reshape(n, 6)[:, :3] if S.n_c else np.zeros((n, 3))
        wall_reaction = np.zeros(3)
        if S.n_c:
            wall = S.is_wall
            wall_reaction = -(gamma[wall, None] * S.normals[wall]).sum(axis=0)
        scale = np.abs(Fc).sum()
        stats["net_force_rel"] = float(np.linalg.norm(Fc.sum(axis=0) + wall_reaction) / scale) if scale > 0 else 0.0
        stats["wall_reaction"] = wall_reaction
        gi = P.gid[S.i] if S.n_c else np.zeros(0, dtype=np.int64)
        gj = np.where(S.j >= 0, P.gid[np.maximum(S.j, 0)], S.j) if S.n_c else np.zeros(0, dtype=np.int64)
        if hasattr(op_nc, "stats"):
            stats["gmres_iters"] = op_nc.stats.get("gmres_iters", 0)
            if S.n_c:
                stats["gmres_iters"] += op_c.stats.get("gmres_iters", 0)
        P_new = step_configuration(P, U, cfg.dt)
    except (RuntimeError, FloatingPointError, ValueError) as exc:
        raise RuntimeError(f"step {step}: {exc}") from exc

    gap = min_gap(P_new, walls, cfg.delta_frac)
    stats["min_gap_after"] = gap
    if gap < -cfg.tol_overlap * P.radius.min():
        msg = f"step {step}: post-step overlap {gap:.3e} beyond tolerance"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    rec = StepRecord(step, time, P.gid.copy(), P.centers.copy(), P.quats.copy(),
                     U.reshape(n, 6), Fc, np.stack([gi, gj], -1), S.phi.copy(), gamma,
                     S.normals.copy(), stats)
    return StepResult(P_new, rec)


def settle(P: ParticleSet, cfg: SimulationConfig, backend, walls=()) -> ParticleSet:
    """Collision-only pre-steps (no external forcing) until the start is overlap-free."""
    zero = np.zeros((P.n, 6))
    for k in range(cfg.settle_steps):
        if min_gap(P, walls, cfg.delta_frac) >= 0:
            return P
        P = advance(P, zero, cfg, backend, k, walls=walls, streams=(2, 3)).particles
    if min_gap(P, walls, cfg.delta_frac) < -cfg.tol_overlap * P.radius.min():
        raise RuntimeError(f"initial overlap not removed after {cfg.settle_steps} pre-steps")
    return P


class RecordWriter:
    """CSV output; floats are written with round-trip precision and no timestamps."""

    TRAJ = "step,time,gid,cx,cy,cz,qs,qx,qy,qz,ux,uy,uz,wx,wy,wz,fcx,fcy,fcz"
    CONS = "step,gid_i,gid_j,phi,gamma,nx,ny,nz"
    STATS = ("step,time,n_constraints,n_active,solver_steps,mvops,residual,converged,"
             "min_gamma,min_w,gap,net_force_rel,min_gap_after,gmres_iters")

    def __init__(self, out_dir, cfg: SimulationConfig):
        os.makedirs(out_dir, exist_ok=True)
        self.dir = out_dir
        with open(os.path.join(out_dir, "manifest.txt"), "w") as f:
            f.write(cfg.manifest())
        self.traj = open(os.path.join(out_dir, "trajectory.csv"), "w")
        self.cons = open(os.path.join(out_dir, "constraints.csv"), "w")
        self.stats = open(os.path.join(out_dir, "solver_stats.csv"), "w")
        self.traj.write(self.TRAJ + "\n")
        self.cons.write(self.CONS + "\n")
        self.stats.write(self.STATS + "\n")

    @staticmethod
    def _fmt(row):
        return ",".join(format(v, ".17g") if isinstance(v, (float, np.floating)) else str(v)
                        for v in row) + "\n"

    def write(self, r: StepRecord):
        order = np.argsort(r.gid)
        for k in order:
            self.traj.write(self._fmt([r.step, float(r.time), int(r.gid[k]),
                                       *map(float, r.centers[k]), *map(float, r.quats[k]),
                                       *map(float, r.U[k]), *map(float, r.collision_force[k])]))
        for l in range(r.phi.size):
            self.cons.write(self._fmt([r.step, int(r.pair_gid[l, 0]), int(r.pair_gid[l, 1]),
                                       float(r.phi[l]), float(r.gamma[l]), *map(float, r.normals[l])]))
        s = r.stats
        self.stats.write(self._fmt([r.step, float(r.time), s["n_constraints"], s["n_active"],
                                    s["solver_steps"], s["mvops"], float(s["residual"]),
                                    int(bool(s["converged"])), float(s["min_gamma"]),
                                    float(s["min_w"]), float(s["gap"]), float(s["net_force_rel"]),
                                    float(s["min_gap_after"]), s.get("gmres_iters", 0)]))

    def close(self):
        for f in (self.traj, self.cons, self.stats):
            f.close()


def run_simulation(cfg: SimulationConfig, scenario: Scenario | None = None, callback=None):
    """Run the configured scenario; returns (records, final particles).

    Records are kept for every ``cadence``-th step and written to
    ``cfg.output_dir`` when it is set.
    """
    if scenario is None:
        scenario = scenario_generate(cfg.scenario, cfg.scenario_params(), cfg.seed)
    backend = cfg.make_backend()
    walls = cfg.walls()
    P = settle(scenario.particles, cfg, backend, walls)
    writer = RecordWriter(cfg.output_dir, cfg) if cfg.output_dir else None
    records = []
    try:
        for k in range(cfg.steps):
            res = advance(P, scenario.external, cfg, backend, k, k * cfg.dt, walls)
            P = res.particles
            if k % cfg.cadence == 0:
                records.append(res.record)
                if writer:
                    writer.write(res.record)
            if callback:
                callback(res.record)
    finally:
        if writer:
            writer.close()
    return records, P
