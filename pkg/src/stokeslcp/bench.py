"""Benchmark and study suites shared by the command line and the acceptance tests.

Every suite returns plain dictionaries so the caller decides how to print or
check them.
"""
from __future__ import annotations

import time
import warnings

import numpy as np

from .analysis import rollover_signature
from .cqp import dense_problem, enumerate_lcp_oracle, solve_apgd, solve_bbpgd
from .kinematics import ParticleSet
from .mobility import make_backend
from .sim import SimulationConfig, run_simulation


def random_spd_lcp(n, rng):
    """Random SPD matrix with condition number up to ~1e3 and a mixed-sign q."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.exp(rng.uniform(0.0, np.log(1e3), n))
    M = (Q * lam) @ Q.T
    M = 0.5 * (M + M.T)
    q = rng.standard_normal(n)
    return M, q


def lcp_suite(instances=200, n_max=10, tol=1e-10, seed=0) -> dict:
    """BBPGD and APGD against active-set enumeration on random SPD instances."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    err = {"bbpgd": 0.0, "apgd": 0.0}
    mv = {"bbpgd": [], "apgd": []}
    for _ in range(instances):
        n = int(rng.integers(1, n_max + 1))
        M, q = random_spd_lcp(n, rng)
        ref = enumerate_lcp_oracle(M, q)
        for name, solve in (("bbpgd", solve_bbpgd), ("apgd", solve_apgd)):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                g, st = solve(dense_problem(M, q, tol=tol, max_iter=20000))
            err[name] = max(err[name], float(np.abs(g - ref).max()))
            mv[name].append(st.mvops)
    return {"instances": instances, "seconds": time.perf_counter() - t0,
            "bbpgd_max_err": err["bbpgd"], "apgd_max_err": err["apgd"],
            "bbpgd_mean_mvops": float(np.mean(mv["bbpgd"])),
            "apgd_mean_mvops": float(np.mean(mv["apgd"]))}


def single_sphere_anchor(backend, radius=1.3, viscosity=0.7, seed=0) -> dict:
    """Relative errors of U = F/(6 pi eta a) and Omega = T/(8 pi eta a^3)."""
    rng = np.random.default_rng(seed)
    P = ParticleSet.create(rng.standard_normal((1, 3)), radius, viscosity=viscosity)
    FT = rng.standard_normal(6)
    U = backend.operator(P, rng)(FT)
    ref = np.concatenate([FT[:3] / (6 * np.pi * viscosity * radius),
                          FT[3:] / (8 * np.pi * viscosity * radius ** 3)])
    return {"backend": backend.name,
            "trans_err": float(np.linalg.norm(U[:3] - ref[:3]) / np.linalg.norm(ref[:3])),
            "rot_err": float(np.linalg.norm(U[3:] - ref[3:]) / np.linalg.norm(ref[3:]))}


def two_sphere_velocity(gap, p, tol=1e-12, seed=5):
    """6N velocity of two unit spheres at surface gap ``gap`` sedimenting side by side."""
    P = ParticleSet.create([[-1 - gap / 2, 0, 0], [1 + gap / 2, 0, 0]], 1.0)
    be = make_backend("bi", p=p, tol=tol)
    F = np.array([0, 0, -1, 0, 0, 0, 0, 0, -1, 0, 0, 0.0])
    return be.operator(P, seed)(F)


def two_sphere_convergence(gaps=(0.5, 0.2, 0.1), orders=(4, 8, 12), p_ref=24) -> list[dict]:
    """|U(p) - U(p_ref)| (max norm over the 12-vector) for each gap and order."""
    rows = []
    for gap in gaps:
        ref = two_sphere_velocity(gap, p_ref)
        for p in orders:
            U = two_sphere_velocity(gap, p)
            rows.append({"gap": gap, "p": p, "err": float(np.abs(U - ref).max()),
                         "convergent": gap > 1.0 / p})
    return rows


def rollover_run(backend="bi", dt=0.1, steps=1000, separation=3.0, p=6, seed=0) -> dict:
    cfg = SimulationConfig(scenario="pair_rollover", separation=separation, collision_ratio=1.01,
                           backend=backend, p=p, dt=dt, steps=steps, eps_tol=1e-5, seed=seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        recs, _ = run_simulation(cfg)
    sig = rollover_signature(recs)
    sig["min_gap"] = min(r.stats["min_gap_after"] for r in recs)
    sig["overlap_warnings"] = sum("overlap" in str(w.message) for w in caught)
    sig["records"] = recs
    return sig


def sediment_final_velocity(dt, eps_tol=1e-5, horizon=10.0, n=64, seed=0, backend="rpy"):
    """Final 6N velocity and mean BBPGD steps of the desk-scale sedimentation cluster."""
    cfg = SimulationConfig(scenario="sediment_cluster", n_particles=n, volume_fraction=0.2,
                           collision_ratio=1.01, backend=backend, dt=dt,
                           steps=int(round(horizon / dt)), eps_tol=eps_tol, seed=seed)
    recs, _ = run_simulation(cfg)
    steps = [r.stats["solver_steps"] for r in recs if r.stats["n_constraints"]]
    return recs[-1].U.ravel(), float(np.mean(steps)) if steps else 0.0, recs


def rel_l2(U, ref):
    return float(np.linalg.norm(U - ref) / np.linalg.norm(ref))


def timestep_study(dts=(0.1, 0.05), dt_ref=0.02, **kw) -> dict:
    ref, _, _ = sediment_final_velocity(dt_ref, **kw)
    errs = {dt: rel_l2(sediment_final_velocity(dt, **kw)[0], ref) for dt in dts}
    return {"errors": errs, "ratio": errs[dts[0]] / errs[dts[1]]}


def tolerance_study(tols=(1e-3, 1e-4, 1e-5, 1e-6), dt=0.1, **kw) -> dict:
    runs = {t: sediment_final_velocity(dt, eps_tol=t, **kw) for t in tols}
    U_tight = runs[min(tols)][0]
    steps = {t: runs[t][1] for t in tols}
    ordered = sorted(tols, reverse=True)
    per_decade = [steps[b] - steps[a] for a, b in zip(ordered, ordered[1:])]
    return {"eps2": rel_l2(runs[max(tols)][0], U_tight), "mean_steps": steps,
            "max_increase_per_decade": float(max(per_decade))}


def random_gapped_configuration(n, rng, box=3.0, gap=1.0, radius_range=(0.6, 1.0)):
    """Random spheres whose surface gaps are at least ``gap`` times the larger radius."""
    for _ in range(100000):
        c = rng.uniform(-box, box, (n, 3))
        a = rng.uniform(*radius_range, n)
        d = np.linalg.norm(c[:, None] - c[None], axis=-1) - a[:, None] - a[None]
        np.fill_diagonal(d, np.inf)
        if np.all(d >= gap * np.maximum(a[:, None], a[None])):
            return ParticleSet.create(c, a, rng=rng)
    raise RuntimeError("could not place spheres; enlarge the box")


def spd_suite(backend, configs=100, n=20, box=6.0, gap=0.0, trials=3, seed=0, sym_tol=1e-10) -> dict:
    """spd_probe over random configurations; BI needs a gap for its discretization
    asymmetry to fall below ``sym_tol`` (see the README)."""
    from .mobility import spd_probe
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst, emin, fails = 0.0, np.inf, 0
    for k in range(configs):
        P = random_gapped_configuration(n, rng, box=box, gap=gap)
        rep = spd_probe(backend, P, trials=trials, rng=[seed, k], sym_tol=sym_tol)
        worst = max(worst, rep.worst_symmetry)
        emin = min(emin, rep.min_energy)
        fails += not rep.passed
    return {"backend": backend.name, "configs": configs, "failures": fails,
            "worst_symmetry": worst, "min_energy": float(emin),
            "seconds": time.perf_counter() - t0}
