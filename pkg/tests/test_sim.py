import os

import numpy as np
import pytest

from helpers import certificate_violations, newton_violations
from stokeslcp.analysis import (analyze_velocity_distribution, constraint_lifetime_histogram,
                                constraint_lifetimes, load_records, ridge_correlation,
                                rollover_signature, solver_summary)
from stokeslcp.kinematics import ParticleSet
from stokeslcp.scenarios import (hex_spacing, lattice_area_fraction, pair_rollover,
                                 rotor_cluster, rotor_monolayer, rotor_sheet, scenario_generate,
                                 sediment_cluster)
from stokeslcp.sim import SimulationConfig, StepRecord, advance, min_gap, run_simulation


def pair_dists(P):
    d = np.linalg.norm(P.centers[:, None] - P.centers[None], axis=-1)
    d -= P.radius_collision[:, None] + P.radius_collision[None]
    np.fill_diagonal(d, np.inf)
    return d


# ---- scenarios -----------------------------------------------------------------

def test_sediment_cluster_geometry():
    sc = sediment_cluster(100, 0.2, seed=3)
    P = sc.particles
    R = sc.meta["cluster_radius"]
    assert P.n == 100 and pair_dists(P).min() >= 0
    assert 100 * P.radius[0] ** 3 / R ** 3 == pytest.approx(0.2)
    assert np.all(np.linalg.norm(P.centers, axis=1) + P.radius_collision <= R + 1e-12)
    np.testing.assert_array_equal(sc.external[:, 2], -1)
    assert np.all(sc.external[:, [0, 1, 3, 4, 5]] == 0)
    with pytest.raises(ValueError):
        sediment_cluster(10, 0.5)


def test_rotor_monolayer_area_fraction():
    sc = rotor_monolayer(200, 0.6, seed=1)
    P = sc.particles
    assert lattice_area_fraction(P) == pytest.approx(0.6, rel=0.02)
    np.testing.assert_array_equal(P.centers[:, 2], 0)
    np.testing.assert_allclose(P.centers.mean(axis=0), 0, atol=1e-12)
    assert pair_dists(P).min() >= 0
    np.testing.assert_array_equal(sc.external[:, 5], 1)


def test_rotor_sheet_torque_in_plane():
    sc = rotor_sheet(49, 0.5)
    np.testing.assert_array_equal(sc.external[:, 4], 1)
    np.testing.assert_array_equal(sc.external[:, 5], 0)
    assert lattice_area_fraction(sc.particles) == pytest.approx(0.5, rel=0.02)
    with pytest.raises(ValueError):
        rotor_sheet(49, 0.9)


def test_hex_spacing_area():
    d = hex_spacing(1.0, 0.6)
    assert np.pi / (np.sqrt(3) / 2 * d * d) == pytest.approx(0.6)


def test_rotor_cluster_polydisperse():
    sc = rotor_cluster(150, 0.1, seed=2)
    a = sc.particles.radius
    assert np.median(np.log(a)) == pytest.approx(0.0, abs=0.1)
    assert np.std(np.log(a)) == pytest.approx(0.3, abs=0.05)
    assert np.sum(a ** 3) / sc.meta["cluster_radius"] ** 3 == pytest.approx(0.1)
    assert pair_dists(sc.particles).min() >= 0


def test_pair_rollover_layout():
    sc = pair_rollover(separation=6, offset=1)
    np.testing.assert_allclose(sc.particles.centers, [[-3, 0, 0], [3, 0, 1]])
    np.testing.assert_array_equal(sc.external[:, 0], [1, -1])


def test_scenario_determinism_and_errors():
    a = scenario_generate("sediment_cluster", {"n": 30}, 9)
    b = scenario_generate("sediment_cluster", {"n": 30}, 9)
    np.testing.assert_array_equal(a.particles.centers, b.particles.centers)
    np.testing.assert_array_equal(a.particles.quats, b.particles.quats)
    with pytest.raises(ValueError, match="unknown scenario"):
        scenario_generate("nope", {}, 0)


# ---- configuration ---------------------------------------------------------------

def test_config_file_round_trip(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("scenario = pair_rollover  # comment\ndt = 0.1\nsteps = 3\nwall_z = none\n")
    cfg = SimulationConfig.from_file(f)
    assert cfg.scenario == "pair_rollover" and cfg.dt == 0.1 and cfg.steps == 3 and cfg.wall_z is None
    assert "dt = 0.10000000000000001" in cfg.manifest()
    # the output location must not leak into otherwise identical runs
    assert SimulationConfig(output_dir="a").manifest() == SimulationConfig(output_dir="b").manifest()


@pytest.mark.parametrize("bad", [{"dt": "0"}, {"steps": "0"}, {"backend": "fmm"}, {"solver": "x"},
                                 {"collision_ratio": "0.9"}, {"frobnicate": "1"}])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SimulationConfig.from_mapping(bad)


# ---- stepping ---------------------------------------------------------------------

def test_zero_force_is_stationary():
    cfg = SimulationConfig(scenario="sediment_cluster", n_particles=20, force=0.0, steps=3)
    sc = scenario_generate("sediment_cluster", cfg.scenario_params(), 0)
    recs, P = run_simulation(cfg, sc)
    np.testing.assert_array_equal(P.centers, sc.particles.centers)
    assert all(np.all(r.U == 0) for r in recs)


def test_head_on_pair_stops_at_contact():
    P = ParticleSet.create([[-1.2, 0, 0], [1.2, 0, 0]], 1.0, 1.0)
    ext = np.zeros((2, 6))
    ext[0, 0], ext[1, 0] = 1, -1
    cfg = SimulationConfig(backend="local", dt=0.5, eps_tol=1e-10)
    from stokeslcp.mobility import make_backend
    be = make_backend("local")
    for k in range(20):
        res = advance(P, ext, cfg, be, k)
        P = res.particles
    assert min_gap(P) == pytest.approx(0.0, abs=1e-9)
    # contact force balances the drag: gamma = F
    assert res.record.gamma[0] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("backend", ["local", "rpy"])
def test_sediment_run_certificates_and_newton(backend):
    # a floor makes the cluster pile up so contacts form
    cfg = SimulationConfig(scenario="sediment_cluster", n_particles=40, volume_fraction=0.2,
                           backend=backend, dt=1.0, steps=30, eps_tol=1e-6, wall_z=-6.2)
    recs, _ = run_simulation(cfg)
    assert any(r.stats["n_active"] for r in recs)
    assert certificate_violations(recs, cfg.eps_tol) == []
    assert newton_violations(recs) == []
    assert min(r.stats["min_gap_after"] for r in recs) > -1e-3


def test_wall_reaction_balances_particles():
    cfg = SimulationConfig(scenario="sediment_cluster", n_particles=20, backend="rpy", dt=0.2,
                           steps=25, wall_z=-6.0, eps_tol=1e-8)
    recs, _ = run_simulation(cfg)
    walled = [r for r in recs if np.any(r.pair_gid[:, 1] < 0) and r.gamma.max() > 0]
    assert walled
    for r in walled:
        Fp = r.collision_force.sum(axis=0)
        np.testing.assert_allclose(Fp, -r.stats["wall_reaction"], atol=1e-12 * np.abs(r.collision_force).sum())
    assert newton_violations(recs) == []
    assert certificate_violations(recs, cfg.eps_tol) == []


def test_apgd_solver_option():
    cfg = SimulationConfig(scenario="sediment_cluster", n_particles=30, volume_fraction=0.2,
                           solver="apgd", dt=0.1, steps=5)
    recs, _ = run_simulation(cfg)
    assert certificate_violations(recs, cfg.eps_tol) == []


def test_overlap_warning_on_huge_step():
    P = ParticleSet.create([[-1.1, 0, 0], [1.1, 0, 0], [0, 5, 0]], 1.0, 1.0)
    ext = np.zeros((3, 6))
    ext[2, 1] = -100.0
    from stokeslcp.mobility import make_backend
    cfg = SimulationConfig(backend="local", dt=1.0)
    with pytest.warns(RuntimeWarning, match="overlap"):
        advance(P, ext, cfg, make_backend("local"), 0)


def test_determinism_in_memory():
    cfg = SimulationConfig(scenario="sediment_cluster", n_particles=25, volume_fraction=0.2,
                           dt=0.1, steps=4, seed=4)
    a, Pa = run_simulation(cfg)
    b, Pb = run_simulation(cfg)
    np.testing.assert_array_equal(Pa.centers, Pb.centers)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.gamma, rb.gamma)


def test_records_round_trip(tmp_path):
    cfg = SimulationConfig(scenario="sediment_cluster", n_particles=25, volume_fraction=0.2,
                           dt=0.1, steps=4, output_dir=str(tmp_path / "out"), cadence=2)
    recs, _ = run_simulation(cfg)
    assert len(recs) == 2
    assert sorted(os.listdir(tmp_path / "out")) == ["constraints.csv", "manifest.txt",
                                                     "solver_stats.csv", "trajectory.csv"]
    back = load_records(tmp_path / "out")
    for r, s in zip(recs, back):
        o = np.argsort(r.gid)
        np.testing.assert_array_equal(r.centers[o], s.centers)
        np.testing.assert_array_equal(r.U[o], s.U)
        np.testing.assert_array_equal(r.gamma, s.gamma)
        assert s.stats["solver_steps"] == r.stats["solver_steps"]


# ---- analysis -----------------------------------------------------------------------

def fake_record(step, centers, U=None, pairs=(), gamma=()):
    n = len(centers)
    U = np.zeros((n, 6)) if U is None else U
    pg = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    g = np.asarray(gamma, dtype=float)
    return StepRecord(step, float(step), np.arange(n), np.asarray(centers, float),
                      np.tile([1.0, 0, 0, 0], (n, 1)), U, np.zeros((n, 3)), pg,
                      np.zeros(g.size), g, np.zeros((g.size, 3)),
                      {"solver_steps": 2, "mvops": 3, "n_constraints": g.size, "n_active": int((g > 0).sum())})


def test_rigid_rotation_ridge(rng):
    c = rng.uniform(-5, 5, size=(300, 3))
    c -= c.mean(axis=0)
    U = np.zeros((300, 6))
    U[:, :3] = np.cross([0, 0, 0.7], c)
    d = analyze_velocity_distribution([fake_record(0, c, U)], r_bins=10)
    corr, slope = ridge_correlation(d)
    # per-bin mean speed against bin centre: exact only up to the in-bin spread of r
    assert corr > 0.999
    assert slope == pytest.approx(0.7, rel=1e-2)
    np.testing.assert_allclose(d.u_theta, 0.7 * d.r, atol=1e-12)
    rc = 0.5 * (d.r_edges[1:] + d.r_edges[:-1])
    total = (d.P * 2 * np.pi * rc[:, None] * np.diff(d.r_edges)[:, None] * np.diff(d.u_edges)[None]).sum()
    assert total == pytest.approx(1.0)


def test_zero_velocity_distribution(rng):
    d = analyze_velocity_distribution([fake_record(0, rng.normal(size=(50, 3)))])
    np.testing.assert_array_equal(d.u_theta, 0)
    assert np.all(np.isfinite(d.P))
    with pytest.raises(ValueError):
        analyze_velocity_distribution([])


def test_lifetime_synthetic():
    recs = []
    for k in range(10):
        on = 3 <= k <= 7
        recs.append(fake_record(k, np.zeros((2, 3)), pairs=[(0, 1)] if on else [],
                                gamma=[0.5 if on else 0.0] if on else []))
    la, lc = constraint_lifetimes(recs)
    np.testing.assert_array_equal(la, [5])
    np.testing.assert_array_equal(lc, [5])
    k, pa, pc = constraint_lifetime_histogram(recs)
    assert pa[5] == 1 and pc[5] == 1 and pa.sum() == 1


def test_lifetime_static_and_inactive():
    recs = [fake_record(k, np.zeros((2, 3)), pairs=[(0, 1)], gamma=[0.0]) for k in range(4)]
    la, lc = constraint_lifetimes(recs)
    np.testing.assert_array_equal(la, [4])
    assert lc.size == 0
    _, _, pc = constraint_lifetime_histogram(recs)
    assert pc.sum() == 0
    s = solver_summary(recs)
    assert s["mean_steps"] == 2 and s["records"] == 4


def test_rollover_signature_synthetic():
    recs = []
    g_seq = [0, 0, 0.5, 1.0, 0.5, 0.6, 0.4, 0.02, 0.3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
    for k, g in enumerate(g_seq):
        dx = 2.0 - 0.3 * k
        c = np.array([[0, 0, 0], [dx, 0, 1.0]])
        recs.append(fake_record(k, c, pairs=[(0, 1)], gamma=[g]))
    sig = rollover_signature(recs, apex_window=0.2)
    assert sig["approach"] and sig["contact"] and sig["apex"] and sig["separation"]
    assert sig["peak_gamma"] == 1.0
