"""Checks shared by the simulation, CLI and acceptance tests."""
import numpy as np

from stokeslcp.vsh import eval_single_layer_exterior


def certificate_violations(records, eps_tol):
    """Steps breaking gamma >= 0, w >= -eps_tol, or phi < eps_tol when converged."""
    bad = []
    for r in records:
        s = r.stats
        if r.gamma.size and r.gamma.min() < 0:
            bad.append((r.step, "gamma"))
        if s["n_constraints"] and s["min_w"] < -eps_tol:
            bad.append((r.step, "w"))
        if s["n_constraints"] and s["converged"] and s.get("phi_certificate", 0.0) >= eps_tol:
            bad.append((r.step, "phi"))
    return bad


def newton_violations(records, tol=1e-12):
    return [r.step for r in records if r.stats["net_force_rel"] > tol]


def max_overlap(records):
    return max(0.0, -min(r.stats["min_gap_after"] for r in records))


def fd_traction(F, x, nrm):
    """Traction from a 6th-order central difference of the single-layer velocity."""
    h = 2e-2 * (np.linalg.norm(x - F.center) - F.radius)
    grad = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        us = [eval_single_layer_exterior(F, (x + k * e)[None])[0][0] for k in (-3, -2, -1, 1, 2, 3)]
        grad[:, j] = (-us[0] + 9 * us[1] - 45 * us[2] + 45 * us[3] - 9 * us[4] + us[5]) / (60 * h)
    pr = eval_single_layer_exterior(F, x[None])[1][0]
    return (-pr * np.eye(3) + F.viscosity * (grad + grad.T)) @ nrm
