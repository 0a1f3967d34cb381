"""Post-hoc analyses of trajectory records: azimuthal velocity distributions,
constraint lifetimes and solver statistics.

Functions accept in-memory ``StepRecord`` lists or records re-read from an
output directory with ``load_records``.
"""
from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .sim import StepRecord


def load_records(out_dir) -> list[StepRecord]:
    """Rebuild step records from trajectory.csv, constraints.csv and solver_stats.csv."""
    traj = np.loadtxt(os.path.join(out_dir, "trajectory.csv"), delimiter=",", skiprows=1, ndmin=2)
    cons_path = os.path.join(out_dir, "constraints.csv")
    cons = np.loadtxt(cons_path, delimiter=",", skiprows=1, ndmin=2)
    stats_path = os.path.join(out_dir, "solver_stats.csv")
    with open(stats_path) as f:
        keys = f.readline().strip().split(",")
    stats = np.loadtxt(stats_path, delimiter=",", skiprows=1, ndmin=2)
    by_step = {int(row[0]): dict(zip(keys, row)) for row in stats}
    records = []
    for step in np.unique(traj[:, 0]).astype(int):
        t = traj[traj[:, 0] == step]
        c = cons[cons[:, 0] == step] if cons.size else np.zeros((0, 8))
        records.append(StepRecord(
            step=int(step), time=float(t[0, 1]), gid=t[:, 2].astype(np.int64),
            centers=t[:, 3:6], quats=t[:, 6:10], U=t[:, 10:16], collision_force=t[:, 16:19],
            pair_gid=c[:, 1:3].astype(np.int64), phi=c[:, 3], gamma=c[:, 4], normals=c[:, 5:8],
            stats=by_step.get(int(step), {})))
    return records


@dataclass
class VelocityDistribution:
    P: np.ndarray          # (n_r, n_u) density
    r_edges: np.ndarray
    u_edges: np.ndarray
    r: np.ndarray          # raw samples
    u_theta: np.ndarray


def azimuthal_samples(records, axis=(0.0, 0.0, 1.0), center=None):
    """(r, U_theta) for every particle and record about an axis through the centroid."""
    e = np.asarray(axis, dtype=float)
    e = e / np.linalg.norm(e)
    rs, us = [], []
    for rec in records:
        c = rec.centers.mean(axis=0) if center is None else np.asarray(center, dtype=float)
        x = rec.centers - c
        rvec = x - np.outer(x @ e, e)
        r = np.linalg.norm(rvec, axis=1)
        that = np.cross(e, rvec)
        with np.errstate(invalid="ignore", divide="ignore"):
            that = np.where(r[:, None] > 0, that / r[:, None], 0.0)
        rs.append(r)
        us.append(np.einsum("ij,ij->i", rec.U[:, :3], that))
    return np.concatenate(rs), np.concatenate(us)


def analyze_velocity_distribution(records, axis=(0.0, 0.0, 1.0), center=None,
                                  r_bins=20, u_bins=40) -> VelocityDistribution:
    """2D histogram P(U_theta, r) normalized so sum P 2 pi r dr dU = 1."""
    if not records:
        raise ValueError("no records")
    r, u = azimuthal_samples(records, axis, center)
    H, re, ue = np.histogram2d(r, u, bins=[r_bins, u_bins])
    if np.ptp(ue) == 0:
        ue = np.array([ue[0] - 0.5, ue[0] + 0.5])
    rc = 0.5 * (re[1:] + re[:-1])
    dr = np.diff(re)
    du = np.diff(ue)
    norm = H.sum() * 2 * np.pi * rc[:, None] * dr[:, None] * du[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(norm > 0, H / norm, 0.0)
    return VelocityDistribution(P, re, ue, r, u)


def ridge_correlation(dist: VelocityDistribution, r_max=None, min_count=1):
    """Pearson correlation of the per-bin mean U_theta with r, plus the fitted slope.

    Bins with centres above ``r_max`` (the cluster bulk boundary) are ignored.
    """
    re = dist.r_edges
    rc = 0.5 * (re[1:] + re[:-1])
    idx = np.clip(np.searchsorted(re, dist.r, side="right") - 1, 0, rc.size - 1)
    sums = np.bincount(idx, dist.u_theta, rc.size)
    counts = np.bincount(idx, minlength=rc.size)
    keep = counts >= min_count
    if r_max is not None:
        keep &= rc <= r_max
    if keep.sum() < 3:
        raise ValueError("too few populated bins for a ridge fit")
    x, y = rc[keep], sums[keep] / counts[keep]
    # no spread in U_theta means no ridge to correlate with
    corr = float(np.corrcoef(x, y)[0, 1]) if np.ptp(y) > 0 else np.nan
    slope = float(x @ y / (x @ x))
    return corr, slope


def _runs(steps_present, step_list):
    """Lengths of maximal runs of consecutive recorded steps."""
    pos = {s: k for k, s in enumerate(step_list)}
    idx = sorted(pos[s] for s in steps_present)
    out, start, prev = [], None, None
    for k in idx:
        if start is None:
            start = prev = k
        elif k == prev + 1:
            prev = k
        else:
            out.append(prev - start + 1)
            start = prev = k
    if start is not None:
        out.append(prev - start + 1)
    return out


def constraint_lifetimes(records):
    """Lifetimes (in recorded steps) for the candidate set A and the active set A_c."""
    step_list = [r.step for r in records]
    seen_all, seen_act = defaultdict(list), defaultdict(list)
    for r in records:
        for (gi, gj), g in zip(map(tuple, r.pair_gid), r.gamma):
            seen_all[(int(gi), int(gj))].append(r.step)
            if g > 0:
                seen_act[(int(gi), int(gj))].append(r.step)
    life_all = [L for s in seen_all.values() for L in _runs(s, step_list)]
    life_act = [L for s in seen_act.values() for L in _runs(s, step_list)]
    return np.asarray(life_all, dtype=int), np.asarray(life_act, dtype=int)


def constraint_lifetime_histogram(records):
    """P(k) for k = 0..k_max for A and A_c, each normalized to sum 1 (zeros if empty)."""
    k_max = len(records)
    la, lc = constraint_lifetimes(records)
    out = []
    for life in (la, lc):
        h = np.bincount(life, minlength=k_max + 1).astype(float)[:k_max + 1]
        out.append(h / h.sum() if h.sum() else h)
    return np.arange(k_max + 1), out[0], out[1]


def solver_summary(records) -> dict:
    st = [r.stats for r in records]
    steps = np.array([float(s.get("solver_steps", 0)) for s in st])
    mv = np.array([float(s.get("mvops", 0)) for s in st])
    nc = np.array([float(s.get("n_constraints", 0)) for s in st])
    na = np.array([float(s.get("n_active", 0)) for s in st])
    return {"records": len(st), "mean_steps": float(steps.mean()), "max_steps": float(steps.max()),
            "mean_mvops": float(mv.mean()), "mean_constraints": float(nc.mean()),
            "mean_active": float(na.mean())}


def rollover_signature(records, apex_window=0.25, near_zero=0.1) -> dict:
    """Four-stage contact-force signature of the two-sphere roll-over.

    approach: gamma = 0 before first contact; contact: gamma > 0 afterwards;
    apex: where the centres are within ``apex_window`` of vertical alignment,
    min gamma <= ``near_zero`` times the peak; separation: gamma = 0 over the
    final tenth of the run after the x order of the spheres has flipped.
    """
    g = np.array([r.gamma.max() if r.gamma.size else 0.0 for r in records])
    order = [np.argsort(r.gid) for r in records]
    dx = np.array([r.centers[o[1], 0] - r.centers[o[0], 0] for r, o in zip(records, order)])
    hit = np.nonzero(g > 0)[0]
    out = {"approach": False, "contact": False, "apex": False, "separation": False,
           "peak_gamma": float(g.max()), "apex_gamma": np.nan}
    if hit.size == 0:
        return out
    k1 = hit[0]
    out["approach"] = bool(k1 > 0 and np.all(g[:k1] == 0))
    out["contact"] = bool(g[k1:].max() > 0)
    win = np.abs(dx) < apex_window
    if win.any():
        out["apex_gamma"] = float(g[win].min())
        out["apex"] = bool(g[win].min() <= near_zero * g.max())
    tail = slice(int(0.9 * len(g)), None)
    out["separation"] = bool(np.all(g[tail] == 0) and np.sign(dx[-1]) != np.sign(dx[0]))
    return out
