"""Matrix-free solvers for the LCP  gamma >= 0, M gamma + q >= 0, gamma . (M gamma + q) = 0.

For symmetric positive (semi)definite M this is the convex QP
min 1/2 gamma^T M gamma + q^T gamma over gamma >= 0.  Every call of the
operator counts as one matrix-vector operation (MVOP); with mobility
backends in the loop that is one full mobility solve.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class SolveStats:
    steps: int = 0
    mvops: int = 0
    residual: float = np.inf
    converged: bool = False


@dataclass
class CqpProblem:
    apply_M: Callable[[np.ndarray], np.ndarray]
    q: np.ndarray
    tol: float = 1e-5
    max_iter: int = 1000
    gamma0: np.ndarray | None = None
    _count: int = field(default=0, repr=False)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if not np.all(np.isfinite(self.q)):
            raise ValueError("q must be finite")
        if self.gamma0 is None:
            self.gamma0 = np.zeros_like(self.q)
        self.gamma0 = np.maximum(np.asarray(self.gamma0, dtype=float), 0.0)

    @property
    def n(self) -> int:
        return self.q.size

    def matvec(self, x) -> np.ndarray:
        self._count += 1
        y = np.asarray(self.apply_M(x), dtype=float)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite value in M gamma")
        return y


def dense_problem(M, q, **kw) -> CqpProblem:
    M = np.asarray(M, dtype=float)
    return CqpProblem(lambda x: M @ x, q, **kw)


def min_map_residual(gamma, g) -> float:
    gamma = np.asarray(gamma, dtype=float)
    g = np.asarray(g, dtype=float)
    if gamma.shape != g.shape:
        raise ValueError("gamma and g must have equal length")
    return float(np.linalg.norm(np.minimum(gamma, g)))


def _finish(prob, gamma, res, steps, converged):
    stats = SolveStats(steps=steps, mvops=prob._count, residual=res, converged=converged)
    if not converged:
        warnings.warn(f"LCP solver stopped at residual {res:.3e} after {steps} steps",
                      RuntimeWarning, stacklevel=3)
    return gamma, stats


def _objective(gamma, g, q):
    # f = 1/2 gamma^T M gamma + q^T gamma, with M gamma = g - q
    return 0.5 * gamma @ (g + q)


def solve_bbpgd(prob: CqpProblem, mode: str = "bb1", nonmonotone: int | None = 10):
    """Barzilai-Borwein projected gradient descent.

    ``mode`` is ``bb1`` (default), ``bb2`` or ``alt`` (alternating).  When
    s^T y <= 0 the step falls back to the Cauchy step g^T g / g^T M g.

    Plain projected BB can cycle on ill-conditioned problems.  With
    ``nonmonotone=m`` a trial point that fails the nonmonotone Armijo test
    against the max of the last m objective values is pulled back along the
    projected direction.  Because M is linear the gradient there is
    g + lam (g_trial - g), so the safeguard costs no extra MVOPs.
    ``nonmonotone=None`` gives the unsafeguarded iteration.
    Returns the best iterate found and its SolveStats.
    """
    if mode not in ("bb1", "bb2", "alt"):
        raise ValueError(f"unknown BB mode {mode!r}")
    prob._count = 0
    q = prob.q
    gamma = prob.gamma0.copy()
    if prob.n == 0:
        return gamma, SolveStats(0, 0, 0.0, True)
    g = prob.matvec(gamma) + q
    res = min_map_residual(gamma, g)
    if res < prob.tol:
        return _finish(prob, gamma, res, 0, True)
    best, best_res = gamma, res
    hist = [_objective(gamma, g, q)]

    gMg = g @ prob.matvec(g)
    alpha = (g @ g) / gMg if gMg > 0 else 1.0
    for j in range(1, prob.max_iter + 1):
        new = np.maximum(gamma - alpha * g, 0.0)
        g_new = prob.matvec(new) + q
        res = min_map_residual(new, g_new)
        if res < prob.tol:
            return _finish(prob, new, res, j, True)
        if nonmonotone:
            d = new - gamma
            gd = g @ d
            dMd = d @ (g_new - g)
            f_ref = max(hist[-nonmonotone:])
            f0 = hist[-1]
            lam = 1.0
            while f0 + lam * gd + 0.5 * lam * lam * dMd > f_ref + 1e-4 * lam * gd and lam > 1e-10:
                # minimizer of the exact quadratic along d, kept inside [0.1, 0.5] lam
                lam_q = -gd / dMd if dMd > 0 else 0.5 * lam
                lam = min(max(lam_q, 0.1 * lam), 0.5 * lam)
            if lam < 1.0:
                new = gamma + lam * d
                g_new = g + lam * (g_new - g)
                res = min_map_residual(new, g_new)
                if res < prob.tol:
                    return _finish(prob, new, res, j, True)
            hist.append(_objective(new, g_new, q))
        if res < best_res:
            best, best_res = new, res
        s = new - gamma
        y = g_new - g
        sy = s @ y
        gamma, g = new, g_new
        if sy > 0:
            use_bb2 = mode == "bb2" or (mode == "alt" and j % 2 == 0)
            alpha = sy / (y @ y) if use_bb2 else (s @ s) / sy
        else:
            gMg = g @ prob.matvec(g)
            if gMg > 0:
                alpha = (g @ g) / gMg
    return _finish(prob, best, best_res, prob.max_iter, False)


def solve_apgd(prob: CqpProblem):
    """Accelerated projected gradient descent with adaptive Lipschitz estimate."""
    prob._count = 0
    q = prob.q
    gamma = prob.gamma0.copy()
    if prob.n == 0:
        return gamma, SolveStats(0, 0, 0.0, True)
    Mgamma = prob.matvec(gamma)
    res = min_map_residual(gamma, Mgamma + q)
    if res < prob.tol:
        return _finish(prob, gamma, res, 0, True)
    best, best_res = gamma, res

    probe = np.ones_like(gamma)
    diff = gamma - probe
    L = np.linalg.norm(Mgamma - prob.matvec(probe)) / np.linalg.norm(diff)
    L = L if L > 0 else 1.0
    y, My = gamma.copy(), Mgamma
    theta = 1.0
    for j in range(1, prob.max_iter + 1):
        g = My + q
        while True:
            new = np.maximum(y - g / L, 0.0)
            Mnew = prob.matvec(new)
            d = new - y
            # for a quadratic f(new) - f(y) - g.d = d^T M d / 2 exactly
            if d @ (Mnew - My) <= L * (d @ d) * (1.0 + 1e-12):
                break
            L *= 2.0
        res = min_map_residual(new, Mnew + q)
        if res < best_res:
            best, best_res = new, res
        if res < prob.tol:
            return _finish(prob, new, res, j, True)
        theta_new = 0.5 * (-theta ** 2 + theta * np.sqrt(theta ** 2 + 4.0))
        beta = theta * (1.0 - theta) / (theta ** 2 + theta_new)
        if g @ (new - gamma) > 0:
            y, My = new.copy(), Mnew
            theta_new = 1.0
        else:
            y = new + beta * (new - gamma)
            My = Mnew + beta * (Mnew - Mgamma)
        gamma, Mgamma = new, Mnew
        theta = theta_new
        L *= 0.9
    return _finish(prob, best, best_res, prob.max_iter, False)


def enumerate_lcp_oracle(M, q) -> np.ndarray:
    """Exact LCP solution by trying every active set (n <= 14)."""
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    if n > 14:
        raise ValueError("enumeration oracle limited to n <= 14")
    scale = 1e-10 * (1.0 + np.abs(q).max(initial=0.0))
    for k in range(n + 1):
        for S in itertools.combinations(range(n), k):
            S = list(S)
            gamma = np.zeros(n)
            if S:
                try:
                    gamma[S] = np.linalg.solve(M[np.ix_(S, S)], -q[S])
                except np.linalg.LinAlgError:
                    continue
                if np.any(gamma[S] < -scale):
                    continue
            w = M @ gamma + q
            off = np.setdiff1d(np.arange(n), S)
            if np.all(w[off] >= -scale):
                return np.maximum(gamma, 0.0)
    raise ValueError("no feasible active set; M is probably not positive definite")


def error_bound_abs(phi: float, normM: float, lam_min: float) -> float:
    """Absolute error bound (||M|| + 1) / lambda_min * phi for SPD M."""
    if lam_min <= 0:
        raise ValueError("lambda_min must be positive")
    return (normM + 1.0) / lam_min * phi


def complementarity_report(prob: CqpProblem, gamma) -> dict:
    """Post-solve certificate, one extra MVOP."""
    w = prob.apply_M(gamma) + prob.q
    return {
        "min_gamma": float(gamma.min(initial=0.0)),
        "min_w": float(w.min(initial=0.0)),
        "gap": float(abs(gamma @ w)),
        "phi": min_map_residual(gamma, w),
    }
