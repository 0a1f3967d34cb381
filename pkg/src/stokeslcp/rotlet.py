"""Azimuthal velocity of a uniform disk of rotlets and its edge singularity.

A disk of radius R in the z = 0 plane carries rotlets of number density n,
each with torque T along +z.  At (s, 0, 0) the velocity is along y,

    u(s) = n T / (8 pi eta) * PV int_0^R F(r, s) r dr,

with F the angular integral of the rotlet kernel, which has a closed form in
complete elliptic integrals.  Near the edge u ~ A log(R - s) + B.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad


@dataclass
class RotletDiskModel:
    R: float = 1.0
    n: float = 1.0
    T: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if min(self.R, self.n, self.T, self.eta) <= 0:
            raise ValueError("disk radius, density, torque and viscosity must be positive")


def _agm_terms(m):
    a, b = 1.0, np.sqrt(1.0 - m)
    c2 = [m]
    for _ in range(60):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b, c = 0.5 * (a + b), np.sqrt(a * b), 0.5 * (a - b)
        c2.append(c * c)
    return a, c2


def elliptic_K(m: float) -> float:
    """Complete elliptic integral of the first kind, parameter convention."""
    if not 0.0 <= m < 1.0:
        raise ValueError("K(m) requires 0 <= m < 1")
    a, _ = _agm_terms(m)
    return np.pi / (2.0 * a)


def elliptic_E(m: float) -> float:
    """Complete elliptic integral of the second kind, parameter convention."""
    if not 0.0 <= m <= 1.0:
        raise ValueError("E(m) requires 0 <= m <= 1")
    if m == 1.0:
        return 1.0
    a, c2 = _agm_terms(m)
    s = sum(2.0 ** (k - 1) * c for k, c in enumerate(c2))
    return np.pi / (2.0 * a) * (1.0 - s)


def disk_integrand_F(r: float, s: float) -> float:
    """Closed form of int_0^{2 pi} (s - r cos t) / ((s - r cos t)^2 + r^2 sin^2 t)^{3/2} dt."""
    if r <= 0 or s <= 0:
        raise ValueError("r and s must be positive")
    if r == s:
        raise ValueError("F(r, s) is singular at r = s")
    m = 4.0 * r * s / (r + s) ** 2
    return 2.0 * (elliptic_K(m) / (s * (r + s)) + elliptic_E(m) / (s * (s - r)))


def theta_integral(r: float, s: float) -> float:
    """Direct adaptive quadrature of the angular rotlet integral (test oracle)."""
    f = lambda t: (s - r * np.cos(t)) / ((s - r * np.cos(t)) ** 2 + (r * np.sin(t)) ** 2) ** 1.5
    with warnings.catch_warnings():
        # requested accuracy is near roundoff; the result is still good to ~1e-13
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(f, 0.0, np.pi, epsabs=0.0, epsrel=1e-13, limit=400)
    return 2.0 * val


def _window(s, delta):
    # integral of the log part of r F over [s - delta, s + delta]; the 1/(r - s)
    # poles cancel exactly across the symmetric window
    c = -np.log(1.0 / (4 * s * s)) - 4.0 + 4.0 * np.log(2.0)
    return (-4.0 * (delta * np.log(delta) - delta) + 2.0 * c * delta) / (2.0 * s)


def _pv_integral(s, R, delta):
    g = lambda r: r * disk_integrand_F(r, s) + 2.0 / (r - s)
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=500)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        left, _ = quad(g, 0.0, s - delta, **opts)
        right, _ = quad(g, s + delta, R, **opts)
    # the subtracted pole -2/(r - s) integrates to -2 log((R - s)/s) in the PV sense
    return left + right + _window(s, delta) - 2.0 * np.log((R - s) / s)


def u_theta_pv(model: RotletDiskModel, s: float, delta: float | None = None,
               check: bool = True) -> float:
    """Principal-value azimuthal velocity at radius s inside the disk."""
    R = model.R
    if not 0.0 < s < R:
        raise ValueError("s must satisfy 0 < s < R")
    if delta is None:
        delta = min(1e-4 * R, 0.25 * s, 0.25 * (R - s))
    val = _pv_integral(s, R, delta)
    if check:
        half = _pv_integral(s, R, 0.5 * delta)
        if abs(half - val) > 1e-6 * max(1.0, abs(val)):
            raise RuntimeError(f"principal value not converged in delta at s={s}")
        val = half
    return model.n * model.T / (8 * np.pi * model.eta) * val


def disk_oracle(model: RotletDiskModel, s: float) -> float:
    """Independent value of u(s) from target-centred polar coordinates.

    With y = x + rho (cos psi, sin psi) the kernel reduces to -cos(psi)/rho;
    the rho integral is logarithmic and the divergent part integrates to zero
    over psi, leaving -int cos(psi) log rho_max(psi) dpsi.
    """
    R = model.R
    rho = lambda p: -s * np.cos(p) + np.sqrt(R * R - (s * np.sin(p)) ** 2)
    val, _ = quad(lambda p: -np.cos(p) * np.log(rho(p)), 0.0, np.pi,
                  epsabs=0.0, epsrel=1e-13, limit=400)
    return model.n * model.T / (8 * np.pi * model.eta) * 2.0 * val


def fit_edge_log(s, u, R, with_correction: bool = False):
    """Least-squares fit u = A log(R - s) + B [+ C (R - s) log(R - s)].

    Returns (A, B) and the residual norm (or (A, B, C) and residual).
    """
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    if s.size < 3 or np.any(s >= R):
        raise ValueError("need >= 3 samples with s < R")
    if np.ptp(s) == 0:
        raise ValueError("degenerate design: all samples at the same s")
    L = np.log(R - s)
    cols = [L, np.ones_like(L)]
    if with_correction:
        cols.append((R - s) * L)
    X = np.stack(cols, -1)
    coef, *_ = np.linalg.lstsq(X, u, rcond=None)
    res = float(np.linalg.norm(X @ coef - u))
    return tuple(coef), res
