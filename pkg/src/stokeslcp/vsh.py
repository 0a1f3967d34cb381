"""Scalar and vector spherical harmonics on a Gauss-Legendre x uniform grid.

Conventions
-----------
Y_n^m(theta, phi) = Pbar_n^m(cos theta) e^{i m phi}, orthonormal on the unit
sphere, Condon-Shortley phase included, Y_n^{-m} = (-1)^m conj(Y_n^m).

G = grad_surface Y,  V = G - (n+1) Y e_r,  W = G + n Y e_r,  X = e_r x G.
A vector field is rho = sum_nm a V + b W + c X with a = <rho, V>/|V|^2 etc.
Internally, fields are real so only m >= 0 is stored ("half" layout, modes
flattened in the order n = 0..p, m = 0..n); the full layout indexes
coefficients as ``coef[n, m + p]``.

Single-layer maps are written for the unit sphere with unit viscosity.  For a
sphere of radius a and viscosity eta the velocity is (a / eta) u'(x / a), and
pressure, stress and traction are unscaled functions of x / a.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

POLE_EPS = 1e-6


def legendre_table(p: int, x, s=None):
    """Normalized associated Legendre functions and their theta derivatives.

    Returns (P, dP), each shaped (p+1, p+1, T) and indexed [n, m, t] for
    m >= 0 (zero when m > n).  ``s`` is sin(theta); pass it explicitly to keep
    full precision near the poles.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x)) if s is None else np.atleast_1d(np.asarray(s, dtype=float))
    T = x.size
    P = np.zeros((p + 2, p + 2, T))
    P[0, 0] = 1.0 / np.sqrt(4 * np.pi)
    for m in range(1, p + 1):
        P[m, m] = -np.sqrt((2 * m + 1) / (2 * m)) * s * P[m - 1, m - 1]
    for m in range(0, p):
        P[m + 1, m] = np.sqrt(2 * m + 3) * x * P[m, m]
    for m in range(0, p + 1):
        for n in range(m + 2, p + 1):
            a = np.sqrt((4 * n * n - 1) / (n * n - m * m))
            b = np.sqrt(((n - 1) ** 2 - m * m) / (4 * (n - 1) ** 2 - 1))
            P[n, m] = a * (x * P[n - 1, m] - b * P[n - 2, m])
    dP = np.zeros((p + 1, p + 1, T))
    for n in range(1, p + 1):
        dP[n, 0] = np.sqrt(n * (n + 1)) * P[n, 1]
        for m in range(1, n + 1):
            up = np.sqrt((n - m) * (n + m + 1)) * P[n, m + 1]
            down = np.sqrt((n + m) * (n - m + 1)) * P[n, m - 1]
            dP[n, m] = 0.5 * (up - down)
    return P[: p + 1, : p + 1], dP


def eval_Ynm(n: int, m: int, theta, phi):
    """Orthonormal spherical harmonic Y_n^m (Condon-Shortley phase)."""
    if abs(m) > n or n < 0:
        raise ValueError(f"need |m| <= n, got n={n}, m={m}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    P, _ = legendre_table(n, np.cos(theta).ravel(), np.sin(theta).ravel())
    val = P[n, abs(m)].reshape(theta.shape) * np.exp(1j * abs(m) * phi)
    if m < 0:
        val = (-1) ** m * np.conj(val)
    return val


def half_modes(p: int):
    """Flattened (n, m) index arrays of the half layout."""
    n = np.concatenate([np.full(k + 1, k) for k in range(p + 1)])
    m = np.concatenate([np.arange(k + 1) for k in range(p + 1)])
    return n, m


class SphGrid:
    """Order-p surface grid on the unit sphere: p+1 Gauss-Legendre nodes in
    cos(theta) and 2p+1 equispaced longitudes starting at phi = 0."""

    def __init__(self, p: int):
        if p < 1:
            raise ValueError("order p must be >= 1")
        self.p = p
        x, w = np.polynomial.legendre.leggauss(p + 1)
        self.cost = x
        self.sint = np.sqrt(1.0 - x * x)
        self.theta = np.arccos(x)
        self.wx = w
        self.nphi = 2 * p + 1
        self.phi = 2 * np.pi * np.arange(self.nphi) / self.nphi
        self.shape = (p + 1, self.nphi)
        self.size = (p + 1) * self.nphi
        self.P, self.dP = legendre_table(p, x, self.sint)
        m = np.arange(p + 1)
        self.mPs = m[None, :, None] * self.P / self.sint
        self.dphi = 2 * np.pi / self.nphi

        c, s = x[:, None], self.sint[:, None]
        cp, sp_ = np.cos(self.phi)[None, :], np.sin(self.phi)[None, :]
        one = np.ones_like(c * cp)
        self.e_r = np.stack([s * cp, s * sp_, c * one], -1).reshape(-1, 3)
        self.e_t = np.stack([c * cp, c * sp_, -s * one], -1).reshape(-1, 3)
        self.e_p = np.stack([-sp_ * one, cp * one, 0 * one], -1).reshape(-1, 3)
        self.points = self.e_r
        self.weights = (w[:, None] * self.dphi * one).ravel()

        self.hn, self.hm = half_modes(p)
        self.nh = self.hn.size
        self._norms = None

    # ---- scalar transforms -------------------------------------------------
    def _check(self, f, trailing=()):
        f = np.asarray(f)
        if f.shape[f.ndim - 2 - len(trailing):] != self.shape + tuple(trailing) and \
                f.shape[f.ndim - 1 - len(trailing):] != (self.size,) + tuple(trailing):
            raise ValueError(f"grid values must have shape {self.shape} or ({self.size},)")
        return f

    def sht_forward(self, f) -> np.ndarray:
        """Full coefficients coef[n, m + p] of a (complex or real) scalar field."""
        f = self._check(f)
        f = f.reshape(f.shape[:-2] + self.shape) if f.shape[-1] == self.size else f
        p = self.p
        F = np.fft.fft(f, axis=-1) * self.dphi
        out = np.zeros(f.shape[:-2] + (p + 1, 2 * p + 1), dtype=complex)
        Fp = F[..., : p + 1]
        Fm = F[..., [(-m) % self.nphi for m in range(p + 1)]]
        wP = self.P * self.wx
        out[..., p:] = np.einsum("nmk,...km->...nm", wP, Fp)
        sign = (-1.0) ** np.arange(p + 1)
        neg = np.einsum("nmk,...km->...nm", wP, Fm) * sign
        out[..., p::-1] = neg
        return out

    def sht_inverse(self, coef) -> np.ndarray:
        """Grid values (p+1, 2p+1) from full coefficients."""
        coef = np.asarray(coef)
        p = self.p
        if coef.shape[-2:] != (p + 1, 2 * p + 1):
            raise ValueError(f"coefficients must have shape {(p + 1, 2 * p + 1)}")
        sign = (-1.0) ** np.arange(p + 1)
        Gp = np.einsum("nmk,...nm->...km", self.P, coef[..., p:])
        Gm = np.einsum("nmk,...nm->...km", self.P * sign[None, :, None], coef[..., p::-1])
        H = np.zeros(coef.shape[:-2] + self.shape, dtype=complex)
        H[..., : p + 1] = Gp
        for m in range(1, p + 1):
            H[..., self.nphi - m] = Gm[..., m]
        return np.fft.ifft(H, axis=-1) * self.nphi

    # ---- vector transforms (half layout, real fields) -----------------------
    def spherical_components(self, vec):
        vec = np.asarray(vec, dtype=float)
        return (np.einsum("...ki,ki->...k", vec, self.e_r),
                np.einsum("...ki,ki->...k", vec, self.e_t),
                np.einsum("...ki,ki->...k", vec, self.e_p))

    def inner_products(self, vec):
        """<rho, V>, <rho, W>, <rho, X> in half layout for a real field (..., K, 3)."""
        p = self.p
        fr, ft, fp = (np.fft.rfft(c.reshape(c.shape[:-1] + self.shape), axis=-1) * self.dphi
                      for c in self.spherical_components(vec))
        wP = self.P * self.wx
        wdP = self.dP * self.wx
        wmPs = self.mPs * self.wx
        A = np.einsum("nmk,...km->...nm", wP, fr)
        B = np.einsum("nmk,...km->...nm", wdP, ft) - 1j * np.einsum("nmk,...km->...nm", wmPs, fp)
        C = np.einsum("nmk,...km->...nm", wdP, fp) + 1j * np.einsum("nmk,...km->...nm", wmPs, ft)
        n = np.arange(p + 1)[:, None]
        V = B - (n + 1) * A
        W = B + n * A
        sel = (self.hn, self.hm)
        return V[(...,) + sel], W[(...,) + sel], C[(...,) + sel]

    def synthesize_amplitudes(self, R, G, X):
        """Real grid field (..., K, 3) from half-layout amplitudes of
        Y e_r, grad Y and e_r x grad Y."""
        p = self.p
        shape = np.shape(R)[:-1]

        def full(h):
            out = np.zeros(shape + (p + 1, p + 1), dtype=complex)
            out[..., self.hn, self.hm] = h
            return out

        R, G, X = full(R), full(G), full(X)
        ur = np.einsum("nmk,...nm->...km", self.P, R)
        ut = np.einsum("nmk,...nm->...km", self.dP, G) - 1j * np.einsum("nmk,...nm->...km", self.mPs, X)
        up = 1j * np.einsum("nmk,...nm->...km", self.mPs, G) + np.einsum("nmk,...nm->...km", self.dP, X)
        vals = [np.fft.irfft(u, n=self.nphi, axis=-1).reshape(shape + (self.size,)) * self.nphi
                for u in (ur, ut, up)]
        return (vals[0][..., None] * self.e_r + vals[1][..., None] * self.e_t
                + vals[2][..., None] * self.e_p)

    @property
    def norms(self):
        """Quadrature values of |V_n|^2, |W_n|^2, |X_n|^2 (m-independent)."""
        if self._norms is None:
            V2 = np.zeros(self.p + 1)
            W2 = np.zeros(self.p + 1)
            X2 = np.zeros(self.p + 1)
            for n in range(self.p + 1):
                Y = np.outer(self.P[n, 0], np.ones(self.nphi)).ravel()
                Yt = np.outer(self.dP[n, 0], np.ones(self.nphi)).ravel()
                Gv = Yt[:, None] * self.e_t
                Vv = Gv - (n + 1) * Y[:, None] * self.e_r
                Wv = Gv + n * Y[:, None] * self.e_r
                Xv = Yt[:, None] * self.e_p
                V2[n], W2[n], X2[n] = (np.sum(self.weights * np.sum(v * v, axis=1))
                                       for v in (Vv, Wv, Xv))
            self._norms = (V2, W2, X2)
        return self._norms

    def expansion(self, vec):
        """Half-layout expansion coefficients (a, b, c) of a real field."""
        V, W, X = self.inner_products(vec)
        V2, W2, X2 = self.norms
        n = self.hn
        a = V / V2[n]
        nz = n > 0
        b = np.where(nz, W / np.where(nz, W2[n], 1.0), 0.0)
        c = np.where(nz, X / np.where(nz, X2[n], 1.0), 0.0)
        return a, b, c

    def synthesize(self, a, b, c):
        """Real grid field from half-layout expansion coefficients."""
        n = self.hn
        b = np.where(n > 0, b, 0.0)
        return self.synthesize_amplitudes(-(n + 1) * a + n * b, a + b, c)


@lru_cache(maxsize=16)
def get_grid(p: int) -> SphGrid:
    return SphGrid(p)


# ---- single-layer radial functions (unit sphere, unit viscosity) -------------

def radial_functions(n, r):
    """Radial profiles of the exterior single layer for each density kind.

    Returns a dict with, for kind in (a, b, c) (V, W, X densities), the
    velocity amplitudes A (radial), B (gradient), C (X) at radius r, their
    r-derivatives, and the pressure factor g.  Arrays broadcast over n and r.
    """
    n = np.asarray(n, dtype=float)
    r = np.asarray(r, dtype=float)
    two = 2 * n + 1
    out = {}
    # V density
    al = n / (two * (2 * n + 3))
    fV = al * r ** (-(n + 2))
    dfV = -(n + 2) * al * r ** (-(n + 3))
    out["a"] = (-(n + 1) * fV, fV, 0 * fV, -(n + 1) * dfV, dfV, 0 * fV, 0 * fV)
    # W density
    be = n / (2 * two)
    ga = (n + 1) / (two * (2 * n - 1))
    fV = be * (r ** (-(n + 2)) - r ** (-n))
    dfV = be * (-(n + 2) * r ** (-(n + 3)) + n * r ** (-(n + 1)))
    fW = ga * r ** (-n)
    dfW = -n * ga * r ** (-(n + 1))
    g = n * r ** (-(n + 1))
    nz = n > 0
    out["b"] = tuple(np.where(nz, v, 0.0) for v in (
        -(n + 1) * fV + n * fW, fV + fW, 0 * fV, -(n + 1) * dfV + n * dfW, dfV + dfW, 0 * fV, g))
    # X density
    fX = r ** (-(n + 1)) / two
    dfX = -(n + 1) * r ** (-(n + 2)) / two
    out["c"] = tuple(np.where(nz, v, 0.0) for v in (0 * fX, 0 * fX, fX, 0 * fX, 0 * fX, dfX, 0 * fX))
    return out


def self_maps(p: int):
    """Diagonal maps at r = 1 from (a, b, c) to velocity and exterior-limit
    traction amplitudes (R, G, X), as 3x3 arrays per half mode."""
    n, _ = half_modes(p)
    rf = radial_functions(n, 1.0)
    vel = np.zeros((n.size, 3, 3))
    trac = np.zeros((n.size, 3, 3))
    for k, kind in enumerate("abc"):
        A, B, C, dA, dB, dC, g = rf[kind]
        vel[:, :, k] = np.stack([A, B, C], -1)
        trac[:, :, k] = np.stack([-g + 2 * dA, dB + A - B, dC - C], -1)
    return vel, trac


# ---- exterior evaluation at arbitrary targets --------------------------------

def _target_angles(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(x, axis=1)
    theta = np.arccos(np.clip(x[:, 2] / r, -1.0, 1.0))
    phi = np.arctan2(x[:, 1], x[:, 0])
    return r, theta, phi


def _pole_split(x):
    """Replace targets within POLE_EPS of the axis by two points at colatitude
    POLE_EPS from the pole on opposite meridians; averaging the two responses
    recovers the on-axis value to O(POLE_EPS^2)."""
    r, th, _ = _target_angles(x)
    pole = np.abs(np.sin(th)) < POLE_EPS
    if not pole.any():
        return x, None
    idx = np.nonzero(pole)[0]
    t = np.where(th[idx] < np.pi / 2, POLE_EPS, np.pi - POLE_EPS)
    rs, rc = r[idx] * np.sin(t), r[idx] * np.cos(t)
    plus = np.stack([rs, 0 * rs, rc], -1)
    minus = np.stack([-rs, 0 * rs, rc], -1)
    x = x.copy()
    x[idx] = plus
    return np.vstack([x, minus]), idx


def exterior_response(p: int, x, normals=None, want_traction=True, _split=True):
    """Per-mode responses of the unit-sphere single layer at exterior targets.

    ``x`` are target points (T, 3) in the source sphere's body frame, scaled by
    its radius.  Returns complex arrays u (T, 3, 3, Kh) and, when requested,
    traction t (T, 3, 3, Kh) for the given target normals, plus pressure
    (T, 3, Kh); axis 2 is the density kind (a, b, c).  The physical field of a
    real density is Re sum(w_m * response * coef) with w_m = 1 for m = 0 and
    2 otherwise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(np.linalg.norm(x, axis=1) <= 1.0):
        raise ValueError("exterior evaluation requires targets outside the sphere")
    xs, idx = _pole_split(x) if _split else (x, None)
    if idx is not None:
        nrm = None
        if normals is not None:
            nrm = np.broadcast_to(np.atleast_2d(normals), x.shape)
            nrm = np.vstack([nrm, nrm[idx]])
        out = list(exterior_response(p, xs, nrm, want_traction, _split=False))
        T = len(x)
        for k, arr in enumerate(out):
            if arr is not None:
                arr[idx] = 0.5 * (arr[idx] + arr[T:])
                out[k] = arr[:T]
        return tuple(out)
    r, th, ph = _target_angles(x)
    hn, hm = half_modes(p)
    c, s = np.cos(th), np.sin(th)
    Pt, dPt = legendre_table(p, c, s)
    P = Pt[hn, hm].T               # (T, Kh)
    dP = dPt[hn, hm].T
    e = np.exp(1j * np.outer(ph, hm))
    im = 1j * hm[None, :]
    Y = P * e
    Yt = dP * e
    Ys = im * Y / s[:, None]
    nn = hn[None, :]
    Ytt = -(c / s)[:, None] * Yt + (hm[None, :] ** 2 / s[:, None] ** 2 - nn * (nn + 1)) * Y
    dYs = im * (Yt / s[:, None] - (c / s ** 2)[:, None] * Y)

    e_r = np.stack([s * np.cos(ph), s * np.sin(ph), c], -1)
    e_t = np.stack([c * np.cos(ph), c * np.sin(ph), -s], -1)
    e_p = np.stack([-np.sin(ph), np.cos(ph), 0 * s], -1)
    basis = np.stack([e_r, e_t, e_p], 1)      # (T, 3 sph, 3 cart)
    rr = r[:, None]
    cot = (c / s)[:, None]
    rf = radial_functions(hn[None, :], rr)

    T, Kh = P.shape
    U = np.zeros((T, 3, 3, Kh), dtype=complex)
    Tr = np.zeros((T, 3, 3, Kh), dtype=complex) if want_traction else None
    Pr = np.zeros((T, 3, Kh), dtype=complex)
    if want_traction:
        nsph = np.einsum("tij,tj->ti", basis, np.atleast_2d(normals))
    for k, kind in enumerate("abc"):
        A, B, C, dA, dB, dC, g = rf[kind]
        ur = A * Y
        ut = B * Yt - C * Ys
        up = B * Ys + C * Yt
        U[:, :, k] = np.einsum("tjc,tjk->tck", basis, np.stack([ur, ut, up], 1))
        Pr[:, k] = g * Y
        if not want_traction:
            continue
        D = np.empty((T, 3, 3, Kh), dtype=complex)
        D[:, 0, 0] = dA * Y
        D[:, 0, 1] = (A * Yt - ut) / rr
        D[:, 0, 2] = A * Ys / rr - up / rr
        D[:, 1, 0] = dB * Yt - dC * Ys
        D[:, 1, 1] = (B * Ytt - C * dYs + ur) / rr
        D[:, 1, 2] = (B * im * Yt - C * im * Ys) / (rr * s[:, None]) - cot * up / rr
        D[:, 2, 0] = dB * Ys + dC * Yt
        D[:, 2, 1] = (B * dYs + C * Ytt) / rr
        D[:, 2, 2] = (B * im * Ys + C * im * Yt) / (rr * s[:, None]) + ur / rr + cot * ut / rr
        S = D + D.transpose(0, 2, 1, 3)
        for i in range(3):
            S[:, i, i] -= g * Y
        tsph = np.einsum("tijk,tj->tik", S, nsph)
        Tr[:, :, k] = np.einsum("tjc,tjk->tck", basis, tsph)
    return U, Tr, Pr


def mode_weights(p: int) -> np.ndarray:
    _, hm = half_modes(p)
    return np.where(hm == 0, 1.0, 2.0)


def response_to_real(resp, p: int) -> np.ndarray:
    """Real matrix (rows, 6 Kh) acting on [Re a, Re b, Re c, Im a, Im b, Im c]."""
    w = mode_weights(p)
    R = resp * w
    rows = R.shape[0] * R.shape[1]
    R = R.reshape(rows, 3 * R.shape[-1])
    return np.hstack([R.real, -R.imag])


def coef_to_real(a, b, c) -> np.ndarray:
    z = np.concatenate([a, b, c], axis=-1)
    return np.concatenate([z.real, z.imag], axis=-1)


# ---- public per-sphere field object ------------------------------------------

@dataclass
class SphereSpectralField:
    """VSH coefficients of a surface density on one sphere.

    ``vhat``, ``what``, ``xhat`` are the full-layout inner products
    <rho, V_n^m> etc.; for a real field coefficient (n, -m) equals
    (-1)^m conj((n, m)).
    """
    p: int
    radius: float
    center: np.ndarray
    rotation: np.ndarray
    vhat: np.ndarray
    what: np.ndarray
    xhat: np.ndarray
    viscosity: float = 1.0

    @property
    def norms(self):
        return get_grid(self.p).norms

    def half_expansion(self):
        p = self.p
        g = get_grid(p)
        V2, W2, X2 = g.norms
        n, m = g.hn, g.hm
        a = self.vhat[n, m + p] / V2[n]
        nz = n > 0
        safe = np.where(nz, 1.0, 0.0)
        b = self.what[n, m + p] * safe / np.where(nz, W2[n], 1.0)
        c = self.xhat[n, m + p] * safe / np.where(nz, X2[n], 1.0)
        return a, b, c


def _full_from_half(h, p):
    n, m = half_modes(p)
    out = np.zeros((p + 1, 2 * p + 1), dtype=complex)
    out[n, m + p] = h
    out[n, -m + p] = (-1.0) ** m * np.conj(h)
    return out


def vsh_decompose(values, p: int, radius=1.0, center=(0, 0, 0), rotation=None,
                  viscosity=1.0) -> SphereSpectralField:
    """Decompose a real vector field (K, 3) given in the grid's body frame."""
    g = get_grid(p)
    values = np.asarray(values, dtype=float)
    if values.shape != (g.size, 3):
        raise ValueError(f"vector field must have shape ({g.size}, 3)")
    V, W, X = g.inner_products(values)
    R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    return SphereSpectralField(p, float(radius), np.asarray(center, dtype=float), R,
                               _full_from_half(V, p), _full_from_half(W, p),
                               _full_from_half(X, p), viscosity)


def vsh_synthesize(field: SphereSpectralField) -> np.ndarray:
    """Grid values (K, 3) in the body frame."""
    return get_grid(field.p).synthesize(*field.half_expansion())


def _to_body(field, target):
    x = np.atleast_2d(np.asarray(target, dtype=float)) - field.center
    return (x @ field.rotation) / field.radius


def eval_single_layer_exterior(field: SphereSpectralField, target):
    """Velocity (T, 3) and pressure (T,) of the single layer at exterior points."""
    xb = _to_body(field, target)
    U, _, Pr = exterior_response(field.p, xb, want_traction=False)
    z = np.concatenate(field.half_expansion())
    w = np.tile(mode_weights(field.p), 3)
    u = np.real(U.reshape(len(xb), 3, -1) @ (w * z))
    pr = np.real(Pr.reshape(len(xb), -1) @ (w * z))
    scale = field.radius / field.viscosity
    return scale * u @ field.rotation.T, pr


def eval_traction_exterior(field: SphereSpectralField, target, normal):
    """Traction (T, 3) of the single-layer flow at exterior points."""
    xb = _to_body(field, target)
    nb = np.atleast_2d(np.asarray(normal, dtype=float)) @ field.rotation
    _, Tr, _ = exterior_response(field.p, xb, nb)
    z = np.concatenate(field.half_expansion())
    w = np.tile(mode_weights(field.p), 3)
    t = np.real(Tr.reshape(len(xb), 3, -1) @ (w * z))
    return t @ field.rotation.T
