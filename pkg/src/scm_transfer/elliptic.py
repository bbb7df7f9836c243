"""Complete elliptic integral K and Jacobi elliptic functions.

Parameter convention: ``m = k**2`` throughout.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import elliprf

from .errors import OutOfDomain

_AGM_TOL = 1e-16


def _agm(a: float, b: float) -> float:
    for _ in range(64):
        if abs(a - b) <= _AGM_TOL * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def elliptic_K(m: float) -> float:
    """Complete elliptic integral of the first kind, by the arithmetic-geometric mean."""
    m = float(m)
    if not 0.0 <= m < 1.0:
        raise OutOfDomain(f"K(m) needs 0 <= m < 1, got {m}")
    return math.pi / (2.0 * _agm(1.0, math.sqrt(1.0 - m)))


def _landen_sequence(m: float):
    a, b, c = 1.0, math.sqrt(1.0 - m), math.sqrt(m)
    aa, cc = [a], [c]
    while abs(c) > 1e-17 * a and len(aa) < 40:
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        aa.append(a)
        cc.append(c)
    return aa, cc


def ellipj_real(u, m: float):
    """sn, cn, dn for real ``u`` via the descending Landen (AGM) recursion."""
    m = float(m)
    if not 0.0 <= m <= 1.0:
        raise OutOfDomain(f"Jacobi functions need 0 <= m <= 1, got {m}")
    u = np.asarray(u, dtype=float)
    if m == 0.0:
        return np.sin(u), np.cos(u), np.ones_like(u)
    if m == 1.0:
        # cosh overflows to inf for |u| > 710, which gives the correct sech = 0
        with np.errstate(over="ignore"):
            sech = 1.0 / np.cosh(u)
        return np.tanh(u), sech, sech.copy()
    aa, cc = _landen_sequence(m)
    n = len(aa) - 1
    phi = (2.0**n) * aa[n] * u
    for j in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(cc[j] / aa[j] * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    # dn^2 = cn^2 + (1 - m) sn^2 avoids cancellation as m -> 1
    dn = np.sqrt(cn * cn + (1.0 - m) * sn * sn)
    return sn, cn, dn


def ellipj(u, m: float):
    """sn, cn, dn for complex ``u`` using the real-argument addition formulas."""
    u = np.asarray(u, dtype=complex)
    x, y = u.real, u.imag
    s, c, d = ellipj_real(x, m)
    s1, c1, d1 = ellipj_real(y, 1.0 - m)
    delta = c1 * c1 + m * s * s * s1 * s1
    sn = (s * d1 + 1j * c * d * s1 * c1) / delta
    cn = (c * c1 - 1j * s * d * s1 * d1) / delta
    dn = (d * c1 * d1 - 1j * m * s * c * s1) / delta
    return sn, cn, dn


def jacobi_sn(u, m: float):
    """Jacobi elliptic sine; real input gives real output."""
    if np.iscomplexobj(u):
        return ellipj(u, m)[0]
    return ellipj_real(u, m)[0]


def inverse_sn(zeta, m: float):
    """Inverse of sn on the closed upper half-plane, landing in [-K, K] x [0, K'].

    Uses sn^{-1}(z) = z * R_F(1 - z^2, 1 - m z^2, 1) followed by a Newton polish.
    """
    zeta = np.asarray(zeta, dtype=complex)
    K = elliptic_K(m)
    # K' from the complementary AGM so tiny m (where 1 - m rounds to 1) keeps its value
    Kp = math.pi / (2.0 * _agm(1.0, math.sqrt(m))) if m > 0 else math.inf
    q = zeta * elliprf(1.0 - zeta * zeta, 1.0 - m * zeta * zeta, 1.0)
    # real |zeta| > 1 lies on the R_F branch cut: use the edge formulas instead
    on_cut = (zeta.imag == 0.0) & (np.abs(zeta.real) > 1.0)
    if np.any(on_cut):
        r = np.abs(zeta.real[on_cut])
        sign = np.sign(zeta.real[on_cut])
        k = math.sqrt(m)
        m1 = 1.0 - m
        side = r <= 1.0 / k if k > 0 else np.ones_like(r, dtype=bool)
        edge = np.empty(r.shape, dtype=complex)
        # right/left edge: sn(K + iy | m) = 1 / dn(y | 1 - m)
        s2 = np.clip((1.0 - 1.0 / r[side] ** 2) / m1, 0.0, 1.0)
        s1 = np.sqrt(s2)
        y = s1 * elliprf(1.0 - s2, 1.0 - m1 * s2, 1.0)
        edge[side] = K + 1j * y
        # top edge: sn(x + iK' | m) = 1 / (k sn(x | m))
        t = np.clip(1.0 / (k * r[~side]), 0.0, 1.0)
        x = t * elliprf(1.0 - t * t, 1.0 - m * t * t, 1.0)
        edge[~side] = x + 1j * Kp
        q = q.copy()
        q[on_cut] = sign * edge.real + 1j * edge.imag
    q = np.where(np.isfinite(q), q, 0.0)
    q = q.real + 1j * np.abs(q.imag)
    for _ in range(6):
        sn, cn, dn = ellipj(q, m)
        deriv = cn * dn
        ok = np.abs(deriv) > 1e-8
        step = np.where(ok, (sn - zeta) / np.where(ok, deriv, 1.0), 0.0)
        if np.all(np.abs(step) < 1e-15):
            break
        q = q - step
    re = np.clip(q.real, -K, K)
    im = np.clip(np.abs(q.imag), 0.0, Kp)
    return re + 1j * im
