"""Delay-bucketed azimuthal ring integrals.

For a pair of generatrix points the distance between the observation ring
point at azimuth 0 and the source ring point at azimuth ``alpha`` is

    R(alpha)**2 = d**2 + B sin(alpha/2)**2,   B = 4 rho rho'

which increases monotonically on [0, pi].  The retarded time ``t_n - R``
falls into time bucket ``k = floor(R/dt)`` with fractional offset
``f = R/dt - k``.  For every bucket the moments

    mu[c, e] = integral over the bucket of  g_c(alpha) f**e / R  dalpha

are returned for the angular factors ``g = (cos m a, cos m a cos a, sin m a sin a)``
and powers ``e = 0..3``.  Temporal interpolation weights are polynomials in
f, so these moments are all the operator assembly needs.

Near alpha = 0 the substitution ``sin(alpha/2) = (d/sqrt(B)) sinh(u)`` makes
``dalpha / R`` regular, which removes the 1/R peak when the two points are
close; beyond ``ALPHA_SPLIT`` (or everywhere, when the points are
far apart relative to the ring radii) alpha itself is the integration variable.
"""
from __future__ import annotations

import math

import numpy as np

ALPHA_SPLIT = math.pi / 3
# the sinh substitution only pays off when d is small against sqrt(B)
SPLIT_RATIO = 0.5
MAX_DU = 0.5
MAX_DALPHA = math.pi / 12


def _gauss01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


_RULES = {"a": _gauss01(6), "b": _gauss01(6)}


def _expand(counts):
    """Owner index for each of ``sum(counts)`` expanded entries and the rank within its owner."""
    counts = np.asarray(counts, dtype=np.int64)
    owner = np.repeat(np.arange(len(counts)), counts)
    start = np.cumsum(counts) - counts
    rank = np.arange(len(owner)) - start[owner]
    return owner, rank


def _alpha_of(r, d, B, rmax):
    """Azimuth at which R(alpha) = r; exact at both ends of [0, pi]."""
    s2 = np.maximum(r * r - d * d, 0.0)
    c2 = np.maximum(d * d + B - r * r, 0.0)
    alpha = 2.0 * np.arctan2(np.sqrt(s2), np.sqrt(c2))
    return np.where(r >= rmax, math.pi, alpha)


def ring_moments(rho1, z1, rho2, z2, m: int, dt: float):
    """Bucketed ring moments for arrays of point pairs.

    Returns ``(pair, k, mu)`` with one row per non-empty (pair, bucket);
    ``mu`` has shape (n_rows, 3, 4).
    """
    rho1, z1, rho2, z2 = (np.asarray(v, dtype=float) for v in (rho1, z1, rho2, z2))
    d = np.hypot(rho1 - rho2, z1 - z2)
    B = 4.0 * rho1 * rho2
    if np.any(d <= 0):
        raise ValueError("coincident observation and source points")
    sqB = np.sqrt(B)
    rmax = np.sqrt(d * d + B)
    s_c = np.where(d < SPLIT_RATIO * sqB, math.sin(0.5 * ALPHA_SPLIT), 0.0)
    rc = np.sqrt(d * d + B * s_c * s_c)

    k_lo = np.floor(d / dt).astype(np.int64)
    k_hi = np.floor(rmax / dt).astype(np.int64)
    n_b = k_hi - k_lo + 1
    label_base = np.cumsum(n_b) - n_b

    # one interval per (pair, bucket), then split at the region boundary
    pair, rank = _expand(n_b)
    k = k_lo[pair] + rank
    r_lo = np.maximum(k * dt, d[pair])
    r_hi = np.minimum((k + 1) * dt, rmax[pair])
    label = label_base[pair] + rank

    rcp = rc[pair]
    a_lo, a_hi = r_lo, np.minimum(r_hi, rcp)
    b_lo, b_hi = np.maximum(r_lo, rcp), r_hi
    in_a = a_hi > a_lo
    in_b = b_hi > b_lo

    rows_mu = np.zeros((int(n_b.sum()), 3, 4))

    for region, lo, hi, sel in (("a", a_lo, a_hi, in_a), ("b", b_lo, b_hi, in_b)):
        if not np.any(sel):
            continue
        p = pair[sel]
        dd, bb, sb = d[p], B[p], sqB[p]
        if region == "a":
            v_lo = np.arccosh(np.maximum(lo[sel] / dd, 1.0))
            v_hi = np.arccosh(np.maximum(hi[sel] / dd, 1.0))
            step = MAX_DU
        else:
            v_lo = _alpha_of(lo[sel], dd, bb, rmax[p])
            v_hi = _alpha_of(hi[sel], dd, bb, rmax[p])
            step = MAX_DALPHA
        n_sub = np.maximum(1, np.ceil((v_hi - v_lo) / step).astype(np.int64))
        owner, sub = _expand(n_sub)
        width = (v_hi - v_lo)[owner] / n_sub[owner]
        left = v_lo[owner] + sub * width
        gx, gw = _RULES[region]
        v = left[:, None] + width[:, None] * gx[None, :]
        w = width[:, None] * gw[None, :]
        po = p[owner][:, None]
        dd, bb, sb = d[po], B[po], sqB[po]
        if region == "a":
            sin_half = np.minimum(dd / sb * np.sinh(v), 1.0)
            alpha = 2.0 * np.arcsin(sin_half)
            cos_half = np.sqrt(np.maximum(1.0 - sin_half * sin_half, 0.0))
            R = dd * np.cosh(v)
            jac = w * 2.0 / (sb * cos_half)
        else:
            alpha = v
            R = np.sqrt(dd * dd + bb * np.sin(0.5 * v) ** 2)
            jac = w / R
        kk = k[sel][owner][:, None]
        f = R / dt - kk
        ca, sa = np.cos(alpha), np.sin(alpha)
        cm, sm = np.cos(m * alpha), np.sin(m * alpha)
        ang = (cm * jac, cm * ca * jac, sm * sa * jac)
        lab = np.broadcast_to(label[sel][owner][:, None], v.shape).ravel()
        fpow = np.ones_like(f)
        for e in range(4):
            for c in range(3):
                rows_mu[:, c, e] += np.bincount(lab, weights=(ang[c] * fpow).ravel(), minlength=len(rows_mu))
            fpow = fpow * f

    pair_rows, rank_rows = _expand(n_b)
    return pair_rows, k_lo[pair_rows] + rank_rows, rows_mu
