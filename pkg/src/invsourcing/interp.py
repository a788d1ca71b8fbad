"""Monotone piecewise-cubic interpolation on a 2-d tensor grid.

Nodal slopes along each dimension use the Fritsch-Carlson limiter (the
classic shape-preserving cubic), cross slopes are set to zero, and cells are
blended with tensor Hermite cubics.  The surface is C1, exact at nodes, and
reproduces monotonicity along grid lines, which the stage optimizer relies
on.  Beyond the grid hull evaluation continues linearly with the boundary
gradient.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["pchip_slopes", "hermite2d_all", "hermite2d_value", "locate_cell"]


def pchip_slopes(x, y, axis=0):
    """Fritsch-Carlson limited slopes of y along `axis` at the nodes of x.

    y may be 1-d or 2-d; x is the 1-d coordinate array for `axis`.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim == 1:
        return _pchip_slopes_2d(x, y[:, None])[:, 0]
    if axis == 0:
        return _pchip_slopes_2d(x, y)
    return _pchip_slopes_2d(x, y.T).T


def _pchip_slopes_2d(x, y):
    n = x.size
    if n < 2:
        raise ValueError("need at least two nodes")
    h = np.diff(x)[:, None]                      # (n-1, 1)
    d = np.diff(y, axis=0) / h                   # secants
    m = np.zeros_like(y)
    if n == 2:
        m[0] = d[0]
        m[1] = d[0]
        return m
    # interior: weighted harmonic mean where secants share a sign
    w1 = 2.0 * h[1:] + h[:-1]
    w2 = h[1:] + 2.0 * h[:-1]
    d0, d1 = d[:-1], d[1:]
    same = (d0 * d1) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        harm = (w1 + w2) / (w1 / np.where(same, d0, 1.0)
                            + w2 / np.where(same, d1, 1.0))
    m[1:-1] = np.where(same, harm, 0.0)
    m[0] = _edge(h[0, 0], h[1, 0], d[0], d[1])
    m[-1] = _edge(h[-1, 0], h[-2, 0], d[-1], d[-2])
    return m


def _edge(h0, h1, d0, d1):
    # one-sided three-point slope with the standard shape-preserving clips
    m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    m = np.where(np.sign(m) != np.sign(d0), 0.0, m)
    clip = np.sign(d0) != np.sign(d1)
    m = np.where(clip & (np.abs(m) > 3.0 * np.abs(d0)), 3.0 * d0, m)
    return m


@njit(cache=True, inline="always")
def locate_cell(grid, s):
    """Index i with grid[i] <= s < grid[i+1], clamped to valid cells."""
    n = grid.size
    if s <= grid[0]:
        return 0
    if s >= grid[n - 2]:
        return n - 2
    lo, hi = 0, n - 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if grid[mid] <= s:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True, inline="always")
def _hbasis(u):
    u2 = u * u
    u3 = u2 * u
    return (2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u,
            -2.0 * u3 + 3.0 * u2, u3 - u2)


@njit(cache=True, inline="always")
def _hbasis_d(u):
    u2 = u * u
    return (6.0 * u2 - 6.0 * u, 3.0 * u2 - 4.0 * u + 1.0,
            -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u)


@njit(cache=True, inline="always")
def _hbasis_dd(u):
    return (12.0 * u - 6.0, 6.0 * u - 4.0, -12.0 * u + 6.0, 6.0 * u - 2.0)


@njit(cache=True)
def hermite2d_all(gc, gf, V, Vc, Vf, sc, sf):
    """Value, gradient, and second derivatives at (sc, sf).

    Returns (v, dc, df, dcc, dff, dcf).  Points beyond the hull continue
    linearly with the boundary gradient (second derivatives zero in the
    extended direction).
    """
    cmax = gc[gc.size - 1]
    fmax = gf[gf.size - 1]
    scl = min(max(sc, gc[0]), cmax)
    sfl = min(max(sf, gf[0]), fmax)

    i = locate_cell(gc, scl)
    j = locate_cell(gf, sfl)
    hc = gc[i + 1] - gc[i]
    hf = gf[j + 1] - gf[j]
    u = (scl - gc[i]) / hc
    w = (sfl - gf[j]) / hf

    a0, a1, a2, a3 = _hbasis(u)
    b0, b1, b2, b3 = _hbasis(w)
    da0, da1, da2, da3 = _hbasis_d(u)
    db0, db1, db2, db3 = _hbasis_d(w)
    dda0, dda1, dda2, dda3 = _hbasis_dd(u)
    ddb0, ddb1, ddb2, ddb3 = _hbasis_dd(w)

    v00, v01 = V[i, j], V[i, j + 1]
    v10, v11 = V[i + 1, j], V[i + 1, j + 1]
    c00, c01 = Vc[i, j] * hc, Vc[i, j + 1] * hc
    c10, c11 = Vc[i + 1, j] * hc, Vc[i + 1, j + 1] * hc
    f00, f01 = Vf[i, j] * hf, Vf[i, j + 1] * hf
    f10, f11 = Vf[i + 1, j] * hf, Vf[i + 1, j + 1] * hf

    # collapse the f-dimension first: value / d/df / d2/df2 profiles in u
    p0 = v00 * b0 + v01 * b2 + f00 * b1 + f01 * b3
    p1 = v10 * b0 + v11 * b2 + f10 * b1 + f11 * b3
    q0 = c00 * b0 + c01 * b2
    q1 = c10 * b0 + c11 * b2
    pd0 = (v00 * db0 + v01 * db2 + f00 * db1 + f01 * db3) / hf
    pd1 = (v10 * db0 + v11 * db2 + f10 * db1 + f11 * db3) / hf
    qd0 = (c00 * db0 + c01 * db2) / hf
    qd1 = (c10 * db0 + c11 * db2) / hf
    pdd0 = (v00 * ddb0 + v01 * ddb2 + f00 * ddb1 + f01 * ddb3) / (hf * hf)
    pdd1 = (v10 * ddb0 + v11 * ddb2 + f10 * ddb1 + f11 * ddb3) / (hf * hf)

    val = p0 * a0 + p1 * a2 + q0 * a1 + q1 * a3
    dc = (p0 * da0 + p1 * da2 + q0 * da1 + q1 * da3) / hc
    df = pd0 * a0 + pd1 * a2 + qd0 * a1 + qd1 * a3
    dcc = (p0 * dda0 + p1 * dda2 + q0 * dda1 + q1 * dda3) / (hc * hc)
    dff = pdd0 * a0 + pdd1 * a2
    dcf = (pd0 * da0 + pd1 * da2 + qd0 * da1 + qd1 * da3) / hc

    # linear continuation outside the hull
    if sc > cmax:
        val += dc * (sc - cmax)
        dcc = 0.0
        dcf = 0.0
    if sf > fmax:
        val += df * (sf - fmax)
        dff = 0.0
        dcf = 0.0
    return val, dc, df, dcc, dff, dcf


@njit(cache=True)
def hermite2d_value(gc, gf, V, Vc, Vf, sc, sf):
    """Value only (cheaper path for policy evaluation sweeps)."""
    cmax = gc[gc.size - 1]
    fmax = gf[gf.size - 1]
    if sc <= cmax and sf <= fmax and sc >= gc[0] and sf >= gf[0]:
        i = locate_cell(gc, sc)
        j = locate_cell(gf, sf)
        hc = gc[i + 1] - gc[i]
        hf = gf[j + 1] - gf[j]
        u = (sc - gc[i]) / hc
        w = (sf - gf[j]) / hf
        a0, a1, a2, a3 = _hbasis(u)
        b0, b1, b2, b3 = _hbasis(w)
        p0 = (V[i, j] * b0 + V[i, j + 1] * b2
              + Vf[i, j] * hf * b1 + Vf[i, j + 1] * hf * b3)
        p1 = (V[i + 1, j] * b0 + V[i + 1, j + 1] * b2
              + Vf[i + 1, j] * hf * b1 + Vf[i + 1, j + 1] * hf * b3)
        q0 = (Vc[i, j] * b0 + Vc[i, j + 1] * b2) * hc
        q1 = (Vc[i + 1, j] * b0 + Vc[i + 1, j + 1] * b2) * hc
        return p0 * a0 + p1 * a2 + q0 * a1 + q1 * a3
    out = hermite2d_all(gc, gf, V, Vc, Vf, sc, sf)
    return out[0]
