"""Numba kernels for value-iteration sweeps and panel simulation.

The expectation over the shock lattice exploits its tensor structure.  For
each demand node the availability-unconstrained usage pair is solved once
and the delivery-fraction nodes are classified against it:

  block A: both availabilities slack -> the unconstrained point applies;
  block B: far-input fraction binding (any close fraction) -> one
           close-usage re-solve per far node, remainder fully bound;
  block C: close fraction binding, far fraction in the slack region ->
           symmetric re-solves.

Slack sets contribute through aggregated probabilities, so the inner work
scales with the number of binding nodes rather than the full product.  A
multiplier check guards the rare active-set misclassification (possible when
inputs are weak complements) and reroutes the demand node through a
per-combination solve.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from .interp import hermite2d_all, hermite2d_value, locate_cell
from .stage import (
    P_BETA, P_DELTA, P_DSCALE, P_EPS, P_PC, P_PD, P_PF, P_QBAR, P_RHO,
    P_WC, P_WD, P_WF,
    _case_solve, _mr_scale, _mrp, _revenue, _solve_1d, _solve_2d, _xd_solve,
)

_XEPS = 1e-10
_NTINY = 1e-14
_BIG = 1e30
# multiplier slack tolerated before rerouting a demand node through the
# per-combination path; value impact of an accepted misclassification is
# second-order (O(mu * slack))
_MU_TOL = 1e-5


@njit(cache=True)
def _first_at_least(base, step, nodes, need):
    """First node index with base + step * nodes[k] >= need (nodes ascending)."""
    K = nodes.size
    for k in range(K):
        if base + step * nodes[k] >= need:
            return k
    return K


@njit(cache=True)
def _expect_stage(s_c, s_f, n_c, n_f,
                  nuN, nuP, lcN, lcP, lcSuf, Elc, lfN, lfP, lfSuf, Elf,
                  gc, gf, V, VC, VF, par, brute,
                  want_tables, tprob, tflow, tspc, tspf):
    """Expected stage value over the lattice and its gradient in the orders.

    Returns (G, gC, gF, n_entries, n_fallback); G nets out order costs.  With
    want_tables the aggregated (prob, flow, s'_c, s'_f) outcomes are written
    to the t* arrays from index 0.  `brute` forces the per-combination path
    (reference behavior for tiny instances and tests).
    """
    oned = 1.0 - par[P_DELTA]
    qbar = par[P_QBAR]
    beta = par[P_BETA]
    wc = par[P_WC]
    wf = par[P_WF]
    rho = par[P_RHO]

    z_c = s_c + n_c
    z_f = s_f + n_f
    Knu = nuN.size

    # collapse a delivery dimension when its order is zero: availability then
    # never varies with the draw; the order gradient uses the mean fraction
    if n_c > _NTINY:
        Kc = lcN.size
        ecN, ecP, ecS, ecG = lcN, lcP, lcSuf, lcN
    else:
        Kc = 1
        ecN = np.zeros(1)
        ecP = np.ones(1)
        ecS = np.empty(2)
        ecS[0] = 1.0
        ecS[1] = 0.0
        ecG = np.full(1, Elc)
    if n_f > _NTINY:
        Kf = lfN.size
        efN, efP, efS, efG = lfN, lfP, lfSuf, lfN
    else:
        Kf = 1
        efN = np.zeros(1)
        efP = np.ones(1)
        efS = np.empty(2)
        efS[0] = 1.0
        efS[1] = 0.0
        efG = np.full(1, Elf)

    c_active = wc > 0.0 and z_c > _XEPS
    f_active = wf > 0.0 and z_f > _XEPS

    acc = 0.0
    accC = 0.0
    accF = 0.0
    ne = 0
    nfall = 0
    wxc = 0.0
    wxf = 0.0

    for iv in range(Knu):
        nu = nuN[iv]
        pv = nuP[iv]
        An = _mr_scale(nu, par)

        if An <= 0.0:
            spc = z_c * oned
            spf = z_f * oned
            v, dc, df, dcc, dff, dcf = hermite2d_all(gc, gf, V, VC, VF, spc, spf)
            acc += pv * beta * v
            accC += pv * max(qbar * dc, 0.0)
            accF += pv * max(qbar * df, 0.0)
            if want_tables:
                tprob[ne] = pv
                tflow[ne] = 0.0
                tspc[ne] = spc
                tspf[ne] = spf
                ne += 1
            continue

        accN = 0.0
        accNC = 0.0
        accNF = 0.0
        ne0 = ne
        bad = brute

        xbc = 0.0
        xbf = 0.0
        xbd = 0.0
        ybr = 0.0
        thr_c = _BIG
        thr_f = _BIG

        if not bad:
            # availability-unconstrained usage (only the s' >= 0 caps apply)
            if c_active and f_active:
                xbc, xbf, xbd, ybr, bzc, bzf = _solve_2d(
                    nu, An, z_c, z_f, z_c, z_f, gc, gf, V, VC, VF, par,
                    wxc, wxf, 0.0)
                wxc, wxf = xbc, xbf
                if not bzc:
                    thr_c = xbc
                if not bzf:
                    thr_f = xbf
            elif f_active:
                a_pin = s_c + Elc * n_c
                xbf, xbd, ybr, bzf = _solve_1d(
                    nu, An, wc * a_pin ** rho if a_pin > 0.0 else 0.0,
                    (z_c - a_pin) * oned, z_f, z_f, wf, True,
                    gc, gf, V, VC, VF, par, wxf, 0.0)
                wxf = xbf
                if not bzf:
                    thr_f = xbf
            elif c_active:
                a_pin = s_f + Elf * n_f
                xbc, xbd, ybr, bzc = _solve_1d(
                    nu, An, wf * a_pin ** rho if a_pin > 0.0 else 0.0,
                    (z_f - a_pin) * oned, z_c, z_c, wc, False,
                    gc, gf, V, VC, VF, par, wxc, 0.0)
                wxc = xbc
                if not bzc:
                    thr_c = xbc

            kc = _first_at_least(s_c, n_c, ecN, thr_c) if thr_c < _BIG else Kc
            kf = _first_at_least(s_f, n_f, efN, thr_f) if thr_f < _BIG else Kf
            Psc = ecS[kc]
            Psf = efS[kf]

            # block A: both slack
            if Psc > 0.0 and Psf > 0.0:
                spc = (z_c - xbc) * oned
                spf = (z_f - xbf) * oned
                v, dc, df, dcc, dff, dcf = hermite2d_all(
                    gc, gf, V, VC, VF, spc, spf)
                w = pv * Psc * Psf
                flow = _revenue(ybr, An, par) - par[P_PD] * xbd
                accN += w * (flow + beta * v)
                accNC += w * max(qbar * dc, 0.0)
                accNF += w * max(qbar * df, 0.0)
                if want_tables:
                    tprob[ne] = w
                    tflow[ne] = flow
                    tspc[ne] = spc
                    tspf[ne] = spf
                    ne += 1

            # block B: far fraction binding, every close fraction
            xw = xbc if thr_c < _BIG else 0.0
            for j in range(kf - 1, -1, -1):
                a_f = s_f + efN[j] * n_f
                spf = (z_f - a_f) * oned
                mf = wf * a_f ** rho if a_f > 0.0 else 0.0
                need = _BIG
                xcj = 0.0
                xdj = 0.0
                yrj = 0.0
                if c_active:
                    xcj, xdj, yrj, bcj = _solve_1d(
                        nu, An, mf, spf, z_c, z_c, wc, False,
                        gc, gf, V, VC, VF, par, xw, 0.0)
                    xw = xcj
                    if not bcj:
                        need = xcj
                lc_s = _first_at_least(s_c, n_c, ecN, need) if need < _BIG else Kc
                Pc_row = ecS[lc_s]
                if Pc_row > 0.0:
                    spc = (z_c - xcj) * oned
                    v, dc, df, dcc, dff, dcf = hermite2d_all(
                        gc, gf, V, VC, VF, spc, spf)
                    qc = max(qbar * dc, 0.0)
                    qf = max(qbar * df, 0.0)
                    mu_f = _mrp(a_f, wf, yrj, An, par) - qf
                    if mu_f < -_MU_TOL * (1.0 + qf):
                        bad = True
                        break
                    if mu_f < 0.0:
                        mu_f = 0.0
                    w = pv * efP[j] * Pc_row
                    flow = _revenue(yrj, An, par) - par[P_PD] * xdj
                    accN += w * (flow + beta * v)
                    accNC += w * qc
                    accNF += w * (qf + efG[j] * mu_f)
                    if want_tables:
                        tprob[ne] = w
                        tflow[ne] = flow
                        tspc[ne] = spc
                        tspf[ne] = spf
                        ne += 1
                xdw = xdj
                for l in range(lc_s - 1, -1, -1):
                    a_c = s_c + ecN[l] * n_c
                    mc = wc * a_c ** rho if a_c > 0.0 else 0.0
                    xdw, yr2 = _xd_solve(mc + mf, An, par, xdw)
                    spc = (z_c - a_c) * oned
                    v, dc, df, dcc, dff, dcf = hermite2d_all(
                        gc, gf, V, VC, VF, spc, spf)
                    qc = max(qbar * dc, 0.0)
                    qf = max(qbar * df, 0.0)
                    mu_c = _mrp(a_c, wc, yr2, An, par) - qc
                    mu_f = _mrp(a_f, wf, yr2, An, par) - qf
                    if mu_c < -_MU_TOL * (1.0 + qc) or mu_f < -_MU_TOL * (1.0 + qf):
                        bad = True
                        break
                    if mu_c < 0.0:
                        mu_c = 0.0
                    if mu_f < 0.0:
                        mu_f = 0.0
                    w = pv * efP[j] * ecP[l]
                    flow = _revenue(yr2, An, par) - par[P_PD] * xdw
                    accN += w * (flow + beta * v)
                    accNC += w * (qc + ecG[l] * mu_c)
                    accNF += w * (qf + efG[j] * mu_f)
                    if want_tables:
                        tprob[ne] = w
                        tflow[ne] = flow
                        tspc[ne] = spc
                        tspf[ne] = spf
                        ne += 1
                if bad:
                    break

            # block C: close fraction binding, far fraction in the slack region
            if not bad:
                xw = xbf if thr_f < _BIG else 0.0
                for l in range(kc - 1, -1, -1):
                    a_c = s_c + ecN[l] * n_c
                    spc = (z_c - a_c) * oned
                    mc = wc * a_c ** rho if a_c > 0.0 else 0.0
                    need = _BIG
                    xfl = 0.0
                    xdl = 0.0
                    yrl = 0.0
                    if f_active:
                        xfl, xdl, yrl, bfl = _solve_1d(
                            nu, An, mc, spc, z_f, z_f, wf, True,
                            gc, gf, V, VC, VF, par, xw, 0.0)
                        xw = xfl
                        if not bfl:
                            need = xfl
                    jf_s = _first_at_least(s_f, n_f, efN, need) if need < _BIG else Kf
                    if jf_s < kf:
                        jf_s = kf
                    Pf_row = efS[jf_s] if need < _BIG else 0.0
                    if Pf_row > 0.0:
                        spf = (z_f - xfl) * oned
                        v, dc, df, dcc, dff, dcf = hermite2d_all(
                            gc, gf, V, VC, VF, spc, spf)
                        qc = max(qbar * dc, 0.0)
                        qf = max(qbar * df, 0.0)
                        mu_c = _mrp(a_c, wc, yrl, An, par) - qc
                        if mu_c < -_MU_TOL * (1.0 + qc):
                            bad = True
                            break
                        if mu_c < 0.0:
                            mu_c = 0.0
                        w = pv * ecP[l] * Pf_row
                        flow = _revenue(yrl, An, par) - par[P_PD] * xdl
                        accN += w * (flow + beta * v)
                        accNC += w * (qc + ecG[l] * mu_c)
                        accNF += w * qf
                        if want_tables:
                            tprob[ne] = w
                            tflow[ne] = flow
                            tspc[ne] = spc
                            tspf[ne] = spf
                            ne += 1
                    xdw = xdl
                    for j in range(kf, jf_s):
                        a_f = s_f + efN[j] * n_f
                        mf = wf * a_f ** rho if a_f > 0.0 else 0.0
                        xdw, yr2 = _xd_solve(mc + mf, An, par, xdw)
                        spf = (z_f - a_f) * oned
                        v, dc, df, dcc, dff, dcf = hermite2d_all(
                            gc, gf, V, VC, VF, spc, spf)
                        qc = max(qbar * dc, 0.0)
                        qf = max(qbar * df, 0.0)
                        mu_c = _mrp(a_c, wc, yr2, An, par) - qc
                        mu_f = _mrp(a_f, wf, yr2, An, par) - qf
                        if (mu_c < -_MU_TOL * (1.0 + qc)
                                or mu_f < -_MU_TOL * (1.0 + qf)):
                            bad = True
                            break
                        if mu_c < 0.0:
                            mu_c = 0.0
                        if mu_f < 0.0:
                            mu_f = 0.0
                        w = pv * ecP[l] * efP[j]
                        flow = _revenue(yr2, An, par) - par[P_PD] * xdw
                        accN += w * (flow + beta * v)
                        accNC += w * (qc + ecG[l] * mu_c)
                        accNF += w * (qf + efG[j] * mu_f)
                        if want_tables:
                            tprob[ne] = w
                            tflow[ne] = flow
                            tspc[ne] = spc
                            tspf[ne] = spf
                            ne += 1
                    if bad:
                        break

        if bad:
            if not brute:
                nfall += 1
            ne = ne0
            accN = 0.0
            accNC = 0.0
            accNF = 0.0
            for l in range(Kc):
                a_c = s_c + ecN[l] * n_c
                for j in range(Kf):
                    a_f = s_f + efN[j] * n_f
                    (flow, xc1, xf1, xd1, spc, spf, qc, qf, mu_c, mu_f,
                     v) = _case_solve(nu, a_c, a_f, z_c, z_f,
                                      gc, gf, V, VC, VF, par, 0.0, 0.0)
                    w = pv * ecP[l] * efP[j]
                    accN += w * (flow + beta * v)
                    accNC += w * (qc + ecG[l] * mu_c)
                    accNF += w * (qf + efG[j] * mu_f)
                    if want_tables:
                        tprob[ne] = w
                        tflow[ne] = flow
                        tspc[ne] = spc
                        tspf[ne] = spf
                        ne += 1

        acc += accN
        accC += accNC
        accF += accNF

    G = acc - par[P_PC] * n_c - par[P_PF] * n_f
    gC = accC - par[P_PC]
    gF = accF - par[P_PF]
    return G, gC, gF, ne, nfall


@njit(cache=True)
def _optimize_orders(s_c, s_f, nc0, nf0, nmax_c, nmax_f,
                     heur_c, heur_f,
                     nuN, nuP, lcN, lcP, lcSuf, Elc, lfN, lfP, lfSuf, Elf,
                     gc, gf, V, VC, VF, par, gtol, dummy):
    """Projected-BFGS maximization of the order objective on [0, nmax]."""
    d1 = dummy
    best_g = -_BIG
    bc = 0.0
    bf = 0.0
    nfall = 0
    for k in range(3):
        if k == 0:
            cc, cf = nc0, nf0
        elif k == 1:
            cc = min(max(heur_c - s_c, 0.0), nmax_c)
            cf = min(max(heur_f - s_f, 0.0), nmax_f)
        else:
            cc, cf = 0.0, 0.0
        g, _, _, _, nfb = _expect_stage(
            s_c, s_f, cc, cf, nuN, nuP, lcN, lcP, lcSuf, Elc,
            lfN, lfP, lfSuf, Elf, gc, gf, V, VC, VF, par,
            False, False, d1, d1, d1, d1)
        nfall += nfb
        if g > best_g:
            best_g, bc, bf = g, cc, cf

    nc, nf = bc, bf
    Gv, gC, gF, _, nfb = _expect_stage(
        s_c, s_f, nc, nf, nuN, nuP, lcN, lcP, lcSuf, Elc,
        lfN, lfP, lfSuf, Elf, gc, gf, V, VC, VF, par,
        False, False, d1, d1, d1, d1)
    nfall += nfb

    scale = max(nmax_c, nmax_f, 1.0)
    h11 = 0.1 * scale / (abs(gC) + abs(gF) + 1e-8)
    if h11 > 1e3:
        h11 = 1e3
    h22 = h11
    h12 = 0.0
    converged = False

    for it in range(30):
        lock_c = (nc <= 0.0 and gC < 0.0) or (nc >= nmax_c and gC > 0.0)
        lock_f = (nf <= 0.0 and gF < 0.0) or (nf >= nmax_f and gF > 0.0)
        pgC = 0.0 if lock_c else gC
        pgF = 0.0 if lock_f else gF
        pnorm = abs(pgC) + abs(pgF)
        if pnorm < gtol:
            converged = True
            break
        dc = h11 * pgC + h12 * pgF
        df = h12 * pgC + h22 * pgF
        if lock_c:
            dc = 0.0
        if lock_f:
            df = 0.0
        ascent = dc * pgC + df * pgF
        if ascent <= 0.0:
            h11 = 0.1 * scale / (pnorm + 1e-8)
            h22 = h11
            h12 = 0.0
            dc = 0.0 if lock_c else h11 * pgC
            df = 0.0 if lock_f else h22 * pgF
            ascent = dc * pgC + df * pgF
        t = 1.0
        found = False
        Gn, gCn, gFn = Gv, gC, gF
        tc, tf = nc, nf
        for bt in range(14):
            tc = min(max(nc + t * dc, 0.0), nmax_c)
            tf = min(max(nf + t * df, 0.0), nmax_f)
            Gn, gCn, gFn, _, nfb = _expect_stage(
                s_c, s_f, tc, tf, nuN, nuP, lcN, lcP, lcSuf, Elc,
                lfN, lfP, lfSuf, Elf, gc, gf, V, VC, VF, par,
                False, False, d1, d1, d1, d1)
            nfall += nfb
            if Gn >= Gv + 1e-4 * t * ascent:
                found = True
                break
            t *= 0.5
        if not found or (abs(tc - nc) + abs(tf - nf)) < 1e-13 * scale:
            converged = converged or pnorm < 100.0 * gtol
            break
        sc = tc - nc
        sf_ = tf - nf
        yc = gC - gCn
        yf = gF - gFn
        sy = sc * yc + sf_ * yf
        if sy > 1e-12 * (abs(sc) + abs(sf_)) * (abs(yc) + abs(yf) + 1e-300):
            hyc = h11 * yc + h12 * yf
            hyf = h12 * yc + h22 * yf
            yhy = yc * hyc + yf * hyf
            f1 = (sy + yhy) / (sy * sy)
            h11 += f1 * sc * sc - 2.0 * hyc * sc / sy
            h12 += f1 * sc * sf_ - (hyc * sf_ + sc * hyf) / sy
            h22 += f1 * sf_ * sf_ - 2.0 * hyf * sf_ / sy
        nc, nf, Gv, gC, gF = tc, tf, Gn, gCn, gFn

    return Gv, nc, nf, converged, nfall


@njit(cache=True, parallel=True)
def improve_sweep(gridc, gridf, V, VC, VF,
                  nuN, nuP, lcN, lcP, lcSuf, Elc, lfN, lfP, lfSuf, Elf,
                  par, heur_c, heur_f, gtol,
                  pol_nc, pol_nf, Vnew, diag):
    """One policy-improvement sweep over the inventory grid (policy in place)."""
    Nc = gridc.size
    Nf = gridf.size
    oned = 1.0 - par[P_DELTA]
    smax_c = gridc[Nc - 1]
    smax_f = gridf[Nf - 1]
    for idx in prange(Nc * Nf):
        i = idx // Nf
        j = idx % Nf
        s_c = gridc[i]
        s_f = gridf[j]
        nmax_c = (smax_c / oned - s_c) if oned > 0.0 else (smax_c - s_c)
        nmax_f = (smax_f / oned - s_f) if oned > 0.0 else (smax_f - s_f)
        if nmax_c < 0.0:
            nmax_c = 0.0
        if nmax_f < 0.0:
            nmax_f = 0.0
        dummy = np.empty(1)
        Gv, nc, nf, ok, nfall = _optimize_orders(
            s_c, s_f, pol_nc[i, j], pol_nf[i, j], nmax_c, nmax_f,
            heur_c, heur_f, nuN, nuP, lcN, lcP, lcSuf, Elc,
            lfN, lfP, lfSuf, Elf, gridc, gridf, V, VC, VF, par,
            gtol, dummy)
        Vnew[i, j] = Gv
        pol_nc[i, j] = nc
        pol_nf[i, j] = nf
        diag[idx] = (0 if ok else 1) + 2 * nfall


@njit(cache=True, parallel=True)
def menu_sweep(gridc, gridf, V, VC, VF,
               nuN, nuP, lcN, lcP, lcSuf, Elc, lfN, lfP, lfSuf, Elf,
               par, menu_nc, menu_nf,
               pol_nc, pol_nf, Vnew):
    """Improvement restricted to a finite order menu (reference/test mode).

    Uses the per-combination expectation path throughout.
    """
    Nc = gridc.size
    Nf = gridf.size
    M = menu_nc.size
    for idx in prange(Nc * Nf):
        i = idx // Nf
        j = idx % Nf
        dummy = np.empty(1)
        best = -_BIG
        best_c = 0.0
        best_f = 0.0
        for m in range(M):
            G, gC, gF, ne, nfall = _expect_stage(
                gridc[i], gridf[j], menu_nc[m], menu_nf[m],
                nuN, nuP, lcN, lcP, lcSuf, Elc, lfN, lfP, lfSuf, Elf,
                gridc, gridf, V, VC, VF, par,
                True, False, dummy, dummy, dummy, dummy)
            if G > best:
                best = G
                best_c = menu_nc[m]
                best_f = menu_nf[m]
        Vnew[i, j] = best
        pol_nc[i, j] = best_c
        pol_nf[i, j] = best_f


@njit(cache=True, parallel=True)
def tables_sweep(gridc, gridf, V, VC, VF,
                 nuN, nuP, lcN, lcP, lcSuf, Elc, lfN, lfP, lfSuf, Elf,
                 par, pol_nc, pol_nf, cap,
                 tprob, tflow, tspc, tspf, counts, order_cost):
    """Freeze per-node stage outcomes under the current policy for evaluation."""
    Nc = gridc.size
    Nf = gridf.size
    for idx in prange(Nc * Nf):
        i = idx // Nf
        j = idx % Nf
        base = idx * cap
        G, gC, gF, ne, nfall = _expect_stage(
            gridc[i], gridf[j], pol_nc[i, j], pol_nf[i, j],
            nuN, nuP, lcN, lcP, lcSuf, Elc, lfN, lfP, lfSuf, Elf,
            gridc, gridf, V, VC, VF, par,
            False, True, tprob[base:base + cap], tflow[base:base + cap],
            tspc[base:base + cap], tspf[base:base + cap])
        counts[idx] = ne
        order_cost[idx] = par[P_PC] * pol_nc[i, j] + par[P_PF] * pol_nf[i, j]


@njit(cache=True, parallel=True)
def eval_sweep(gridc, gridf, V, VC, VF, beta, cap,
               tprob, tflow, tspc, tspf, counts, order_cost, Vnew):
    """One fixed-policy evaluation sweep using frozen stage outcomes."""
    Nc = gridc.size
    Nf = gridf.size
    for idx in prange(Nc * Nf):
        base = idx * cap
        accv = 0.0
        for e in range(counts[idx]):
            accv += tprob[base + e] * (
                tflow[base + e]
                + beta * hermite2d_value(gridc, gridf, V, VC, VF,
                                         tspc[base + e], tspf[base + e]))
        Vnew[idx // Nf, idx % Nf] = accv - order_cost[idx]


@njit(cache=True, inline="always")
def _bilinear(gridc, gridf, F, sc, sf):
    i = locate_cell(gridc, sc)
    j = locate_cell(gridf, sf)
    u = (sc - gridc[i]) / (gridc[i + 1] - gridc[i])
    w = (sf - gridf[j]) / (gridf[j + 1] - gridf[j])
    u = min(max(u, 0.0), 1.0)
    w = min(max(w, 0.0), 1.0)
    return ((1 - u) * (1 - w) * F[i, j] + u * (1 - w) * F[i + 1, j]
            + (1 - u) * w * F[i, j + 1] + u * w * F[i + 1, j + 1])


@njit(cache=True, parallel=True)
def simulate_quarter(states_c, states_f, gridc, gridf, V, VC, VF,
                     pol_nc, pol_nf, par,
                     nu_draws, lc_draws, lf_draws,
                     out_y, out_p, out_xd, out_xc, out_xf,
                     out_nc, out_nf, clamped):
    """Advance every firm one quarter in place; record flows."""
    J = states_c.size
    eps = par[P_EPS]
    dscale = par[P_DSCALE]
    rho = par[P_RHO]
    for k in prange(J):
        s_c = states_c[k]
        s_f = states_f[k]
        cl = 0
        if s_c > gridc[gridc.size - 1]:
            s_c = gridc[gridc.size - 1]
            cl = 1
        if s_f > gridf[gridf.size - 1]:
            s_f = gridf[gridf.size - 1]
            cl = 1
        clamped[k] = cl
        n_c = _bilinear(gridc, gridf, pol_nc, s_c, s_f)
        n_f = _bilinear(gridc, gridf, pol_nf, s_c, s_f)
        if n_c < 0.0:
            n_c = 0.0
        if n_f < 0.0:
            n_f = 0.0
        a_c = s_c + lc_draws[k] * n_c
        a_f = s_f + lf_draws[k] * n_f
        z_c = s_c + n_c
        z_f = s_f + n_f
        (flow, xc, xf, xd, spc, spf, qc, qf, mu_c, mu_f, v) = _case_solve(
            nu_draws[k], a_c, a_f, z_c, z_f, gridc, gridf, V, VC, VF, par,
            0.0, 0.0)
        yrho = (par[P_WC] * xc ** rho if xc > 0.0 else 0.0) \
            + (par[P_WF] * xf ** rho if xf > 0.0 else 0.0) \
            + (par[P_WD] * xd ** rho if xd > 0.0 else 0.0)
        if yrho > 0.0:
            y = yrho ** (1.0 / rho)
            p = (nu_draws[k] * dscale / y) ** (1.0 / eps)
        else:
            y = 0.0
            p = 0.0
        out_y[k] = y
        out_p[k] = p
        out_xd[k] = xd
        out_xc[k] = xc
        out_xf[k] = xf
        out_nc[k] = n_c
        out_nf[k] = n_f
        states_c[k] = spc
        states_f[k] = spf
