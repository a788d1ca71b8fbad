"""Post-shock intra-period problem: usage, output, and pricing.

Given inventories, orders, and realized shocks, the firm chooses input usage
(bounded by availability), domestic purchases, output, and its price.  Only
the upper availability bounds can bind: marginal products diverge at zero
usage, so the optimum is interior in the lower bounds whenever weights and
availability are positive.  The solver works on the first-order system in
log-usage with the domestic input concentrated out of its own optimality
condition, and classifies the active set over the two availability bounds.

The numba kernels here are shared by the value iteration and the panel
simulation; `solve_stage` is the plain-Python mirror that accepts an
arbitrary continuation oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import SolverError
from .interp import hermite2d_all
from .model import FirmState, ModelParams, ShockDraw, inverse_demand

__all__ = [
    "StageSolution",
    "solve_stage",
    "stage_value_expectation",
    "pack_params",
]

# slots of the packed parameter vector used by the kernels
P_EPS, P_RHO, P_RHOT, P_WC, P_WF, P_WD, P_PD, P_PC, P_PF = range(9)
P_BETA, P_DELTA, P_QBAR, P_DSCALE, P_SIGMA = range(9, 14)
NPAR = 14

_XEPS = 1e-10        # usage floor when evaluating marginal products at a bound
_QTINY = 1e-300      # below this the shadow value counts as zero
_FOC_TOL = 1e-11     # tolerance on log first-order residuals
_BIG = 1e30


def pack_params(params: ModelParams) -> np.ndarray:
    """Flatten a ModelParams into the float vector the kernels consume."""
    par = np.empty(NPAR)
    par[P_EPS] = params.epsilon
    par[P_RHO] = (params.sigma - 1.0) / params.sigma
    par[P_RHOT] = 1.0 - 1.0 / params.epsilon
    inv = 1.0 / params.sigma
    par[P_WC] = params.theta_c ** inv
    par[P_WF] = params.theta_f ** inv
    par[P_WD] = params.theta_d ** inv if params.theta_d > 0 else 0.0
    par[P_PD] = params.p_d
    par[P_PC] = params.p_c
    par[P_PF] = params.p_f
    par[P_BETA] = params.beta
    par[P_DELTA] = params.delta
    par[P_QBAR] = params.beta * (1.0 - params.delta)
    par[P_DSCALE] = params.demand_scale
    par[P_SIGMA] = params.sigma
    return par


# ---------------------------------------------------------------------------
# scalar numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _mr_scale(nu, par):
    # marginal-revenue scale: MRP_i = _mr_scale * yrho**((rhot-rho)/rho) * w_i * x_i**(rho-1)
    if nu <= 0.0:
        return 0.0
    return par[P_RHOT] * (nu * par[P_DSCALE]) ** (1.0 / par[P_EPS])


@njit(cache=True)
def _xd_solve(m, An, par, xd_init):
    """Domestic usage from its optimality condition given the foreign bundle m.

    Returns (x_d, yrho) with yrho = m + w_d * x_d**rho.  The log residual is
    strictly decreasing, so clipped Newton converges from any start.
    """
    wd = par[P_WD]
    rho = par[P_RHO]
    rhot = par[P_RHOT]
    pd = par[P_PD]
    if wd <= 0.0 or An <= 0.0:
        return 0.0, m
    xd0 = (An * wd ** (rhot / rho) / pd) ** (1.0 / (1.0 - rhot))
    if m <= 0.0:
        return xd0, wd * xd0 ** rho
    lnK = np.log(An * wd / pd)
    c = (rhot - rho) / rho
    l = np.log(xd_init) if xd_init > 0.0 else np.log(xd0)
    for _ in range(100):
        e = wd * np.exp(rho * l)
        yr = m + e
        F = lnK + c * np.log(yr) + (rho - 1.0) * l
        if abs(F) < _FOC_TOL:
            break
        Fp = (rhot - rho) * (e / yr) + (rho - 1.0)
        step = F / Fp
        if step > 2.0:
            step = 2.0
        elif step < -2.0:
            step = -2.0
        l -= step
        if l > 600.0:
            l = 600.0
        elif l < -600.0:
            l = -600.0
    xd = np.exp(l)
    return xd, m + wd * xd ** rho


@njit(cache=True, inline="always")
def _revenue(yrho, An, par):
    if yrho <= 0.0 or An <= 0.0:
        return 0.0
    return (An / par[P_RHOT]) * yrho ** (par[P_RHOT] / par[P_RHO])


@njit(cache=True, inline="always")
def _mrp(x, w, yrho, An, par):
    # marginal revenue product of one foreign input at usage x
    if w <= 0.0 or An <= 0.0 or yrho <= 0.0:
        return 0.0
    xe = x if x > _XEPS else _XEPS
    c = (par[P_RHOT] - par[P_RHO]) / par[P_RHO]
    return An * yrho ** c * w * xe ** (par[P_RHO] - 1.0)


@njit(cache=True)
def _solve_1d(nu, An, m_fixed, sp_other, z_own, cap, w_own, own_is_f,
              gc, gf, V, VC, VF, par, x_init, xd_init):
    """Usage of one free foreign input with the other fixed.

    m_fixed is the fixed input's CES contribution, sp_other its next-period
    stock.  Returns (x, xd, yrho, bound) where bound means the availability
    cap binds (positive residual at the cap).  The residual can fail to be
    monotone when the interpolated continuation is locally non-concave, so
    steps are damped whenever the residual worsens and the best point wins.
    """
    rho = par[P_RHO]
    rhot = par[P_RHOT]
    qbar = par[P_QBAR]
    oned = 1.0 - par[P_DELTA]
    c = (rhot - rho) / rho
    lnAw = np.log(An * w_own)
    lcap = np.log(cap)
    l = np.log(x_init) if 0.0 < x_init < cap else lcap - 0.3
    xd = xd_init
    bound = False
    best_l = l
    best_abs = _BIG
    prev_abs = _BIG
    damp = 1.0
    for it in range(60):
        x = np.exp(l)
        m = m_fixed + w_own * x ** rho
        xd, yrho = _xd_solve(m, An, par, xd)
        sp = (z_own - x) * oned
        if own_is_f:
            v, dc, df, dcc, dff, dcf = hermite2d_all(gc, gf, V, VC, VF, sp_other, sp)
            q = qbar * df
            curv = dff
        else:
            v, dc, df, dcc, dff, dcf = hermite2d_all(gc, gf, V, VC, VF, sp, sp_other)
            q = qbar * dc
            curv = dcc
        if q < _QTINY:
            G = 1.0
        else:
            G = lnAw + c * np.log(yrho) + (rho - 1.0) * l - np.log(q)
        at_cap = l >= lcap - 1e-12
        if at_cap and G > 0.0:
            bound = True
            break
        aG = abs(G)
        if aG < best_abs:
            best_abs = aG
            best_l = l
        if aG < _FOC_TOL and not at_cap:
            break
        damp = 0.5 * damp if aG > prev_abs else 1.0
        prev_abs = aG
        e_own = w_own * x ** rho
        tau_own = e_own / yrho
        tau_d = (yrho - m) / yrho
        kappa = (rhot - rho) * tau_d + rho - 1.0
        psi = (rhot - rho) * (1.0 - tau_d * (rhot - rho) / kappa)
        dq = 0.0
        if q > _QTINY:
            dq = oned * x * curv / (q / qbar)
        J = psi * tau_own + (rho - 1.0) + dq
        if J >= -1e-14:
            J = -1.0
        step = damp * G / J
        if step > 1.0:
            step = 1.0
        elif step < -1.0:
            step = -1.0
        if abs(step) < 1e-14:
            break
        l -= step
        if l > lcap:
            l = lcap
        elif l < -600.0:
            l = -600.0
    x = cap if bound else np.exp(best_l)
    m = m_fixed + w_own * x ** rho
    xd, yrho = _xd_solve(m, An, par, xd)
    return x, xd, yrho, bound


@njit(cache=True)
def _solve_2d(nu, An, z_c, z_f, cap_c, cap_f,
              gc, gf, V, VC, VF, par, xc_init, xf_init, xd_init):
    """Both foreign inputs free below the caps; damped Newton in log-usage.

    Returns (x_c, x_f, xd, yrho, bound_c, bound_f): bound flags signal a
    positive residual at the respective cap.
    """
    rho = par[P_RHO]
    rhot = par[P_RHOT]
    qbar = par[P_QBAR]
    wc = par[P_WC]
    wf = par[P_WF]
    oned = 1.0 - par[P_DELTA]
    c = (rhot - rho) / rho
    lnAc = np.log(An * wc)
    lnAf = np.log(An * wf)
    lcap_c = np.log(cap_c)
    lcap_f = np.log(cap_f)
    lc = np.log(xc_init) if 0.0 < xc_init < cap_c else lcap_c - 0.3
    lf = np.log(xf_init) if 0.0 < xf_init < cap_f else lcap_f - 0.3
    xd = xd_init
    bc = False
    bf = False
    best_lc = lc
    best_lf = lf
    best_abs = _BIG
    prev_abs = _BIG
    damp = 1.0
    for it in range(60):
        xc = np.exp(lc)
        xf = np.exp(lf)
        ec = wc * xc ** rho
        ef = wf * xf ** rho
        xd, yrho = _xd_solve(ec + ef, An, par, xd)
        spc = (z_c - xc) * oned
        spf = (z_f - xf) * oned
        v, dc, df, dcc, dff, dcf = hermite2d_all(gc, gf, V, VC, VF, spc, spf)
        qc = qbar * dc
        qf = qbar * df
        lyr = np.log(yrho)
        Gc = 1.0 if qc < _QTINY else lnAc + c * lyr + (rho - 1.0) * lc - np.log(qc)
        Gf = 1.0 if qf < _QTINY else lnAf + c * lyr + (rho - 1.0) * lf - np.log(qf)
        atc = lc >= lcap_c - 1e-12
        atf = lf >= lcap_f - 1e-12
        bc = atc and Gc > 0.0
        bf = atf and Gf > 0.0
        okc = bc or abs(Gc) < _FOC_TOL
        okf = bf or abs(Gf) < _FOC_TOL
        if okc and okf:
            best_lc = lc
            best_lf = lf
            best_abs = 0.0
            break
        if bc and not okf:
            # one cap pinned: finish with the one-dimensional solver
            xf, xd, yrho, bf = _solve_1d(nu, An, wc * cap_c ** rho,
                                         (z_c - cap_c) * oned, z_f, cap_f,
                                         wf, True, gc, gf, V, VC, VF, par,
                                         np.exp(lf), xd)
            return cap_c, xf, xd, yrho, True, bf
        if bf and not okc:
            xc, xd, yrho, bc = _solve_1d(nu, An, wf * cap_f ** rho,
                                         (z_f - cap_f) * oned, z_c, cap_c,
                                         wc, False, gc, gf, V, VC, VF, par,
                                         np.exp(lc), xd)
            return xc, cap_f, xd, yrho, bc, True
        aG = abs(Gc) if abs(Gc) > abs(Gf) else abs(Gf)
        if aG < best_abs:
            best_abs = aG
            best_lc = lc
            best_lf = lf
        damp = 0.5 * damp if aG > prev_abs else 1.0
        prev_abs = aG
        tau_c = ec / yrho
        tau_f = ef / yrho
        tau_d = 1.0 - tau_c - tau_f
        kappa = (rhot - rho) * tau_d + rho - 1.0
        psi = (rhot - rho) * (1.0 - tau_d * (rhot - rho) / kappa)
        dqc = oned * xc * dcc / dc if dc > _QTINY else 0.0
        dqcf = oned * xf * dcf / dc if dc > _QTINY else 0.0
        dqfc = oned * xc * dcf / df if df > _QTINY else 0.0
        dqf = oned * xf * dff / df if df > _QTINY else 0.0
        Jcc = psi * tau_c + (rho - 1.0) + dqc
        Jcf = psi * tau_f + dqcf
        Jfc = psi * tau_c + dqfc
        Jff = psi * tau_f + (rho - 1.0) + dqf
        det = Jcc * Jff - Jcf * Jfc
        if abs(det) < 1e-14:
            sc = Gc / Jcc if Jcc < -1e-14 else -0.25 * Gc
            sf = Gf / Jff if Jff < -1e-14 else -0.25 * Gf
        else:
            sc = (Gc * Jff - Gf * Jcf) / det
            sf = (Gf * Jcc - Gc * Jfc) / det
        sc *= damp
        sf *= damp
        if sc > 1.0:
            sc = 1.0
        elif sc < -1.0:
            sc = -1.0
        if sf > 1.0:
            sf = 1.0
        elif sf < -1.0:
            sf = -1.0
        if abs(sc) + abs(sf) < 1e-14:
            break
        lc -= sc
        lf -= sf
        if lc > lcap_c:
            lc = lcap_c
        elif lc < -600.0:
            lc = -600.0
        if lf > lcap_f:
            lf = lcap_f
        elif lf < -600.0:
            lf = -600.0
    xc = cap_c if bc else np.exp(best_lc)
    xf = cap_f if bf else np.exp(best_lf)
    xd, yrho = _xd_solve(wc * xc ** rho + wf * xf ** rho, An, par, xd)
    return xc, xf, xd, yrho, bc, bf


@njit(cache=True)
def _case_solve(nu, a_c, a_f, z_c, z_f, gc, gf, V, VC, VF, par,
                xc_init, xf_init):
    """Active-set stage solve at one shock point.

    Returns (flow, x_c, x_f, x_d, spc, spf, q_c, q_f, mu_c, mu_f, vcont)
    where flow = revenue - p_d x_d, q_i the next-period shadow values, and
    mu_i the availability multipliers (zero when slack).
    """
    qbar = par[P_QBAR]
    oned = 1.0 - par[P_DELTA]
    wc = par[P_WC]
    wf = par[P_WF]
    An = _mr_scale(nu, par)

    if An <= 0.0:
        spc = z_c * oned
        spf = z_f * oned
        v, dc, df, dcc, dff, dcf = hermite2d_all(gc, gf, V, VC, VF, spc, spf)
        return 0.0, 0.0, 0.0, 0.0, spc, spf, qbar * dc, qbar * df, 0.0, 0.0, v

    rho = par[P_RHO]
    cap_c = a_c if wc > 0.0 else 0.0
    cap_f = a_f if wf > 0.0 else 0.0

    free_c = cap_c > _XEPS
    free_f = cap_f > _XEPS

    if free_c and free_f:
        xc, xf, xd, yrho, bc, bf = _solve_2d(nu, An, z_c, z_f, cap_c, cap_f,
                                             gc, gf, V, VC, VF, par,
                                             xc_init, xf_init, 0.0)
        # a premature cap hit can misclassify the active set; one retry from
        # the candidate point resolves it for a concave continuation
        if bc or bf:
            spc0 = (z_c - xc) * (1.0 - par[P_DELTA])
            spf0 = (z_f - xf) * (1.0 - par[P_DELTA])
            v0, dc0, df0, _, _, _ = hermite2d_all(gc, gf, V, VC, VF, spc0, spf0)
            bad_c = bc and (_mrp(xc, wc, yrho, An, par)
                            - max(par[P_QBAR] * dc0, 0.0)) < -1e-9
            bad_f = bf and (_mrp(xf, wf, yrho, An, par)
                            - max(par[P_QBAR] * df0, 0.0)) < -1e-9
            if bad_c or bad_f:
                xc, xf, xd, yrho, bc, bf = _solve_2d(
                    nu, An, z_c, z_f, cap_c, cap_f, gc, gf, V, VC, VF, par,
                    0.9 * xc, 0.9 * xf, xd)
    elif free_c:
        xf = cap_f
        xc, xd, yrho, bc = _solve_1d(nu, An, wf * xf ** rho,
                                     (z_f - xf) * oned, z_c, cap_c, wc, False,
                                     gc, gf, V, VC, VF, par, xc_init, 0.0)
        bf = True
    elif free_f:
        xc = cap_c
        xf, xd, yrho, bf = _solve_1d(nu, An, wc * xc ** rho,
                                     (z_c - xc) * oned, z_f, cap_f, wf, True,
                                     gc, gf, V, VC, VF, par, xf_init, 0.0)
        bc = True
    else:
        xc = cap_c
        xf = cap_f
        xd, yrho = _xd_solve(wc * xc ** rho + wf * xf ** rho,
                             An, par, 0.0)
        bc = True
        bf = True

    spc = (z_c - xc) * oned
    spf = (z_f - xf) * oned
    v, dc, df, dcc, dff, dcf = hermite2d_all(gc, gf, V, VC, VF, spc, spf)
    qc = qbar * dc
    if qc < 0.0:
        qc = 0.0
    qf = qbar * df
    if qf < 0.0:
        qf = 0.0
    mu_c = 0.0
    mu_f = 0.0
    if bc or not free_c:
        m = _mrp(xc, wc, yrho, An, par) - qc
        mu_c = m if m > 0.0 else 0.0
    if bf or not free_f:
        m = _mrp(xf, wf, yrho, An, par) - qf
        mu_f = m if m > 0.0 else 0.0
    flow = _revenue(yrho, An, par) - par[P_PD] * xd
    return flow, xc, xf, xd, spc, spf, qc, qf, mu_c, mu_f, v


# ---------------------------------------------------------------------------
# Python mirror with a generic continuation oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageSolution:
    """Optimal intra-period decisions at one shock realization."""

    x_c: float
    x_f: float
    x_d: float
    y: float
    p: float
    s_next: FirmState
    stage_value: float
    shadow_c: float = 0.0
    shadow_f: float = 0.0
    mu_c: float = 0.0
    mu_f: float = 0.0


class _OracleAdapter:
    """Wrap a (value, gradient) callable with finite-difference curvature."""

    def __init__(self, cont, scale):
        self.cont = cont
        self.h = 1e-6 * (1.0 + scale)

    def all(self, spc, spf):
        v, grad = self.cont(FirmState(max(spc, 0.0), max(spf, 0.0)))
        dc, df = float(grad[0]), float(grad[1])
        h = self.h
        _, gc_p = self.cont(FirmState(max(spc + h, 0.0), max(spf, 0.0)))
        _, gf_p = self.cont(FirmState(max(spc, 0.0), max(spf + h, 0.0)))
        dcc = (float(gc_p[0]) - dc) / h
        dcf = (float(gc_p[1]) - df) / h
        dff = (float(gf_p[1]) - df) / h
        return float(v), dc, df, dcc, dff, dcf


def _py_xd(m, An, par, xd_init=0.0):
    return _xd_solve(m, An, par, xd_init)


def _py_solve_1d(An, m_fixed, sp_other, z_own, cap, w_own, own_is_f, oracle, par,
                 x_init):
    rho, rhot, qbar = par[P_RHO], par[P_RHOT], par[P_QBAR]
    oned = 1.0 - par[P_DELTA]
    c = (rhot - rho) / rho
    lcap = np.log(cap)
    l = np.log(x_init) if 0.0 < x_init < cap else lcap - 0.3
    xd = 0.0
    bound = False
    for _ in range(200):
        x = np.exp(l)
        m = m_fixed + w_own * x ** rho
        xd, yrho = _py_xd(m, An, par, xd)
        sp = (z_own - x) * oned
        if own_is_f:
            v, dc, df, dcc, dff, dcf = oracle.all(sp_other, sp)
            q, curv = qbar * df, dff
        else:
            v, dc, df, dcc, dff, dcf = oracle.all(sp, sp_other)
            q, curv = qbar * dc, dcc
        G = 1.0 if q < _QTINY else (np.log(An * w_own) + c * np.log(yrho)
                                    + (rho - 1.0) * l - np.log(q))
        at_cap = l >= lcap - 1e-12
        if at_cap and G > 0.0:
            bound = True
            break
        if abs(G) < 1e-10 and not at_cap:
            break
        tau_own = w_own * x ** rho / yrho
        tau_d = (yrho - m) / yrho
        kappa = (rhot - rho) * tau_d + rho - 1.0
        psi = (rhot - rho) * (1.0 - tau_d * (rhot - rho) / kappa)
        dq = oned * x * curv / (q / qbar) if q > _QTINY else 0.0
        J = psi * tau_own + (rho - 1.0) + dq
        if J >= -1e-14:
            J = -1.0
        l -= float(np.clip(G / J, -1.0, 1.0))
        l = min(l, lcap)
    x = cap if bound else np.exp(l)
    xd, yrho = _py_xd(m_fixed + w_own * x ** rho, An, par, xd)
    return x, xd, yrho, bound


def _py_solve_2d(An, z_c, z_f, cap_c, cap_f, oracle, par, xc_init, xf_init):
    rho, rhot, qbar = par[P_RHO], par[P_RHOT], par[P_QBAR]
    wc, wf = par[P_WC], par[P_WF]
    oned = 1.0 - par[P_DELTA]
    c = (rhot - rho) / rho
    lcap_c, lcap_f = np.log(cap_c), np.log(cap_f)
    lc = np.log(xc_init) if 0.0 < xc_init < cap_c else lcap_c - 0.3
    lf = np.log(xf_init) if 0.0 < xf_init < cap_f else lcap_f - 0.3
    xd = 0.0
    bc = bf = False
    for _ in range(200):
        xc, xf = np.exp(lc), np.exp(lf)
        ec, ef = wc * xc ** rho, wf * xf ** rho
        xd, yrho = _py_xd(ec + ef, An, par, xd)
        spc, spf = (z_c - xc) * oned, (z_f - xf) * oned
        v, dc, df, dcc, dff, dcf = oracle.all(spc, spf)
        qc, qf = qbar * dc, qbar * df
        lyr = np.log(yrho)
        Gc = 1.0 if qc < _QTINY else (np.log(An * wc) + c * lyr
                                      + (rho - 1.0) * lc - np.log(qc))
        Gf = 1.0 if qf < _QTINY else (np.log(An * wf) + c * lyr
                                      + (rho - 1.0) * lf - np.log(qf))
        atc, atf = lc >= lcap_c - 1e-12, lf >= lcap_f - 1e-12
        bc, bf = atc and Gc > 0.0, atf and Gf > 0.0
        okc = bc or abs(Gc) < 1e-10
        okf = bf or abs(Gf) < 1e-10
        if okc and okf:
            break
        if bc and not okf:
            xf, xd, yrho, bf = _py_solve_1d(An, wc * cap_c ** rho,
                                            (z_c - cap_c) * oned, z_f, cap_f,
                                            wf, True, oracle, par, np.exp(lf))
            return cap_c, xf, xd, yrho, True, bf
        if bf and not okc:
            xc, xd, yrho, bc = _py_solve_1d(An, wf * cap_f ** rho,
                                            (z_f - cap_f) * oned, z_c, cap_c,
                                            wc, False, oracle, par, np.exp(lc))
            return xc, cap_f, xd, yrho, bc, True
        tau_c, tau_f = ec / yrho, ef / yrho
        tau_d = 1.0 - tau_c - tau_f
        kappa = (rhot - rho) * tau_d + rho - 1.0
        psi = (rhot - rho) * (1.0 - tau_d * (rhot - rho) / kappa)
        dqc = oned * xc * dcc / dc if dc > _QTINY else 0.0
        dqcf = oned * xf * dcf / dc if dc > _QTINY else 0.0
        dqfc = oned * xc * dcf / df if df > _QTINY else 0.0
        dqf = oned * xf * dff / df if df > _QTINY else 0.0
        Jcc = psi * tau_c + (rho - 1.0) + dqc
        Jcf = psi * tau_f + dqcf
        Jfc = psi * tau_c + dqfc
        Jff = psi * tau_f + (rho - 1.0) + dqf
        det = Jcc * Jff - Jcf * Jfc
        if abs(det) < 1e-14:
            sc = Gc / Jcc if Jcc < -1e-14 else -0.25 * Gc
            sf = Gf / Jff if Jff < -1e-14 else -0.25 * Gf
        else:
            sc = (Gc * Jff - Gf * Jcf) / det
            sf = (Gf * Jcc - Gc * Jfc) / det
        lc -= float(np.clip(sc, -1.0, 1.0))
        lf -= float(np.clip(sf, -1.0, 1.0))
        lc, lf = min(lc, lcap_c), min(lf, lcap_f)
    xc = cap_c if bc else np.exp(lc)
    xf = cap_f if bf else np.exp(lf)
    xd, yrho = _py_xd(wc * xc ** rho + wf * xf ** rho, An, par, xd)
    return xc, xf, xd, yrho, bc, bf


def solve_stage(state: FirmState, orders, shock: ShockDraw, cont,
                params: ModelParams) -> StageSolution:
    """Solve the intra-period problem for one firm at one shock realization.

    `cont` maps FirmState to (value, gradient) of the discounted continuation;
    it must be concave for the first-order approach to be valid.  Order costs
    are sunk here and enter the returned stage_value as constants.
    """
    n_c, n_f = float(orders[0]), float(orders[1])
    if n_c < 0 or n_f < 0:
        raise ValueError("orders must be nonnegative")
    par = pack_params(params)
    z_c = state.s_c + n_c
    z_f = state.s_f + n_f
    a_c = state.s_c + shock.lambda_c * n_c
    a_f = state.s_f + shock.lambda_f * n_f
    oned = 1.0 - params.delta
    oracle = _OracleAdapter(cont, max(z_c, z_f, 1.0))
    An = _mr_scale(shock.nu, par)
    rho = par[P_RHO]
    wc, wf = par[P_WC], par[P_WF]
    order_cost = params.p_c * n_c + params.p_f * n_f

    if An <= 0.0:
        spc, spf = z_c * oned, z_f * oned
        v, *_ = oracle.all(spc, spf)
        return StageSolution(0.0, 0.0, 0.0, 0.0, 0.0,
                             FirmState(spc, spf),
                             params.beta * v - order_cost)

    cap_c = a_c if wc > 0 else 0.0
    cap_f = a_f if wf > 0 else 0.0
    if cap_c > _XEPS and cap_f > _XEPS:
        xc, xf, xd, yrho, bc, bf = _py_solve_2d(An, z_c, z_f, cap_c, cap_f,
                                                oracle, par, 0.0, 0.0)
        if bc or bf:
            _, dc0, df0, *_ = oracle.all((z_c - xc) * oned, (z_f - xf) * oned)
            bad_c = bc and (_mrp(xc, wc, yrho, An, par)
                            - max(par[P_QBAR] * dc0, 0.0)) < -1e-9
            bad_f = bf and (_mrp(xf, wf, yrho, An, par)
                            - max(par[P_QBAR] * df0, 0.0)) < -1e-9
            if bad_c or bad_f:
                xc, xf, xd, yrho, bc, bf = _py_solve_2d(
                    An, z_c, z_f, cap_c, cap_f, oracle, par, 0.9 * xc, 0.9 * xf)
    elif cap_c > _XEPS:
        xf = cap_f
        xc, xd, yrho, bc = _py_solve_1d(An, wf * xf ** rho, (z_f - xf) * oned,
                                        z_c, cap_c, wc, False, oracle, par, 0.0)
        bf = True
    elif cap_f > _XEPS:
        xc = cap_c
        xf, xd, yrho, bf = _py_solve_1d(An, wc * xc ** rho, (z_c - xc) * oned,
                                        z_f, cap_f, wf, True, oracle, par, 0.0)
        bc = True
    else:
        xc, xf = cap_c, cap_f
        xd, yrho = _py_xd(wc * xc ** rho + wf * xf ** rho, An, par)
        bc = bf = True

    spc, spf = (z_c - xc) * oned, (z_f - xf) * oned
    v, dc, df, *_ = oracle.all(spc, spf)
    qc, qf = max(par[P_QBAR] * dc, 0.0), max(par[P_QBAR] * df, 0.0)
    mu_c = max(_mrp(xc, wc, yrho, An, par) - qc, 0.0) if (bc or cap_c <= _XEPS) else 0.0
    mu_f = max(_mrp(xf, wf, yrho, An, par) - qf, 0.0) if (bf or cap_f <= _XEPS) else 0.0

    if yrho > 0.0:
        y = yrho ** (1.0 / rho)
        p = inverse_demand(y, shock.nu, params)
    else:
        y, p = 0.0, 0.0
    value = (_revenue(yrho, An, par) - params.p_d * xd - order_cost
             + params.beta * v)
    if not np.isfinite(value):
        raise SolverError("stage solver produced a non-finite value")
    return StageSolution(xc, xf, xd, y, p, FirmState(spc, spf), value,
                         qc, qf, mu_c, mu_f)


def stage_value_expectation(state: FirmState, orders, lattice, cont,
                            params: ModelParams) -> float:
    """Probability-weighted stage value over a shock lattice, orders sunk."""
    total = 0.0
    for draw, prob in zip(lattice.nodes(), lattice.prob):
        total += prob * solve_stage(state, orders, draw, cont, params).stage_value
    return total
