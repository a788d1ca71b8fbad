"""Panel simulation under a solved policy and the moments built from it.

Input purchases are valued at delivered (tariff-inclusive) prices, inventory
stocks at the same input prices measured post-arrival at the start of the
period, and all ratios are taken against quarterly sales as pooled
cross-section aggregates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridCoverageError
from .model import ModelParams
from .shocks import RandomStream, sample_shocks
from .solver import OrderPolicyField, ValueField
from .stage import pack_params
from . import sweeps

__all__ = [
    "FirmPanel",
    "MomentSet",
    "QuarterPlan",
    "simulate_panel",
    "simulate_transition",
    "moment_deltas",
    "MOMENT_ROWS",
]

MOMENT_ROWS = (
    "output", "price",
    "inputs_c_share", "inputs_f_share", "inputs_d_share",
    "inv_c_share", "inv_f_share", "inv_total_share",
)


@dataclass(frozen=True)
class MomentSet:
    """Cross-sectional moments of one simulated regime."""

    output: float
    price: float
    inputs_c_share: float
    inputs_f_share: float
    inputs_d_share: float
    inv_c_share: float
    inv_f_share: float
    inv_total_share: float

    def __post_init__(self):
        shares = (self.inputs_c_share, self.inputs_f_share, self.inputs_d_share,
                  self.inv_c_share, self.inv_f_share, self.inv_total_share)
        if any(s < 0 for s in shares):
            raise ValueError("moment shares must be nonnegative")
        if abs(self.inv_total_share - self.inv_c_share - self.inv_f_share) > 1e-9:
            raise ValueError("total inventory share must equal the sum of parts")

    def as_dict(self):
        return {row: getattr(self, row) for row in MOMENT_ROWS}


@dataclass
class FirmPanel:
    """Cross-section of firm inventory states at one quarter."""

    s_c: np.ndarray
    s_f: np.ndarray
    quarter: int = 0

    def __post_init__(self):
        if self.s_c.shape != self.s_f.shape:
            raise ValueError("panel state arrays must align")
        if np.any(self.s_c < 0) or np.any(self.s_f < 0):
            raise ValueError("panel states must be nonnegative")

    @property
    def size(self):
        return self.s_c.size

    def copy(self):
        return FirmPanel(self.s_c.copy(), self.s_f.copy(), self.quarter)


class _Accumulator:
    def __init__(self):
        self.sales = 0.0
        self.y = 0.0
        self.p = 0.0
        self.p_pow = 0.0
        self.buy_c = 0.0
        self.buy_f = 0.0
        self.buy_d = 0.0
        self.inv_c = 0.0
        self.inv_f = 0.0
        self.count = 0

    def add(self, params, s_c0, s_f0, y, p, xd, nc, nf):
        self.inv_c += params.p_c * float(np.sum(s_c0))
        self.inv_f += params.p_f * float(np.sum(s_f0))
        self.sales += float(np.sum(p * y))
        self.y += float(np.sum(y))
        self.p += float(np.sum(p))
        self.p_pow += float(np.sum(p ** (1.0 - params.epsilon)))
        self.buy_c += params.p_c * float(np.sum(nc))
        self.buy_f += params.p_f * float(np.sum(nf))
        self.buy_d += params.p_d * float(np.sum(xd))
        self.count += y.size

    def moments(self, params, price_index="mean") -> MomentSet:
        if self.sales <= 0.0:
            raise ValueError("sampled sales are zero; nothing to normalize by")
        if price_index == "mean":
            price = self.p / self.count
        elif price_index == "ces":
            price = (self.p_pow / self.count) ** (1.0 / (1.0 - params.epsilon))
        else:
            raise ValueError(f"unknown price_index {price_index!r}")
        return MomentSet(
            output=self.y / self.count,
            price=price,
            inputs_c_share=self.buy_c / self.sales,
            inputs_f_share=self.buy_f / self.sales,
            inputs_d_share=self.buy_d / self.sales,
            inv_c_share=self.inv_c / self.sales,
            inv_f_share=self.inv_f / self.sales,
            inv_total_share=(self.inv_c + self.inv_f) / self.sales,
        )


def _quarter_draws(params, seed, quarter, J):
    sample = sample_shocks(RandomStream(seed, quarter), params, J)
    return sample.nu, sample.lam_c, sample.lam_f


def _advance(panel, params, par, value, policy, nu, lc, lf, out):
    gc = value.grid.nodes_c
    gf = value.grid.nodes_f
    Vc, Vf = value.slopes
    sweeps.simulate_quarter(panel.s_c, panel.s_f, gc, gf, value.values, Vc, Vf,
                            policy.n_c, policy.n_f, par, nu, lc, lf,
                            out["y"], out["p"], out["xd"], out["xc"], out["xf"],
                            out["nc"], out["nf"], out["clamped"])


def _out_arrays(J):
    return {k: np.empty(J) for k in ("y", "p", "xd", "xc", "xf", "nc", "nf")} \
        | {"clamped": np.zeros(J, dtype=np.int64)}


def simulate_panel(policy: OrderPolicyField, value: ValueField,
                   params: ModelParams, J: int = 20000, burn_in: int = 200,
                   sample: int = 200, seed: int = 1234,
                   price_index: str = "mean", max_clamp_share: float = 0.01,
                   return_panel: bool = False):
    """Stationary-distribution moments under a converged policy.

    The panel starts at the deterministic-usage point, burns in, then pools
    moments over the sample window.  Reproducible bit-for-bit per seed.
    """
    if J < 1 or burn_in < 0 or sample < 1:
        raise ValueError("need J >= 1, burn_in >= 0, sample >= 1")
    par = pack_params(params)
    gc = value.grid.nodes_c
    gf = value.grid.nodes_f
    s0c = min(0.5 * gc[-1], float(np.median(gc)))
    s0f = min(0.5 * gf[-1], float(np.median(gf)))
    panel = FirmPanel(np.full(J, s0c), np.full(J, s0f))
    out = _out_arrays(J)
    acc = _Accumulator()
    clamped = 0

    for q in range(burn_in + sample):
        if q >= burn_in:
            s_c0 = panel.s_c.copy()
            s_f0 = panel.s_f.copy()
        nu, lc, lf = _quarter_draws(params, seed, q, J)
        _advance(panel, params, par, value, policy, nu, lc, lf, out)
        panel.quarter += 1
        if q >= burn_in:
            acc.add(params, s_c0, s_f0, out["y"], out["p"], out["xd"],
                    out["nc"], out["nf"])
            clamped += int(out["clamped"].sum())

    clamp_share = clamped / (J * sample)
    if clamp_share > max_clamp_share:
        raise GridCoverageError(
            f"{100 * clamp_share:.2f}% of firm-quarters clamped at the grid "
            f"bound (limit {100 * max_clamp_share:.2f}%); enlarge the grid")
    moments = acc.moments(params, price_index)
    if return_panel:
        return moments, panel
    return moments


@dataclass(frozen=True)
class QuarterPlan:
    """One transition quarter: its parameters, order policy, and the
    continuation value that priced the within-quarter decisions."""

    params: ModelParams
    policy: OrderPolicyField
    cont_value: ValueField


def simulate_transition(plans, J: int = 20000, seed: int = 1234,
                        panel0: FirmPanel | None = None,
                        price_index: str = "mean"):
    """Forward panel simulation through a quarter-indexed policy sequence.

    Returns one MomentSet per quarter.  The panel should start from the
    initial stationary distribution; draws are reproducible per seed and
    quarter index.
    """
    if panel0 is None:
        raise ValueError("panel0 (initial stationary panel) is required")
    plans = list(plans)
    if not plans:
        raise ValueError("empty plan sequence")
    panel = panel0.copy()
    J = panel.size
    out = _out_arrays(J)
    path = []
    for t, plan in enumerate(plans):
        par = pack_params(plan.params)
        s_c0 = panel.s_c.copy()
        s_f0 = panel.s_f.copy()
        nu, lc, lf = _quarter_draws(plan.params, seed, t, J)
        _advance(panel, plan.params, par, plan.cont_value, plan.policy,
                 nu, lc, lf, out)
        acc = _Accumulator()
        acc.add(plan.params, s_c0, s_f0, out["y"], out["p"], out["xd"],
                out["nc"], out["nf"])
        path.append(acc.moments(plan.params, price_index))
    return path


def moment_deltas(base: MomentSet, alt: MomentSet) -> dict:
    """Per-row percent changes 100*(alt/base - 1)."""
    out = {}
    for row in MOMENT_ROWS:
        b = getattr(base, row)
        a = getattr(alt, row)
        if b == 0:
            raise ValueError(f"zero base moment for {row!r}")
        out[row] = 100.0 * (a / b - 1.0)
    return out
