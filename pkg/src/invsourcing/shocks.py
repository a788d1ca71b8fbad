"""Discrete representations of the demand and delivery-time distributions.

The dynamic program integrates over an equiprobable-bin lattice (conditional
means per bin), while the panel simulation draws from the continuous
distributions.  Delivery days map into usable fractions with a hard cap, so
the fraction distribution carries a point mass at zero that the lattice
represents exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri  # standard normal cdf / quantile

from .errors import ConfigurationError
from .model import DeliveryRegime, ModelParams, ShockDraw, lambda_from_days

__all__ = [
    "ShockLattice",
    "RandomStream",
    "ShockSample",
    "discretize_lognormal",
    "build_lambda_lattice",
    "build_shock_lattice",
    "sample_shocks",
    "dump_lattice_csv",
]

_ATOM_EPS = 1e-14


def discretize_lognormal(log_mean, log_sd, n_nodes):
    """Equiprobable-bin discretization of a log-normal distribution.

    Nodes are the conditional means of each probability bin, so the discrete
    mean reproduces exp(log_mean + log_sd**2 / 2) exactly.
    """
    if n_nodes < 3:
        raise ConfigurationError("n_nodes must be at least 3")
    if log_sd <= 0:
        raise ValueError("log_sd must be positive")
    cuts = ndtri(np.arange(1, n_nodes) / n_nodes)  # standardized interior cuts
    upper = ndtr(np.concatenate([cuts, [np.inf]]) - log_sd)
    lower = ndtr(np.concatenate([[-np.inf], cuts]) - log_sd)
    mean = np.exp(log_mean + 0.5 * log_sd**2)
    nodes = mean * (upper - lower) * n_nodes
    probs = np.full(n_nodes, 1.0 / n_nodes)
    return nodes, probs


def build_lambda_lattice(regime: DeliveryRegime, T, n_nodes):
    """Discretize the delivery fraction implied by a delivery-day regime.

    Mass with days >= T collapses onto an exact atom at fraction zero; the
    remaining mass is split into equiprobable bins of days | days < T, each
    represented by its conditional mean mapped through the day-to-fraction
    formula (the map is affine below the cap, so bin means are exact).
    """
    if n_nodes < 3:
        raise ConfigurationError("n_nodes must be at least 3")
    if T <= 0:
        raise ValueError("T must be positive")
    mu, s = regime.log_mean(), regime.log_sd()
    z_cap = (np.log(T) - mu) / s
    p_atom = 1.0 - ndtr(z_cap)

    if p_atom < _ATOM_EPS:
        days, probs = discretize_lognormal(mu, s, n_nodes)
        # numerical safety: the exact conditional means can only sit below T
        # when the tail mass is negligible, but cap anyway
        lam = np.minimum(1.0, np.maximum(0.0, 1.0 - days / T))
        return _sorted(lam, probs)

    n_bins = n_nodes - 1
    if n_bins < 2:
        raise ConfigurationError("n_nodes too small for the zero-fraction atom")
    # equiprobable bins of the distribution truncated below the cap
    probs_at_cut = ndtr(z_cap) * np.arange(1, n_bins) / n_bins
    cuts = ndtri(probs_at_cut)
    upper = ndtr(np.concatenate([cuts, [z_cap]]) - s)
    lower = ndtr(np.concatenate([[-np.inf], cuts]) - s)
    mean = np.exp(mu + 0.5 * s**2)
    bin_prob = (1.0 - p_atom) / n_bins
    day_nodes = mean * (upper - lower) / bin_prob
    lam = np.maximum(0.0, 1.0 - day_nodes / T)
    nodes = np.concatenate([[0.0], lam])
    probs = np.concatenate([[p_atom], np.full(n_bins, bin_prob)])
    return _sorted(nodes, probs)


def _sorted(nodes, probs):
    order = np.argsort(nodes, kind="stable")
    return nodes[order], probs[order]


@dataclass(frozen=True)
class ShockLattice:
    """Tensor-product lattice over (nu, lambda_c, lambda_f).

    Flat arrays enumerate every node; the per-dimension marginals are kept
    for solvers that exploit the product structure.
    """

    nu: np.ndarray
    lam_c: np.ndarray
    lam_f: np.ndarray
    prob: np.ndarray
    nu_nodes: np.ndarray
    nu_probs: np.ndarray
    lc_nodes: np.ndarray
    lc_probs: np.ndarray
    lf_nodes: np.ndarray
    lf_probs: np.ndarray

    def __post_init__(self):
        total = float(np.sum(self.prob))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"lattice probabilities sum to {total}, not 1")
        if np.any(self.prob < 0):
            raise ValueError("lattice probabilities must be nonnegative")
        for lam in (self.lam_c, self.lam_f):
            if np.any(lam < 0) or np.any(lam > 1):
                raise ValueError("delivery fractions must lie in [0, 1]")
        if np.any(self.nu < 0):
            raise ValueError("demand shocks must be nonnegative")

    def __len__(self):
        return self.nu.size

    def nodes(self):
        """Nodes as a list of ShockDraw (convenience view)."""
        return [ShockDraw(float(v), float(c), float(f))
                for v, c, f in zip(self.nu, self.lam_c, self.lam_f)]

    def mean(self, which: str) -> float:
        arr = {"nu": self.nu, "lambda_c": self.lam_c, "lambda_f": self.lam_f}[which]
        return float(np.sum(arr * self.prob))


def build_shock_lattice(params: ModelParams, n_nu=15, n_lc=9, n_lf=9,
                        max_size=2_000_000) -> ShockLattice:
    """Tensor product of the three marginal lattices (shocks are independent)."""
    for n in (n_nu, n_lc, n_lf):
        if n < 3:
            raise ConfigurationError("node counts must be at least 3")
    if n_nu * n_lc * n_lf > max_size:
        raise ConfigurationError(
            f"lattice size {n_nu * n_lc * n_lf} exceeds the cap {max_size}")
    nu_nodes, nu_probs = discretize_lognormal(0.0, params.sigma_nu, n_nu)
    lc_nodes, lc_probs = build_lambda_lattice(params.delivery_c, params.T, n_lc)
    lf_nodes, lf_probs = build_lambda_lattice(params.delivery_f, params.T, n_lf)

    nu, lc, lf = np.meshgrid(nu_nodes, lc_nodes, lf_nodes, indexing="ij")
    pr = (nu_probs[:, None, None] * lc_probs[None, :, None]
          * lf_probs[None, None, :])
    return ShockLattice(
        nu=nu.ravel(), lam_c=lc.ravel(), lam_f=lf.ravel(), prob=pr.ravel(),
        nu_nodes=nu_nodes, nu_probs=nu_probs,
        lc_nodes=lc_nodes, lc_probs=lc_probs,
        lf_nodes=lf_nodes, lf_probs=lf_probs,
    )


@dataclass(frozen=True)
class RandomStream:
    """Reproducible random source; identical (seed, stream_id) gives identical draws."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(
            np.random.Philox(np.random.SeedSequence((self.seed, self.stream_id))))


@dataclass(frozen=True)
class ShockSample:
    """Vectorized sample of shock draws."""

    nu: np.ndarray
    lam_c: np.ndarray
    lam_f: np.ndarray

    def __len__(self):
        return self.nu.size

    def __iter__(self):
        for v, c, f in zip(self.nu, self.lam_c, self.lam_f):
            yield ShockDraw(float(v), float(c), float(f))


def sample_shocks(stream: RandomStream, params: ModelParams, count: int) -> ShockSample:
    """iid draws from the continuous shock distributions, cap applied."""
    rng = stream.generator()
    nu = np.exp(params.sigma_nu * rng.standard_normal(count))
    days_c = np.exp(params.delivery_c.log_mean()
                    + params.delivery_c.log_sd() * rng.standard_normal(count))
    days_f = np.exp(params.delivery_f.log_mean()
                    + params.delivery_f.log_sd() * rng.standard_normal(count))
    return ShockSample(
        nu=nu,
        lam_c=lambda_from_days(days_c, params.T),
        lam_f=lambda_from_days(days_f, params.T),
    )


def dump_lattice_csv(lattice: ShockLattice, path):
    """Debug dump of the flat lattice (nu, lambda_c, lambda_f, prob)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nu", "lambda_c", "lambda_f", "prob"])
        for v, c, f, p in zip(lattice.nu, lattice.lam_c, lattice.lam_f, lattice.prob):
            writer.writerow([f"{v:.12g}", f"{c:.12g}", f"{f:.12g}", f"{p:.12g}"])
