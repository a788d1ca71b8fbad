"""Structural parameters and the model's primitive formulas.

All functions here are pure and operate on scalars or numpy arrays.  The
dynamic layers (stage problem, value iteration, simulation) build on these.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace, asdict

import numpy as np

__all__ = [
    "DeliveryRegime",
    "ModelParams",
    "FirmState",
    "ShockDraw",
    "demand_quantity",
    "inverse_demand",
    "ces_output",
    "inventory_next",
    "lambda_from_days",
    "geometric_sd",
    "apply_tariff",
    "benchmark_params",
]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeliveryRegime:
    """Log-normal delivery-day distribution for one foreign input.

    ln(days) ~ Normal(ln(mu_days), ln(g)) with geometric SD
    g = (mu_days + base_delay_days + delta_delay_days) / mu_days, so one
    geometric-SD band around the median covers roughly 68% of the mass.
    """

    mu_days: float
    base_delay_days: float
    delta_delay_days: float = 0.0

    def __post_init__(self):
        if self.mu_days <= 0:
            raise ValueError(f"mu_days must be positive, got {self.mu_days}")
        if self.delta_delay_days < 0:
            raise ValueError(f"delta_delay_days must be >= 0, got {self.delta_delay_days}")
        if self.geometric_sd() <= 1.0:
            raise ValueError("implied geometric SD must exceed 1")

    def geometric_sd(self) -> float:
        return (self.mu_days + self.base_delay_days + self.delta_delay_days) / self.mu_days

    def log_mean(self) -> float:
        return float(np.log(self.mu_days))

    def log_sd(self) -> float:
        return float(np.log(self.geometric_sd()))

    def with_delta(self, delta_delay_days: float) -> "DeliveryRegime":
        return replace(self, delta_delay_days=float(delta_delay_days))


@dataclass(frozen=True)
class ModelParams:
    """All structural parameters of one model regime."""

    epsilon: float = 4.0            # demand elasticity (> 1)
    sigma: float = 4.511            # input substitution elasticity (> 0, != 1)
    beta: float = 0.96 ** 0.25      # quarterly discount factor
    delta: float = 0.075            # quarterly inventory depreciation
    theta_c: float = 0.444          # CES weight, close foreign input (ROW)
    theta_f: float = 0.089          # CES weight, far foreign input (China)
    sigma_nu: float = 0.638         # log SD of the demand shock
    T: float = 90.0                 # period length in days
    p_d: float = 1.0                # domestic input price
    p_c: float = 1.0                # ROW input price
    p_f: float = 0.87               # China input price, tariff-inclusive
    Y_agg: float = 1.0              # aggregate demand shifter
    P_agg: float = 1.0              # aggregate price index
    delivery_c: DeliveryRegime = field(
        default_factory=lambda: DeliveryRegime(mu_days=19.5, base_delay_days=6.5))
    delivery_f: DeliveryRegime = field(
        default_factory=lambda: DeliveryRegime(mu_days=30.0, base_delay_days=10.0))

    def __post_init__(self):
        if self.epsilon <= 1:
            raise ValueError("epsilon must exceed 1 for a finite markup")
        if self.sigma <= 0 or self.sigma == 1.0:
            raise ValueError("sigma must be positive and different from 1")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")
        if self.theta_c < 0 or self.theta_f < 0 or self.theta_c + self.theta_f > 1 + 1e-12:
            raise ValueError("CES weights must be nonnegative with theta_c + theta_f <= 1")
        if self.sigma_nu <= 0:
            raise ValueError("sigma_nu must be positive")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if min(self.p_d, self.p_c, self.p_f) <= 0:
            raise ValueError("all input prices must be strictly positive")

    # -- derived quantities -------------------------------------------------

    @property
    def theta_d(self) -> float:
        return 1.0 - self.theta_c - self.theta_f

    @property
    def markup(self) -> float:
        return self.epsilon / (self.epsilon - 1.0)

    @property
    def demand_scale(self) -> float:
        """Scale of the demand curve: y = nu * demand_scale * p**(-epsilon)."""
        return self.Y_agg * self.P_agg ** self.epsilon

    def mean_nu(self) -> float:
        return float(np.exp(0.5 * self.sigma_nu ** 2))

    def with_tariff(self, tariff_pp: float) -> "ModelParams":
        """Return a copy with the China price raised by tariff_pp percentage points."""
        return replace(self, p_f=apply_tariff(self.p_f, tariff_pp))

    def with_delta_delays(self, delta_delay_days: float) -> "ModelParams":
        """Return a copy with the extra delay applied to both foreign inputs."""
        return replace(
            self,
            delivery_c=self.delivery_c.with_delta(delta_delay_days),
            delivery_f=self.delivery_f.with_delta(delta_delay_days),
        )

    # -- JSON round trip ----------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None, indent=2) -> str:
        text = json.dumps(self.to_dict(), indent=indent, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        data = dict(data)
        try:
            for key in ("delivery_c", "delivery_f"):
                if key in data and isinstance(data[key], dict):
                    data[key] = DeliveryRegime(**data[key])
            return cls(**data)
        except TypeError as exc:
            raise ValueError(f"malformed parameter document: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "ModelParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class FirmState:
    """Start-of-period inventory stocks of the two foreign inputs."""

    s_c: float
    s_f: float

    def __post_init__(self):
        if self.s_c < 0 or self.s_f < 0:
            raise ValueError("inventory stocks must be nonnegative")


@dataclass(frozen=True)
class ShockDraw:
    """One realization of the demand shock and the two delivery fractions."""

    nu: float
    lambda_c: float
    lambda_f: float

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        for lam in (self.lambda_c, self.lambda_f):
            if not 0.0 <= lam <= 1.0:
                raise ValueError("delivery fractions must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Primitive formulas
# ---------------------------------------------------------------------------

def demand_quantity(p, nu, params: ModelParams):
    """Quantity demanded at price p under demand shock nu."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("price must be strictly positive")
    if np.any(np.asarray(nu) < 0):
        raise ValueError("nu must be nonnegative")
    out = nu * params.Y_agg * (params.P_agg / p) ** params.epsilon
    return float(out) if out.ndim == 0 else out


def inverse_demand(y, nu, params: ModelParams):
    """Price at which quantity y is demanded under shock nu."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("quantity must be strictly positive")
    out = params.P_agg * (nu * params.Y_agg / y) ** (1.0 / params.epsilon)
    return float(out) if out.ndim == 0 else out


def ces_output(x_c, x_f, x_d, params: ModelParams):
    """CES aggregate of the three inputs (degree-1 homogeneous)."""
    x_c = np.asarray(x_c, dtype=float)
    x_f = np.asarray(x_f, dtype=float)
    x_d = np.asarray(x_d, dtype=float)
    if np.any(x_c < 0) or np.any(x_f < 0) or np.any(x_d < 0):
        raise ValueError("inputs must be nonnegative")
    sig = params.sigma
    rho = (sig - 1.0) / sig
    inv = 1.0 / sig
    # 0**rho with rho in (0,1) is 0; guard the sigma<1 branch where rho<0.
    with np.errstate(divide="ignore"):
        total = (
            params.theta_c ** inv * _pow0(x_c, rho)
            + params.theta_f ** inv * _pow0(x_f, rho)
            + params.theta_d ** inv * _pow0(x_d, rho)
        )
    out = np.where(total > 0, total ** (1.0 / rho), 0.0)
    return float(out) if out.ndim == 0 else out


def _pow0(x, rho):
    if rho > 0:
        return np.where(x > 0, np.power(np.where(x > 0, x, 1.0), rho), 0.0)
    # complements case: zero input shuts output down; represent by +inf
    return np.where(x > 0, np.power(np.where(x > 0, x, 1.0), rho), np.inf)


def inventory_next(s, n, x, delta):
    """Law of motion: next-period stock after usage x and full order n."""
    s = np.asarray(s, dtype=float)
    left = s + n - x
    if np.any(left < -1e-12):
        raise ValueError("usage exceeds stock plus order")
    out = np.maximum(left, 0.0) * (1.0 - delta)
    return float(out) if out.ndim == 0 else out


def lambda_from_days(days, T):
    """Fraction of the period an order is usable; capped at a one-period delay."""
    if T <= 0:
        raise ValueError("T must be positive")
    days = np.asarray(days, dtype=float)
    if np.any(days < 0):
        raise ValueError("days must be nonnegative")
    out = np.maximum(0.0, 1.0 - days / T)
    return float(out) if out.ndim == 0 else out


def geometric_sd(regime: DeliveryRegime) -> float:
    """Geometric standard deviation implied by the delay bands."""
    return regime.geometric_sd()


def apply_tariff(base_price, tariff_pp):
    """Raise a price by tariff_pp percentage points over the baseline."""
    if base_price <= 0:
        raise ValueError("base price must be strictly positive")
    factor = 1.0 + tariff_pp / 100.0
    if factor <= 0:
        raise ValueError("tariff implies a nonpositive price")
    return base_price * factor


def benchmark_params(tariff_variant: str = "weighted") -> ModelParams:
    """2018 starting parameters for the two tariff configurations.

    'weighted' uses the import-weighted tariff change (China base price 0.87);
    'average' uses the unweighted mean change (base price 0.84).
    """
    if tariff_variant == "weighted":
        return ModelParams()
    if tariff_variant == "average":
        return replace(ModelParams(), p_f=0.84)
    raise ValueError(f"unknown tariff variant {tariff_variant!r}")
