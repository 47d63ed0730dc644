"""Model inputs and the elementary closed forms every other module consumes.

Units: prices and spreads in ticks, time in seconds.  The tick size defaults
to 1 so the standard parameter set (sigma=0.3, A=1.5, k=0.3, gamma=0.01,
eta=1, c=0.5, T=600, q_bar=50) can be used as-is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

__all__ = [
    "ModelParams",
    "DerivedConstants",
    "ValidatedParams",
    "ValidationError",
    "validate",
    "derived_constants",
    "intensity",
    "spread_map",
    "payoff_rate",
    "hamiltonian",
    "load_params",
    "parse_params",
]


class ValidationError(ValueError):
    """Raised when model parameters violate an invariant.

    Carries the full list of violations in ``violations``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ModelParams:
    """Exogenous scalars of the market model.

    sigma       volatility of the efficient price (tick / sqrt(s))
    A           base order-arrival intensity (1/s)
    k           intensity decay per tick of cum-fee spread, scaled by sigma (1/sqrt(s))
    c           taker fee per market order (ticks)
    gamma       market-maker absolute risk aversion (1/tick)
    eta         exchange absolute risk aversion (1/tick)
    T           trading horizon (s)
    q_bar       inventory cap: quoting stops on a side once |Q| would exceed it
    delta_inf   admissible spread bound (ticks); None resolves to the
                tightest theoretical bound plus one tick at validation
    tick        tick size (price unit; kept at 1 for the standard set)
    n_exchanges number of symmetric exchanges splitting the flow
    """

    sigma: float = 0.3
    A: float = 1.5
    k: float = 0.3
    c: float = 0.5
    gamma: float = 0.01
    eta: float = 1.0
    T: float = 600.0
    q_bar: int = 50
    delta_inf: float | None = None
    tick: float = 1.0
    n_exchanges: int = 1


@dataclass(frozen=True)
class DerivedConstants:
    """Closed-form constants of the contracted, benchmark, oligopoly and
    first-best problems.

    c1/c1_prime drive the contracted-exchange linear system, c1_tilde/
    c1_tilde_prime the no-contract benchmark, c_n/c_n_prime/c_n_hat the
    N-exchange equilibrium, c1_fb/c1_tilde_fb the first-best problem.
    zeta0 is the fee-shift intercept of the incentive coefficients; c_inf
    and delta_cap bound the admissible spread box.
    """

    c0: float
    c1: float
    c1_prime: float
    c1_tilde: float
    c1_tilde_prime: float
    c_n: float
    c_n_prime: float
    c_n_hat: float
    gamma_fb: float
    c1_fb: float
    c1_tilde_fb: float
    zeta0: float
    c_inf: float
    delta_cap: float


@dataclass(frozen=True)
class ValidatedParams(ModelParams):
    """ModelParams that passed validation, with delta_inf resolved and
    derived constants attached."""

    constants: DerivedConstants = None

    @property
    def log_one_plus_sg_k(self) -> float:
        """(1/gamma) * log(1 + sigma*gamma/k): spread offset of the best response."""
        return math.log1p(self.sigma * self.gamma / self.k) / self.gamma

    @property
    def fill_value_factor(self) -> float:
        """sigma/(k + sigma*gamma): per-fill utility value at an unclamped optimum."""
        return self.sigma / (self.k + self.sigma * self.gamma)


def _c0(A: float, alpha: float, beta: float) -> float:
    # C0(alpha, beta) = A*beta*(1+alpha)^(-1/alpha) * (1 - alpha*beta/((1+alpha)(1+beta)))^(1+1/beta)
    shrink = 1.0 - alpha * beta / ((1.0 + alpha) * (1.0 + beta))
    return A * beta * (1.0 + alpha) ** (-1.0 / alpha) * shrink ** (1.0 + 1.0 / beta)


def derived_constants(p: ModelParams) -> DerivedConstants:
    """Evaluate every closed-form constant for a parameter set.

    Assumes the positivity invariants already hold (see validate).
    """
    sigma, A, k, c, gamma, eta, N = p.sigma, p.A, p.k, p.c, p.gamma, p.eta, p.n_exchanges
    alpha = sigma * gamma / k
    beta = sigma * eta / k

    c0 = _c0(A, alpha, beta)
    c1 = k * gamma * eta * sigma / (2.0 * (gamma + eta))
    c1_prime = k * c0 / (sigma * eta)

    # Benchmark: no contract, the MM still pays the decay on the cum-fee
    # spread but collects no fee, hence the exp(-k c / sigma) factor.
    c1_tilde = sigma * gamma * k / 2.0
    c1_tilde_prime = A * math.exp(-k * c / sigma) * (1.0 + alpha) ** (-(1.0 + 1.0 / alpha))

    c_n = k * gamma * eta * sigma / (2.0 * (N * gamma + eta))
    c_n_hat = (
        c0
        * math.exp((N - 1) * k / (sigma * eta))
        * (sigma * gamma + (sigma * eta + k) / N)
        / (sigma * gamma + sigma * eta + k)
    )
    c_n_prime = c_n_hat * k * N / (sigma * eta)

    gamma_fb = gamma * eta / (gamma + eta)
    alpha_fb = sigma * gamma_fb / k
    c1_fb = sigma * gamma_fb * k / 2.0
    c1_tilde_fb = A * (1.0 + alpha_fb) ** (-(1.0 + 1.0 / alpha_fb))

    shrink = 1.0 - sigma**2 * gamma * eta / ((k + sigma * gamma) * (k + sigma * eta))
    zeta0 = c + math.log(shrink) / eta
    c_inf = c + (1.0 / eta + 1.0 / gamma) * math.log1p(alpha) - math.log(shrink) / eta
    delta_cap = c_inf + (sigma / k) * (2.0 * c1_prime + c1 * p.q_bar**2) * p.T

    return DerivedConstants(
        c0=c0,
        c1=c1,
        c1_prime=c1_prime,
        c1_tilde=c1_tilde,
        c1_tilde_prime=c1_tilde_prime,
        c_n=c_n,
        c_n_prime=c_n_prime,
        c_n_hat=c_n_hat,
        gamma_fb=gamma_fb,
        c1_fb=c1_fb,
        c1_tilde_fb=c1_tilde_fb,
        zeta0=zeta0,
        c_inf=c_inf,
        delta_cap=delta_cap,
    )


def validate(p: ModelParams) -> ValidatedParams:
    """Check every invariant; return params with constants attached.

    delta_inf=None resolves to delta_cap + 1.  An explicit delta_inf below
    the delta_cap bound is an error, never a silent clamp: the bound is a
    correctness precondition of the verification argument.
    """
    violations = []
    for name in ("sigma", "A", "k", "gamma", "eta", "T", "tick"):
        value = getattr(p, name)
        if not value > 0.0:
            violations.append(f"{name} must be positive (got {value})")
    if p.c < 0.0:
        violations.append(f"c must be nonnegative (got {p.c})")
    if not (isinstance(p.q_bar, (int, np.integer)) and p.q_bar >= 1):
        violations.append(f"q_bar must be an integer >= 1 (got {p.q_bar})")
    if not (isinstance(p.n_exchanges, (int, np.integer)) and p.n_exchanges >= 1):
        violations.append(f"n_exchanges must be an integer >= 1 (got {p.n_exchanges})")
    if violations:
        raise ValidationError(violations)

    constants = derived_constants(p)
    delta_inf = p.delta_inf
    if delta_inf is None:
        delta_inf = constants.delta_cap + 1.0
    elif delta_inf < constants.delta_cap:
        raise ValidationError(
            [
                f"delta_inf below the admissibility bound: delta_inf={delta_inf} "
                f"< delta_cap={constants.delta_cap}"
            ]
        )

    base = {f.name: getattr(p, f.name) for f in fields(ModelParams)}
    base["delta_inf"] = float(delta_inf)
    return ValidatedParams(constants=constants, **base)


def intensity(delta, p: ValidatedParams):
    """Order-arrival rate A*exp(-k*(delta+c)/sigma) at spread delta (per side).

    Spreads outside [-delta_inf, delta_inf] are rejected.
    """
    delta = np.asarray(delta, dtype=float)
    if np.any(np.abs(delta) > p.delta_inf * (1.0 + 1e-12)):
        raise ValueError(f"spread outside [-{p.delta_inf}, {p.delta_inf}]")
    out = p.A * np.exp(-p.k * (delta + p.c) / p.sigma)
    return float(out) if out.ndim == 0 else out


def spread_map(z, p: ValidatedParams):
    """Best-response spread for an incentive coefficient z, clamped to the
    admissible box: clamp(-z + (1/gamma)log(1+sigma*gamma/k), +-delta_inf)."""
    z = np.asarray(z, dtype=float)
    out = np.clip(-z + p.log_one_plus_sg_k, -p.delta_inf, p.delta_inf)
    return float(out) if out.ndim == 0 else out


def _check_inventory(q, q_bar) -> None:
    q_arr = np.asarray(q)
    if np.any(q_arr != np.round(q_arr)) or np.any(np.abs(q_arr) > q_bar):
        raise ValueError(f"inventory must be an integer in [-{q_bar}, {q_bar}] (got {q})")


def payoff_rate(delta, z, q: int, p: ValidatedParams):
    """Expected utility-rate h of quoting delta=(ask, bid) under incentive
    z=(zS, za, zb) at inventory q; the side driving Q past +-q_bar is off.

    Vectorised over delta so maximisers can be located by grid search.
    """
    _check_inventory(q, p.q_bar)
    delta_a, delta_b = np.asarray(delta[0], float), np.asarray(delta[1], float)
    _, za, zb = z
    total = np.zeros(np.broadcast(delta_a, delta_b).shape)
    if q > -p.q_bar:  # ask side active: a sell by the MM lowers Q
        total = total + intensity(delta_a, p) * (-np.expm1(-p.gamma * (za + delta_a))) / p.gamma
    if q < p.q_bar:  # bid side active: a buy raises Q
        total = total + intensity(delta_b, p) * (-np.expm1(-p.gamma * (zb + delta_b))) / p.gamma
    return float(total) if total.ndim == 0 else total


def hamiltonian(z, q: int, p: ValidatedParams) -> float:
    """sup over admissible (ask, bid) of payoff_rate, via the closed-form
    per-side maximiser spread_map(z_i)."""
    _check_inventory(q, p.q_bar)
    _, za, zb = z
    return float(payoff_rate((spread_map(za, p), spread_map(zb, p)), z, q, p))


_PARAM_TYPES = {
    "sigma": float,
    "A": float,
    "k": float,
    "c": float,
    "gamma": float,
    "eta": float,
    "T": float,
    "q_bar": int,
    "delta_inf": float,
    "tick": float,
    "n_exchanges": int,
}


def parse_params(text: str, defaults: ModelParams | None = None) -> ModelParams:
    """Parse a flat key=value parameter block; '#' starts a comment.

    Unknown keys are errors, not warnings.  Missing keys take the standard
    defaults of ModelParams (or the supplied ones).
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError([f"line {lineno}: expected key=value, got {raw!r}"])
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _PARAM_TYPES:
            raise ValidationError([f"line {lineno}: unknown parameter {key!r}"])
        if key in values:
            raise ValidationError([f"line {lineno}: duplicate parameter {key!r}"])
        try:
            values[key] = _PARAM_TYPES[key](val)
        except ValueError:
            raise ValidationError([f"line {lineno}: cannot parse {key}={val!r}"]) from None
    return replace(defaults or ModelParams(), **values)


def load_params(path) -> ModelParams:
    """Read a flat key=value configuration file into ModelParams."""
    return parse_params(Path(path).read_text())
