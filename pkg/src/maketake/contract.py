"""Incentive coefficients, optimal and benchmark quotes, contract accrual,
the N-exchange equilibrium contract, the risk-neutral and first-best closed
forms, and the taker-fee heuristic.

Every value-function ratio is computed as a difference of log u scaled by
the regime exponent; u and v themselves are never formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import ValidatedParams, hamiltonian
from .solver import SolverError, ValueGrid, solve_matrix_exp

__all__ = [
    "ContractPolicy",
    "AccrualState",
    "FillEvent",
    "FirstBestSolution",
    "FeeSuggestion",
    "contracted_policy",
    "benchmark_policy",
    "risk_neutral_policy",
    "nash_policy",
    "constant_policy",
    "first_best",
    "accrue",
    "reservation_y0",
    "indifference_y0",
    "taker_fee_heuristic",
    "write_policy_csv",
]


def _shrink(vp: ValidatedParams) -> float:
    # 1 - sigma^2*gamma*eta / ((k+sigma*gamma)(k+sigma*eta)); always in (0,1)
    return 1.0 - vp.sigma**2 * vp.gamma * vp.eta / (
        (vp.k + vp.sigma * vp.gamma) * (vp.k + vp.sigma * vp.eta)
    )


@dataclass(frozen=True)
class ContractPolicy:
    """Quotes and incentive coefficients on [0,T] x [-q_bar, q_bar].

    The spread of side i at (t, q) is a0_i + (sigma/k) * (log u(t,q) -
    log u(t, q -+ 1)); regimes without a value grid have constant spreads.
    Incentive coefficients, when the regime carries a contract, are the
    aggregate ones faced by the market maker: Z^i = m - delta_i and
    Z^S = zs_coef * q.  Sides that cannot trade at the inventory cap are
    explicit absences (None), never sentinel numbers.
    """

    regime: str
    vp: ValidatedParams = field(repr=False)
    grid: ValueGrid | None = field(repr=False)
    y0: float
    a0_ask: float
    a0_bid: float
    sigk: float
    zs_coef: float
    has_contract: bool
    m_const: float
    n_exchanges: int = 1
    ask_lattice: np.ndarray = field(repr=False, default=None)
    bid_lattice: np.ndarray = field(repr=False, default=None)
    lattice_times: np.ndarray = field(repr=False, default=None)

    @property
    def q_bar(self) -> int:
        return self.vp.q_bar

    def _spread_pair(self, t: float, q: int):
        q = int(q)
        if not -self.q_bar <= q <= self.q_bar:
            raise ValueError(f"q={q} outside [-{self.q_bar}, {self.q_bar}]")
        if self.grid is None:
            ask = self.a0_ask if q > -self.q_bar else None
            bid = self.a0_bid if q < self.q_bar else None
            return ask, bid
        row = self.grid.log_u_at(t)
        qi = q + self.q_bar
        ask = bid = None
        if q > -self.q_bar:
            ask = self.a0_ask + self.sigk * (row[qi] - row[qi - 1])
        if q < self.q_bar:
            bid = self.a0_bid + self.sigk * (row[qi] - row[qi + 1])
        return ask, bid

    def ask_spread(self, t: float, q: int):
        return self._spread_pair(t, q)[0]

    def bid_spread(self, t: float, q: int):
        return self._spread_pair(t, q)[1]

    def z_s(self, q: int):
        if not self.has_contract:
            return None
        return self.zs_coef * q

    def z_a(self, t: float, q: int):
        if not self.has_contract:
            return None
        ask = self.ask_spread(t, q)
        return None if ask is None else self.m_const - ask

    def z_b(self, t: float, q: int):
        if not self.has_contract:
            return None
        bid = self.bid_spread(t, q)
        return None if bid is None else self.m_const - bid

    def per_exchange_z_s(self, q: int):
        z = self.z_s(q)
        return None if z is None else z / self.n_exchanges

    def per_exchange_z_a(self, t: float, q: int):
        z = self.z_a(t, q)
        return None if z is None else z / self.n_exchanges

    def per_exchange_z_b(self, t: float, q: int):
        z = self.z_b(t, q)
        return None if z is None else z / self.n_exchanges

    def dominating_rates(self, margin: float = 0.1) -> tuple[float, float]:
        """Per-side thinning bounds from the lattice-minimum spreads.

        Guarded against overflow; the kernel additionally verifies every
        acceptance ratio stays at or below one.
        """
        vp = self.vp
        out = []
        for lat in (self.ask_lattice, self.bid_lattice):
            d_min = float(np.nanmin(lat)) - margin
            arg = -vp.k * (d_min + vp.c) / vp.sigma
            if arg > 700.0 or not math.isfinite(arg):
                raise SolverError(
                    f"dominating intensity overflow (min spread {d_min}); "
                    "delta_inf too extreme for simulation"
                )
            out.append(vp.A * math.exp(arg))
        return out[0], out[1]

    def kernel_args(self):
        """Arrays and scalars in the layout the path kernel consumes
        (built once per policy)."""
        cached = self.__dict__.get("_kernel_args")
        if cached is None:
            cached = self._build_kernel_args()
            self.__dict__["_kernel_args"] = cached
        return cached

    def _build_kernel_args(self):
        if self.grid is not None:
            w, V, cv = self.grid._eig_w, self.grid._eig_V, self.grid._eig_c
            has_u = 1
        else:
            w = np.zeros(1)
            V = np.zeros((2 * self.q_bar + 1, 1))
            cv = np.ones(1)
            has_u = 0
        return (
            has_u,
            float(self.a0_ask),
            float(self.a0_bid),
            float(self.sigk),
            w,
            V,
            cv,
            1 if self.has_contract else 0,
            float(self.m_const),
            float(self.zs_coef),
            float(self.y0),
        )


def _build_lattices(grid: ValueGrid, a0_ask: float, a0_bid: float, sigk: float):
    lu = grid.log_u
    n_t, n_q = lu.shape
    ask = np.full((n_t, n_q), np.nan)
    bid = np.full((n_t, n_q), np.nan)
    ask[:, 1:] = a0_ask + sigk * (lu[:, 1:] - lu[:, :-1])
    bid[:, :-1] = a0_bid + sigk * (lu[:, :-1] - lu[:, 1:])
    return ask, bid


def _finish_policy(regime, vp, grid, y0, a0_ask, a0_bid, sigk, zs_coef,
                   has_contract, m_const, n_exchanges=1) -> ContractPolicy:
    if grid is not None:
        ask, bid = _build_lattices(grid, a0_ask, a0_bid, sigk)
        times = grid.times
    else:
        n_q = 2 * vp.q_bar + 1
        ask = np.full((2, n_q), a0_ask)
        bid = np.full((2, n_q), a0_bid)
        ask[:, 0] = np.nan  # ask side off at q = -q_bar
        bid[:, -1] = np.nan  # bid side off at q = +q_bar
        times = np.array([0.0, vp.T])
    worst = np.nanmax(np.abs(np.concatenate([ask.ravel(), bid.ravel()])))
    if worst > vp.delta_inf * (1.0 + 1e-12):
        raise SolverError(
            f"{regime}: lattice spread {worst} exceeds the admissible bound "
            f"delta_inf={vp.delta_inf}"
        )
    return ContractPolicy(
        regime=regime,
        vp=vp,
        grid=grid,
        y0=float(y0),
        a0_ask=float(a0_ask),
        a0_bid=float(a0_bid),
        sigk=float(sigk),
        zs_coef=float(zs_coef),
        has_contract=has_contract,
        m_const=float(m_const),
        n_exchanges=n_exchanges,
        ask_lattice=ask,
        bid_lattice=bid,
        lattice_times=times,
    )


def _require_regime(grid: ValueGrid, expected: str) -> None:
    if grid.regime != expected:
        raise SolverError(f"policy needs a {expected!r} grid, got {grid.regime!r}")


def contracted_policy(grid: ValueGrid, vp: ValidatedParams, y0: float = 0.0) -> ContractPolicy:
    """Optimal incentive scheme of the single risk-averse exchange.

    Z^S = -gamma q/(gamma+eta), Z^i = zeta0 + (1/eta) log(v/v_neighbour),
    quotes = -Z^i + (1/gamma) log(1+sigma gamma/k).
    """
    _require_regime(grid, "exchange")
    m = vp.log_one_plus_sg_k
    a0 = m - vp.constants.zeta0
    return _finish_policy(
        "contracted", vp, grid, y0, a0, a0, vp.sigma / vp.k,
        -vp.gamma / (vp.gamma + vp.eta), True, m,
    )


def benchmark_policy(grid: ValueGrid, vp: ValidatedParams) -> ContractPolicy:
    """No-contract quotes: (sigma/k) log-ratio plus the constant offset; no
    incentive coefficients at all."""
    _require_regime(grid, "benchmark")
    m = vp.log_one_plus_sg_k
    return _finish_policy("benchmark", vp, grid, 0.0, m, m, vp.sigma / vp.k, 0.0, False, m)


def risk_neutral_policy(vp: ValidatedParams, y0: float = 0.0) -> ContractPolicy:
    """Limit of a risk-neutral exchange: constant quotes, full transfer of
    the price-driven inventory risk (Z^S = -q)."""
    m = vp.log_one_plus_sg_k
    spread = vp.sigma / vp.k - vp.fill_value_factor + m - vp.c
    if vp.delta_inf < spread:
        raise SolverError(
            f"risk-neutral spread {spread} violates its admissibility "
            f"precondition delta_inf >= {spread}"
        )
    return _finish_policy("risk_neutral", vp, None, y0, spread, spread, 0.0, -1.0, True, m)


def nash_policy(grid: ValueGrid, vp: ValidatedParams, y0: float = 0.0) -> ContractPolicy:
    """Symmetric equilibrium of N identical exchanges; the market maker
    faces the aggregate coefficients N zeta^0.

    Per-exchange values are the aggregate ones divided by N; the
    per-exchange transfer starts from y0/N.
    """
    _require_regime(grid, "nash")
    N = vp.n_exchanges
    if grid.n_exchanges != N:
        raise SolverError(
            f"nash grid was built for N={grid.n_exchanges}, params say N={N}"
        )
    m = vp.log_one_plus_sg_k
    a0 = m - vp.c - (N / vp.eta) * math.log(_shrink(vp))
    return _finish_policy(
        "nash", vp, grid, y0, a0, a0, vp.sigma / vp.k,
        -N * vp.gamma / (vp.eta + N * vp.gamma), True, m, n_exchanges=N,
    )


def constant_policy(vp: ValidatedParams, delta_ask: float, delta_bid: float) -> ContractPolicy:
    """Frozen constant quotes with no contract attached (test and
    calibration instrument)."""
    return _finish_policy("frozen", vp, None, 0.0, delta_ask, delta_bid, 0.0, 0.0, False, 0.0)


@dataclass(frozen=True)
class FirstBestSolution:
    """Full-control benchmark: the exchange dictates the quotes and pays a
    terminal lump-sum transfer."""

    gamma_fb: float
    grid: ValueGrid = field(repr=False)
    policy: ContractPolicy = field(repr=False)
    log_neg_R: float
    log_neg_v0: float  # log(-v_fb(0, q0))
    log_lambda_star: float
    q0: int = 0

    @property
    def v0(self) -> float:
        return -math.exp(self.log_neg_v0)

    @property
    def lambda_star(self) -> float:
        return math.exp(self.log_lambda_star)

    def xi_star(self, X_T: float, Q_T: float, S_T: float, N_T: float) -> float:
        """Terminal transfer from path aggregates (N_T = total fills)."""
        vp = self.policy.vp
        g, e = vp.gamma, vp.eta
        log_lg = self.log_lambda_star + math.log(g / e)
        return (log_lg - g * (X_T + Q_T * S_T) + e * vp.c * N_T) / (e + g)


def first_best(
    vp: ValidatedParams,
    R: float | None = None,
    *,
    log_neg_R: float | None = None,
    q0: int = 0,
    times=None,
) -> FirstBestSolution:
    """Solve the first-best problem: effective risk aversion
    Gamma = gamma*eta/(gamma+eta), fee absorbed into the quote, value
    -u^{-sigma*eta/k}, and the Lagrange multiplier of the participation
    constraint.

    R is the reservation utility (< 0); log_neg_R = log(-R) can be given
    instead when R itself is below double-precision range.
    """
    if log_neg_R is None:
        if R is None or not R < 0.0:
            raise ValueError(f"reservation utility must be negative (got {R})")
        log_neg_R = math.log(-R)
    gamma_fb = vp.constants.gamma_fb
    grid = solve_matrix_exp(vp, "first_best", times)
    m_fb = math.log1p(vp.sigma * gamma_fb / vp.k) / gamma_fb
    policy = _finish_policy(
        "first_best", vp, grid, 0.0, m_fb - vp.c, m_fb - vp.c,
        vp.sigma / vp.k, 0.0, False, 0.0,
    )
    # v = -u^{-sigma*eta/k}, so log(-v0) = -(sigma*eta/k) log u(0, q0)
    log_neg_v0 = -(vp.sigma * vp.eta / vp.k) * float(grid.log_u_at(0.0)[grid.q_index(q0)])
    log_lambda_star = math.log(vp.eta / vp.gamma) + (1.0 + vp.eta / vp.gamma) * (
        log_neg_v0 - log_neg_R
    )
    return FirstBestSolution(
        gamma_fb=gamma_fb,
        grid=grid,
        policy=policy,
        log_neg_R=float(log_neg_R),
        log_neg_v0=log_neg_v0,
        log_lambda_star=float(log_lambda_star),
        q0=q0,
    )


@dataclass(frozen=True)
class AccrualState:
    """Running contract value Y_t and the time it was last updated."""

    y: float
    last_t: float


@dataclass(frozen=True)
class FillEvent:
    """One accrual step: a time interval, the price increment over it, and
    at most one fill at its end."""

    dt: float
    dS: float
    ask_fill: bool = False
    bid_fill: bool = False


def accrue(state: AccrualState, policy: ContractPolicy, event: FillEvent, q: int) -> AccrualState:
    """Advance Y over one step: dY = Z^S dS + (gamma sigma^2 (Z^S+q)^2 / 2
    - H(Z, q)) dt, plus Z^a / Z^b at a fill.

    The drift is integrated with composite Simpson on four subintervals
    (same order as the solver's one-step scheme).
    """
    if not policy.has_contract:
        raise SolverError(f"policy regime {policy.regime!r} carries no contract")
    if event.ask_fill and event.bid_fill:
        raise ValueError("no simultaneous double jump")
    vp = policy.vp
    if event.ask_fill and q <= -vp.q_bar:
        raise ValueError(f"ask fill impossible at q={q}")
    if event.bid_fill and q >= vp.q_bar:
        raise ValueError(f"bid fill impossible at q={q}")

    t0, t1 = state.last_t, state.last_t + event.dt
    zs = policy.zs_coef * q

    def drift(t):
        za = policy.z_a(t, q)
        zb = policy.z_b(t, q)
        h = hamiltonian((zs, 0.0 if za is None else za, 0.0 if zb is None else zb), q, vp)
        return 0.5 * vp.gamma * vp.sigma**2 * (zs + q) ** 2 - h

    h4 = event.dt / 4.0
    nodes = [drift(t0 + h4 * i) for i in range(5)]
    integral = (h4 / 3.0) * (nodes[0] + 4 * nodes[1] + 2 * nodes[2] + 4 * nodes[3] + nodes[4])

    y = state.y + zs * event.dS + integral
    if event.ask_fill:
        y += policy.z_a(t1, q)
    if event.bid_fill:
        y += policy.z_b(t1, q)
    return AccrualState(y=y, last_t=t1)


def reservation_y0(R: float, vp: ValidatedParams) -> float:
    """Initial transfer making the participation constraint bind:
    -(1/gamma) log(-R)."""
    if not R < 0.0:
        raise ValueError(f"reservation utility must be negative (got {R})")
    return -math.log(-R) / vp.gamma


def indifference_y0(
    benchmark_grid: ValueGrid, vp: ValidatedParams, q0: int = 0,
    convention: str = "k_over_sigma",
) -> float:
    """Transfer under which the market maker is indifferent to contracting.

    convention="k_over_sigma" returns (k/sigma) log u_bench(0, q0);
    convention="sigma_over_k" uses the exponent of the agent-side value
    transformation instead.  The two coincide whenever k = sigma, as in
    the standard parameter set.
    """
    _require_regime(benchmark_grid, "benchmark")
    log_u0 = float(benchmark_grid.log_u_at(0.0)[benchmark_grid.q_index(q0)])
    if convention == "k_over_sigma":
        return (vp.k / vp.sigma) * log_u0
    if convention == "sigma_over_k":
        return (vp.sigma / vp.k) * log_u0
    raise ValueError(f"unknown convention {convention!r}")


@dataclass(frozen=True)
class FeeSuggestion:
    exact: float
    approx: float


def taker_fee_heuristic(vp: ValidatedParams, target_spread: float) -> FeeSuggestion:
    """Taker fee making the observed total spread land near target_spread:
    exact expression and its small-(sigma gamma/k) simplification
    sigma/k - target/2."""
    if not target_spread > 0.0:
        raise ValueError(f"target_spread must be positive (got {target_spread})")
    exact = (
        -0.5 * target_spread
        - math.log(_shrink(vp)) / vp.eta
        + vp.log_one_plus_sg_k
    )
    return FeeSuggestion(exact=exact, approx=vp.sigma / vp.k - 0.5 * target_spread)


def write_policy_csv(policy: ContractPolicy, path) -> None:
    """Rows t, q, zS, za, zb, ask_spread, bid_spread; absent sides and
    absent coefficients are empty fields."""
    vp = policy.vp
    qs = np.arange(-vp.q_bar, vp.q_bar + 1)

    def cell(x):
        return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))

    with open(path, "w") as fh:
        fh.write(
            f"# regime={policy.regime} y0={policy.y0!r} n_exchanges={policy.n_exchanges}"
            f" q_bar={vp.q_bar} T={vp.T}\n"
        )
        fh.write("t,q,zS,za,zb,ask_spread,bid_spread\n")
        for i, t in enumerate(policy.lattice_times):
            for j, q in enumerate(qs):
                ask = float(policy.ask_lattice[i, j])
                bid = float(policy.bid_lattice[i, j])
                zs = policy.zs_coef * q if policy.has_contract else None
                za = policy.m_const - ask if policy.has_contract and not math.isnan(ask) else None
                zb = policy.m_const - bid if policy.has_contract and not math.isnan(bid) else None
                fh.write(
                    f"{float(t)!r},{int(q)},{cell(zs)},{cell(za)},{cell(zb)},"
                    f"{cell(ask)},{cell(bid)}\n"
                )
